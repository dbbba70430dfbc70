"""Small dense real linear algebra.

Symmetric eigendecomposition by cyclic Jacobi rotations, least squares
via the normal equations, rank/consistency verification for stacked
linear systems, and the two spectral constants of the data matrix
(rho_m, h_M) that drive every solver rate bound downstream.

Dimensions here are small (tens, at most a few hundred), so a dense
dependency-free eigensolver is deliberate.
"""

from dataclasses import dataclass

import numpy as np

from .errors import JacobiConvergenceError, RankDeficientError

SYMMETRY_TOL = 1e-10
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100
RANK_TOL = 1e-8
COND_LIMIT = 1e12


@dataclass(frozen=True)
class SpectralConstants:
    """Spectral constants of an n x m data matrix H.

    rho_m: smallest eigenvalue of H^T H divided by n (positive iff H has
        full column rank).
    h_M: largest Euclidean row norm of H.
    """

    rho_m: float
    h_M: float


def sym_eig(A, offdiag_tol=OFFDIAG_TOL, max_sweeps=MAX_SWEEPS):
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi.

    Rotations sweep all (p, q) pairs until the largest off-diagonal
    magnitude drops below ``offdiag_tol`` (scaled by the matrix
    magnitude so the stopping rule is size-coherent), capped at
    ``max_sweeps`` sweeps.

    Args:
        A: symmetric matrix, shape (d, d); asymmetry above 1e-10
           (relative to the largest entry) is rejected.

    Returns:
        (eigenvalues, eigenvectors): eigenvalues ascending, eigenvector
        columns orthonormal, A @ Q = Q @ diag(eigenvalues).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    d = A.shape[0]
    scale = max(1.0, float(np.abs(A).max()))
    if float(np.abs(A - A.T).max()) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")

    B = 0.5 * (A + A.T)
    Q = np.eye(d)
    if d == 1:
        return B.diagonal().copy(), Q

    thresh = offdiag_tol * scale
    off_mask = ~np.eye(d, dtype=bool)
    converged = False
    for _ in range(max_sweeps):
        if float(np.abs(B[off_mask]).max()) < thresh:
            converged = True
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = B[p, q]
                if abs(apq) < 1e-3 * thresh:
                    continue
                theta = (B[q, q] - B[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta)) if theta != 0.0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                bp, bq = B[:, p].copy(), B[:, q].copy()
                B[:, p] = c * bp - s * bq
                B[:, q] = s * bp + c * bq
                bp, bq = B[p, :].copy(), B[q, :].copy()
                B[p, :] = c * bp - s * bq
                B[q, :] = s * bp + c * bq
                B[p, q] = B[q, p] = 0.0
                qp, qq = Q[:, p].copy(), Q[:, q].copy()
                Q[:, p] = c * qp - s * qq
                Q[:, q] = s * qp + c * qq
    else:
        converged = float(np.abs(B[off_mask]).max()) < thresh
    if not converged:
        raise JacobiConvergenceError(
            f"off-diagonal {float(np.abs(B[off_mask]).max()):.3e} above target "
            f"{thresh:.3e} after {max_sweeps} sweeps"
        )

    lam = B.diagonal().copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], Q[:, order]


def _gram_singular_values(M):
    """Singular values of M (ascending) via the eigenvalues of M^T M."""
    lam, _ = sym_eig(M.T @ M)
    return np.sqrt(np.clip(lam, 0.0, None))


def least_squares(H, b):
    """Least-squares solution of H v = b via the normal equations.

    Requires full column rank; the normal equations are solved with the
    Jacobi eigendecomposition of H^T H. For consistent systems the
    residual H v - b vanishes to the rank tolerance.

    Raises:
        RankDeficientError: rank-deficient H (message carries the
            smallest singular value) or condition number beyond 1e12.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    if H.ndim != 2 or b.shape != (H.shape[0],):
        raise ValueError(f"shape mismatch: H {H.shape}, b {b.shape}")
    lam, Q = sym_eig(H.T @ H)
    sig_min = float(np.sqrt(max(lam[0], 0.0)))
    sig_max = float(np.sqrt(max(lam[-1], 0.0)))
    if sig_min <= RANK_TOL * max(sig_max, 1.0):
        raise RankDeficientError(
            f"rank-deficient system: smallest singular value {sig_min:.3e}",
            sigma_min=sig_min,
        )
    if sig_max / sig_min > COND_LIMIT:
        raise RankDeficientError(
            f"condition number {sig_max / sig_min:.3e} beyond {COND_LIMIT:.0e}",
            sigma_min=sig_min,
        )
    return Q @ ((Q.T @ (H.T @ b)) / lam)


@dataclass(frozen=True)
class RankVerdict:
    """Outcome of the solvability check for a stacked system H v = b."""

    satisfied: bool
    reason: str
    sigma_m: float
    sigma_aug: float

    def __bool__(self):
        return self.satisfied


def rank_check(H, b, tol=RANK_TOL):
    """Verify rank(H) = rank([H b]) = m, i.e. the stacked system has a
    unique exact least-squares solution.

    The verdict holds iff the m-th singular value of H exceeds
    tol * sigma_max and the (m+1)-th singular value of [H b] stays below
    tol * sigma_max, with sigma_max the largest singular value of [H b].
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = H.shape
    if b.shape != (n,):
        raise ValueError(f"shape mismatch: H {H.shape}, b {b.shape}")
    if n < m or m < 1:
        raise ValueError(f"need n >= m >= 1, got n={n}, m={m}")
    sig_h = _gram_singular_values(H)
    sig_a = _gram_singular_values(np.column_stack([H, b]))
    sigma_m = float(sig_h[0])
    sigma_aug = float(sig_a[0])
    sigma_max = max(float(sig_a[-1]), 1e-300)
    if sigma_m <= tol * sigma_max:
        return RankVerdict(False, f"rank(H) < {m}: sigma_m = {sigma_m:.3e}", sigma_m, sigma_aug)
    if sigma_aug > tol * sigma_max:
        return RankVerdict(
            False,
            f"inconsistent augmentation: sigma_{m + 1}([H b]) = {sigma_aug:.3e}",
            sigma_m,
            sigma_aug,
        )
    return RankVerdict(True, "unique exact solution exists", sigma_m, sigma_aug)


def spectral_constants(H):
    """Compute rho_m = lambda_min(H^T H)/n and h_M = max_i ||H_i||.

    Raises:
        RankDeficientError: H is not full column rank.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    lam, _ = sym_eig(H.T @ H)
    if lam[0] <= (RANK_TOL**2) * max(lam[-1], 1.0):
        raise RankDeficientError(
            f"rank-deficient data matrix: smallest singular value "
            f"{np.sqrt(max(lam[0], 0.0)):.3e}",
            sigma_min=float(np.sqrt(max(lam[0], 0.0))),
        )
    return SpectralConstants(
        rho_m=float(lam[0]) / n,
        h_M=float(np.linalg.norm(H, axis=1).max()),
    )
