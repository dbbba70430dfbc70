"""Right-hand sides, steppers, and trace recording for the three dynamics:

- compressed consensus flow        dx/dt = -(L (x) C C^T) x
- continuous solver                dx_i/dt = sum_j a_ij C (y_j - y_i) - s H_i (H_i^T x_i - b_i)
- discrete solver                  x[k+1] = x[k] - h (L (x) C C^T) x[k] - s (H x[k] - B)

Node i transmits only the scalar y_i = C^T x_i in scalarized mode; the
baseline compressors transmit full (compressed) m-vectors instead.

Runs over piecewise-constant schedules use precomputed one-step linear
propagators (the degree-4 Taylor polynomial a classical RK4 step applies
to a constant-coefficient linear system), which keeps long horizon
experiments fast without changing the integration rule.
"""

from dataclasses import dataclass, field

import numpy as np

from .compression import Compressor, eval_ct, eval_dt
from .errors import SimulationDiverged

DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class NetworkState:
    """Stacked node states x in R^(n*m) plus a clock (time or step)."""

    x: np.ndarray
    clock: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1:
            raise ValueError(f"state must be a flat stacked vector, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("state has non-finite entries")
        object.__setattr__(self, "x", x)


@dataclass
class RunConfig:
    """Configuration of one simulation run.

    horizon is a maximum step count for discrete runs and a maximum time
    for continuous runs. tol is the accuracy target on the error metric
    ||x - 1 (x) v*|| / n. record_every thins trace rows (the hitting row
    is always recorded).
    """

    h: float = 0.2
    s: float = 0.02
    dt_int: float = 1e-3
    horizon: float = 10_000
    tol: float = 1e-2
    compressor: Compressor = field(default_factory=lambda: Compressor("scalarized"))
    seed: int = 0
    x0: np.ndarray | None = None
    record_every: int = 1

    def validate(self, schedule, mode, lambda_n=None):
        if self.tol <= 0 or self.dt_int <= 0 or self.horizon <= 0:
            raise ValueError("tol, dt_int and horizon must be positive")
        if self.s < 0:
            raise ValueError(f"need s >= 0, got {self.s}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.compressor.kind == "scalarized" and schedule.kind == "identity":
            raise ValueError("scalarized compression needs a unit-vector schedule")
        if mode == "dt":
            if self.h <= 0:
                raise ValueError(f"need h > 0, got {self.h}")
            if lambda_n is not None and self.h * lambda_n >= 2.0:
                raise ValueError(
                    f"stepsize h={self.h} violates h < 2/lambda_n = {2.0 / lambda_n:.6g}"
                )
        elif mode == "ct":
            if self.compressor.kind not in ("scalarized", "none"):
                raise ValueError(
                    "continuous runs support the scalarized or none compressors only"
                )
            if schedule.kind in ("cyclic-basis", "table") and self.compressor.kind == "scalarized":
                if schedule.dwell is None:
                    raise ValueError("continuous runs need a schedule dwell")
                ratio = schedule.dwell / self.dt_int
                if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0) or round(ratio) < 1:
                    raise ValueError(
                        f"dt_int={self.dt_int} must subdivide the schedule dwell "
                        f"{schedule.dwell}"
                    )
        else:
            raise ValueError(f"mode must be 'ct' or 'dt', got {mode!r}")


@dataclass
class Trace:
    """Per-step records of one run plus its outcome summary."""

    clock: np.ndarray
    err: np.ndarray
    disagreement: np.ndarray
    scalars_tx_cum: np.ndarray
    bits_tx_cum: np.ndarray
    converged: bool = False
    hit_clock: float | None = None
    final_err: float = np.nan
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("clock", "err", "disagreement"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("scalars_tx_cum", "bits_tx_cum"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if len(self.clock) > 1:
            if not np.all(np.diff(self.clock) > 0):
                raise ValueError("trace clocks must be strictly increasing")
            if np.any(np.diff(self.scalars_tx_cum) < 0) or np.any(np.diff(self.bits_tx_cum) < 0):
                raise ValueError("cumulative counters must be nondecreasing")

    def __len__(self):
        return len(self.clock)


@dataclass
class Trajectory:
    """Raw integrator output: states sampled every dt_int."""

    times: np.ndarray
    states: np.ndarray


def consensus_rhs(L, schedule, t, x):
    """Compressed consensus flow -(L (x) C(t) C(t)^T) x.

    Each node needs only the scalars y_j = C^T x_j from its neighbors.
    An identity schedule degenerates to plain consensus -(L (x) I) x.
    """
    n = L.shape[0]
    X = np.asarray(x, dtype=float).reshape(n, -1)
    if schedule.kind == "identity":
        dX = -(L @ X)
    else:
        C = eval_ct(schedule, t)
        y = X @ C
        dX = -np.outer(L @ y, C)
    return dX.reshape(-1)


def solver_ct_rhs(inst, schedule, s, t, x):
    """Continuous solver flow: compressed consensus plus the local
    projection -s H_i (H_i^T x_i - b_i). At s = 0 this is the consensus
    flow; at x = 1 (x) v* it vanishes identically."""
    H, b = inst.H, inst.b
    n, m = H.shape
    X = np.asarray(x, dtype=float).reshape(n, m)
    L = inst.spectrum.L if n >= 2 else inst.graph.laplacian()
    if schedule.kind == "identity":
        cons = -(L @ X)
    else:
        C = eval_ct(schedule, t)
        y = X @ C
        cons = -np.outer(L @ y, C)
    r = (X * H).sum(axis=1) - b
    return (cons - s * r[:, None] * H).reshape(-1)


def _rk4_step(rhs, t, x, dt, freeze):
    if freeze == "midpoint":
        tm = t + 0.5 * dt
        k1 = rhs(tm, x)
        k2 = rhs(tm, x + 0.5 * dt * k1)
        k3 = rhs(tm, x + 0.5 * dt * k2)
        k4 = rhs(tm, x + dt * k3)
    else:
        k1 = rhs(t, x)
        k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = rhs(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(rhs, x0, t0, t1, dt_int, freeze="stage"):
    """Classical fixed-step RK4 of dx/dt = rhs(t, x) over [t0, t1].

    dt_int must tile the interval. freeze='midpoint' evaluates all four
    stages at the step midpoint; use it for piecewise-constant-in-time
    systems whose switching instants land on step boundaries (the step
    then integrates each smooth piece at full order, since stepping a
    stage across a switch would degrade accuracy).

    Returns a :class:`Trajectory` sampled every dt_int.
    """
    if dt_int <= 0:
        raise ValueError(f"need dt_int > 0, got {dt_int}")
    span = t1 - t0
    if span <= 0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    N = round(span / dt_int)
    if N < 1 or abs(N * dt_int - span) > 1e-9 * max(span, 1.0):
        raise ValueError(f"dt_int={dt_int} does not tile [{t0}, {t1}]")
    if freeze not in ("stage", "midpoint"):
        raise ValueError(f"freeze must be 'stage' or 'midpoint', got {freeze!r}")
    x = np.array(x0, dtype=float)
    times = t0 + dt_int * np.arange(N + 1)
    states = np.empty((N + 1, x.size))
    states[0] = x
    for i in range(N):
        x = _rk4_step(rhs, t0 + i * dt_int, x, dt_int, freeze)
        nrm = float(np.linalg.norm(x))
        if not np.isfinite(nrm) or nrm > DIVERGENCE_GUARD:
            raise SimulationDiverged(
                f"state norm {nrm:.3e} beyond guard at t={times[i + 1]:.6g}",
                clock=float(times[i + 1]), norm=nrm,
            )
        states[i + 1] = x
    return Trajectory(times=times, states=states)


def solver_dt_step(inst, schedule, h, s, k, x, compressor=None, rng=None):
    """One step of the discrete solver at step index k.

    Scalarized mode is computed node by node from each node's own state
    plus one received scalar per neighbor, so the scalar-communication
    structure of the update is explicit in the code path. 'none'
    exchanges raw states; the baseline kinds substitute the compressed
    state vector for every transmitted state in the consensus term.
    """
    compressor = compressor or Compressor("scalarized")
    H, b = inst.H, inst.b
    n, m = H.shape
    if n >= 2:
        lambda_n = inst.spectrum.lambda_n
        if not 0.0 < h < 2.0 / lambda_n:
            raise ValueError(f"stepsize h={h} outside (0, {2.0 / lambda_n:.6g})")
    X = np.asarray(x, dtype=float).reshape(n, m)

    if compressor.kind == "scalarized":
        C = eval_dt(schedule, k)
        y = np.array([float(np.dot(X[i], C)) for i in range(n)])
        Xn = np.empty_like(X)
        for i in range(n):
            acc = 0.0
            for (j, w) in inst.graph.neighbors(i):
                acc += w * (y[j] - y[i])
            r_i = float(np.dot(H[i], X[i])) - b[i]
            Xn[i] = X[i] + (h * acc) * C - (s * r_i) * H[i]
        return Xn.reshape(-1)

    L = inst.spectrum.L if n >= 2 else inst.graph.laplacian()
    r = (X * H).sum(axis=1) - b
    if compressor.kind == "none":
        Q = X
    elif compressor.kind == "uniform":
        Q = np.floor(X + 0.5)
    else:
        # per-node application keeps the noise stream identical to
        # sequential node-order draws
        Q = np.stack([compressor.apply(X[i], rng=rng) for i in range(n)])
    return (X - h * (L @ Q) - s * r[:, None] * H).reshape(-1)


def _block_diag_outer(H):
    n, m = H.shape
    out = np.zeros((n * m, n * m))
    for i in range(n):
        out[i * m:(i + 1) * m, i * m:(i + 1) * m] = np.outer(H[i], H[i])
    return out


def _rk4_propagator(M, c, dt):
    """One-step affine propagator of dx/dt = -M x + c under classical RK4.

    Returns (R, w) with x_next = R x + w; R is the degree-4 Taylor
    polynomial of expm(-dt M), exactly what four RK4 stages compose to
    for a constant-coefficient linear system.
    """
    d = M.shape[0]
    B = -dt * M
    B2 = B @ B
    B3 = B2 @ B
    B4 = B3 @ B
    I = np.eye(d)
    R = I + B + B2 / 2.0 + B3 / 6.0 + B4 / 24.0
    S = I + B / 2.0 + B2 / 6.0 + B3 / 24.0
    return R, dt * (S @ c)


def _linear_dt_transitions(inst, schedule, h, s, compressor):
    """Per-period transition matrices for the linear discrete modes."""
    H, b = inst.H, inst.b
    n, m = H.shape
    L = inst.spectrum.L if n >= 2 else inst.graph.laplacian()
    Hblk = _block_diag_outer(H)
    w = s * (b[:, None] * H).reshape(-1)
    I = np.eye(n * m)
    if compressor.kind == "none":
        return [I - h * np.kron(L, np.eye(m)) - s * Hblk], w
    mats = []
    for j in range(schedule.period_steps):
        C = eval_dt(schedule, j)
        mats.append(I - h * np.kron(L, np.outer(C, C)) - s * Hblk)
    return mats, w


def _linear_ct_propagators(inst, schedule, s, dt_int, compressor):
    """Per-dwell RK4 propagators for the linear continuous modes."""
    H, b = inst.H, inst.b
    n, m = H.shape
    L = inst.spectrum.L if n >= 2 else inst.graph.laplacian()
    Hblk = _block_diag_outer(H)
    c = s * (b[:, None] * H).reshape(-1)
    if compressor.kind == "none":
        M = np.kron(L, np.eye(m)) + s * Hblk
        return [_rk4_propagator(M, c, dt_int)], 1
    props = []
    for j in range(schedule.period_steps):
        C = eval_ct(schedule, j * schedule.dwell)
        M = np.kron(L, np.outer(C, C)) + s * Hblk
        props.append(_rk4_propagator(M, c, dt_int))
    sub = round(schedule.dwell / dt_int)
    return props, sub


def _linear_path_applies(schedule, compressor):
    if compressor.kind == "none":
        return True
    return compressor.kind == "scalarized" and schedule.kind in ("cyclic-basis", "table")


def run_simulation(inst, schedule, cfg, mode):
    """Run one simulation to tolerance or horizon and record its Trace.

    The error metric is ||x - 1 (x) v*|| / n against the instance's
    planted solution; the run converges at the first clock where it
    drops to cfg.tol. Communication counters follow the harness
    accounting convention, with one exchange round per discrete step
    (dt) or per integrator step (ct).
    """
    from .harness import account  # accounting convention lives with the harness

    H = inst.H
    n, m = H.shape
    lambda_n = inst.spectrum.lambda_n if n >= 2 else None
    cfg.validate(schedule, mode, lambda_n)

    if cfg.x0 is not None:
        x = np.array(cfg.x0, dtype=float).reshape(n * m)
    else:
        x = np.random.default_rng([cfg.seed, 1]).standard_normal(n * m)
    noise_rng = np.random.default_rng([cfg.seed, 2])

    ref = np.tile(np.asarray(inst.v_star, dtype=float), n)
    links = 2 * len(inst.graph.edges)
    msg_scalars, msg_bits = account(cfg.compressor, m)

    clocks, errs, diss, scals, bits = [], [], [], [], []

    def record(clock, xv, rounds):
        X = xv.reshape(n, m)
        clocks.append(clock)
        errs.append(float(np.linalg.norm(xv - ref)) / n)
        diss.append(float(np.linalg.norm(X - X.mean(axis=0))))
        scals.append(rounds * links * msg_scalars)
        bits.append(rounds * links * msg_bits)

    def finish(converged, hit_clock, last_err):
        return Trace(
            clock=clocks, err=errs, disagreement=diss,
            scalars_tx_cum=scals, bits_tx_cum=bits,
            converged=converged, hit_clock=hit_clock, final_err=last_err,
            meta={
                "mode": mode, "h": cfg.h, "s": cfg.s, "dt_int": cfg.dt_int,
                "tol": cfg.tol, "horizon": cfg.horizon, "seed": cfg.seed,
                "compressor": cfg.compressor.label, "schedule": schedule.kind,
                "record_every": cfg.record_every,
            },
        )

    linear = _linear_path_applies(schedule, cfg.compressor)
    if mode == "dt":
        horizon = int(cfg.horizon)
        if linear:
            mats, wvec = _linear_dt_transitions(inst, schedule, cfg.h, cfg.s, cfg.compressor)
            period = len(mats)
            step = lambda xv, k: mats[k % period] @ xv + wvec
        else:
            step = lambda xv, k: solver_dt_step(
                inst, schedule, cfg.h, cfg.s, k, xv, cfg.compressor, rng=noise_rng
            )
        k = 0
        while True:
            err = float(np.linalg.norm(x - ref)) / n
            if err <= cfg.tol:
                record(k, x, k)
                return finish(True, k, err)
            if k >= horizon:
                if not clocks or clocks[-1] != k:
                    record(k, x, k)
                return finish(False, None, err)
            if k % cfg.record_every == 0:
                record(k, x, k)
            x = step(x, k)
            k += 1
            nrm = float(np.linalg.norm(x))
            if not np.isfinite(nrm) or nrm > DIVERGENCE_GUARD:
                raise SimulationDiverged(
                    f"state norm {nrm:.3e} beyond guard at step {k}", clock=k, norm=nrm
                )

    # continuous time
    N = int(np.ceil(cfg.horizon / cfg.dt_int - 1e-9))
    if linear:
        props, sub = _linear_ct_propagators(inst, schedule, cfg.s, cfg.dt_int, cfg.compressor)
        period = len(props)
    else:
        rhs = lambda t, xv: solver_ct_rhs(inst, schedule, cfg.s, t, xv)
    k = 0
    while True:
        t = k * cfg.dt_int
        err = float(np.linalg.norm(x - ref)) / n
        if err <= cfg.tol:
            record(t, x, k)
            return finish(True, t, err)
        if k >= N:
            if not clocks or clocks[-1] != t:
                record(t, x, k)
            return finish(False, None, err)
        if k % cfg.record_every == 0:
            record(t, x, k)
        if linear:
            R, w = props[(k // sub) % period]
            x = R @ x + w
        else:
            x = _rk4_step(rhs, t, x, cfg.dt_int, "stage")
        k += 1
        nrm = float(np.linalg.norm(x))
        if not np.isfinite(nrm) or nrm > DIVERGENCE_GUARD:
            raise SimulationDiverged(
                f"state norm {nrm:.3e} beyond guard at t={t + cfg.dt_int:.6g}",
                clock=t + cfg.dt_int, norm=nrm,
            )
