"""Command-line interface.

Subcommands: gen (emit an instance file), run (single simulation to a
trace CSV), compare (experiment grid to a results CSV), bounds (print
every computable rate constant), pe-check (certify a schedule's
persistent excitation).
"""

import argparse
import sys

import numpy as np

from .compression import Compressor, verify_pe_ct, verify_pe_dt
from .errors import PEVerificationFailed
from .harness import (ExperimentSpec, instance_from_config, load_instance,
                      parse_config, runconfig_from_config,
                      run_experiment, save_instance, schedule_from_config,
                      serialize, gen_instance)
from .linalg import spectral_constants
from .theory import (RateConstants, consensus_rate, dt_stepsize_and_rate,
                     lemma1_constants, observability_gram, solver_ct_rate)
from .dynamics import run_simulation


def _float_list(text):
    return [float(tok) for tok in text.replace(",", " ").split()]


def _int_list(text):
    return [int(tok) for tok in text.replace(",", " ").split()]


def _cmd_gen(args):
    inst = gen_instance(args.n, args.m, _float_list(args.v_star),
                        graph_kind=args.graph, seed=args.seed, weight=args.weight)
    save_instance(inst, args.out)
    print(f"wrote instance n={inst.n} m={inst.m} seed={inst.seed} to {args.out}")
    return 0


def _cmd_run(args):
    cfg = parse_config(args.config)
    inst = load_instance(args.instance) if args.instance else instance_from_config(cfg)
    schedule = schedule_from_config(cfg)
    run_cfg = runconfig_from_config(cfg, args.mode)
    trace = run_simulation(inst, schedule, run_cfg, args.mode)
    serialize(trace, args.out)
    status = (f"converged at {trace.hit_clock}" if trace.converged
              else f"not converged (final err {trace.final_err:.3e})")
    print(f"{status}; {len(trace)} rows -> {args.out}")
    return 0


def _cmd_compare(args):
    cfg = parse_config(args.config)
    schedule = schedule_from_config(cfg)
    run_cfg = runconfig_from_config(cfg, args.mode)
    compressors = []
    for kind in args.compressors.split(","):
        kind = kind.strip()
        l = int(cfg["compressor.l"]) if "compressor.l" in cfg else 2
        k = int(cfg["compressor.k"]) if "compressor.k" in cfg else 2
        compressors.append(Compressor(kind, l=l if kind == "unbiased" else None,
                                      k=k if kind == "topk" else None))
    spec = ExperimentSpec(
        schedule=schedule, mode=args.mode,
        n=int(cfg.get("graph.n", 10)), m=int(cfg.get("instance.m", 5)),
        v_star=tuple(_float_list(cfg.get("instance.v_star", "2 1 3 4 -1"))),
        graph_kind=cfg.get("graph.kind", "cycle"),
        weight=float(cfg.get("graph.weight", 1.0)),
        h=run_cfg.h,
        s_values=tuple(_float_list(args.s_list)) if args.s_list else (run_cfg.s,),
        seeds=tuple(_int_list(args.seeds)),
        compressors=tuple(compressors),
        tol=run_cfg.tol, horizon=run_cfg.horizon, dt_int=run_cfg.dt_int,
        record_every=args.record_every,
    )
    rows = run_experiment(spec)
    serialize(rows, args.out)
    print(f"{len(rows)} result rows -> {args.out}")
    return 0


def _cmd_bounds(args):
    cfg = parse_config(args.config)
    inst = instance_from_config(cfg)
    schedule = schedule_from_config(cfg)
    if schedule.kind == "identity":
        print("bounds need a unit-vector schedule (identity carries no excitation window)",
              file=sys.stderr)
        return 2
    h = float(cfg.get("run.h", 0.2))
    s = float(cfg.get("run.s", 0.02))
    spec = inst.spectrum
    sc = spectral_constants(inst.H)

    values = {}
    if schedule.kind == "trigonometric":
        T = 2 * np.pi / min(schedule.frequencies)
    else:
        T = schedule.period_steps * schedule.dwell
    witness = verify_pe_ct(schedule, T)
    gamma, c = consensus_rate(witness.alpha, T, spec.lambda2, spec.lambda_n)
    k_x, gamma_x = lemma1_constants(witness.alpha * spec.lambda2, T, spec.lambda_n)
    gamma_f, alpha_bar, alpha_prime = solver_ct_rate(
        witness.alpha, T, spec.lambda2, spec.lambda_n, sc.rho_m, sc.h_M, s)
    values.update(gamma=gamma, c=c, gamma_f=gamma_f, alpha_bar=alpha_bar,
                  alpha_prime=alpha_prime, k_x=k_x, gamma_x=gamma_x)

    if schedule.kind in ("cyclic-basis", "table") and schedule.period_steps >= schedule.m:
        K = schedule.period_steps
        _, g = observability_gram(spec, schedule, h, 0, K)
        if g > 0:
            s_star, _, _ = dt_stepsize_and_rate(g, K, sc.h_M, sc.rho_m)
            values.update(g=g, s_star=s_star)
            if 0 < s < s_star:
                _, beta, gamma_d = dt_stepsize_and_rate(g, K, sc.h_M, sc.rho_m, s)
                values.update(beta=beta, gamma_d=gamma_d)

    constants = RateConstants(**values)
    listing = constants.as_dict()
    for key, val in listing.items():
        print(f"{key} = {val!r}")
    print(",".join(listing))
    print(",".join(repr(float(v)) for v in listing.values()))
    return 0


def _cmd_pe_check(args):
    cfg = parse_config(args.config)
    schedule = schedule_from_config(cfg)
    try:
        if args.domain == "ct":
            witness = verify_pe_ct(schedule, args.window, args.starts or 8)
        else:
            witness = verify_pe_dt(schedule, int(args.window), args.starts)
    except PEVerificationFailed as exc:
        print(f"FAIL: {exc}")
        if exc.eigenvalues is not None:
            print("gram eigenvalues:", " ".join(f"{v:.3e}" for v in exc.eigenvalues))
        return 1
    print(f"PE witness: alpha={witness.alpha!r} window={witness.window!r}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="scalareq",
        description="Distributed network linear-equation solvers with "
                    "scalarized communication compression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate and save a problem instance")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--v-star", default="2,1,3,4,-1")
    p.add_argument("--graph", default="cycle", choices=["cycle", "path", "complete"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weight", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="run one simulation and write its trace CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True, choices=["ct", "dt"])
    p.add_argument("--instance", help="instance file (defaults to config-driven generation)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run an experiment grid and write results CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True, choices=["ct", "dt"])
    p.add_argument("--compressors", default="scalarized,none")
    p.add_argument("--s-list", default="")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("bounds", help="print rate constants for a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("pe-check", help="verify persistent excitation of a schedule")
    p.add_argument("--config", required=True)
    p.add_argument("--domain", default="ct", choices=["ct", "dt"])
    p.add_argument("--window", type=float, required=True)
    p.add_argument("--starts", type=int)
    p.set_defaults(func=_cmd_pe_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
