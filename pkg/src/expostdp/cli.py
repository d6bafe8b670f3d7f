"""Command line interface: ``expostdp {convert,calibrate,verify,run}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .accounting import parse_schedule, rdp_to_adp
from .composition import GaussianCheckConfig, svt_calibrate
from .mechanisms import load_mechanism
from .verification import (
    expost_rdp_lhs_exact,
    is_probabilistic_expost_private,
    probabilistic_expost_violation_mass,
)

DEFAULT_SCHEDULE = "0.01:1:7"

RUN_HELP = """\
Run the accuracy-first synthetic data experiment.

Without --data a built-in generated dataset is used. Without --threshold the
threshold is re-derived on this pipeline as the midpoint between the
non-private validation accuracy (synthetic data from exact marginals) and the
mean validation accuracy at the lowest budget of the schedule.
"""


def read_config(path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment. Keys use dashes or underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Fill options not given on the command line from ``--config``."""
    if not getattr(args, "config", None):
        return args
    cfg = read_config(args.config)
    defaults = {a.dest: a for a in parser._actions}
    for key, value in cfg.items():
        if key not in defaults or key == "config":
            parser.error(f"unknown config key {key!r}")
        action = defaults[key]
        if getattr(args, key) != action.default:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            setattr(args, key, value.lower() in ("1", "true", "yes", "on"))
        else:
            setattr(args, key, action.type(value) if action.type else value)
    return args


def cmd_convert(args) -> int:
    eps_values = parse_schedule(args.eps) if args.eps else parse_schedule(args.schedule)
    out = sys.stdout
    out.write(f"rdp_epsilon_alpha_{args.alpha:g},adp_epsilon_delta_{args.delta:g}\n")
    for e in eps_values:
        adp, _ = rdp_to_adp(args.alpha, e, args.delta)
        out.write(f"{e:.6f},{adp:.6f}\n")
    return 0


def cmd_calibrate(args) -> int:
    delta_acc = 1.0 / args.n_validation
    g = GaussianCheckConfig(args.alpha, delta_acc, args.m, args.eps_check, 0.0)
    svt = svt_calibrate(args.alpha, delta_acc, args.eps_check)
    print(f"delta_acc = {delta_acc:.10g}")
    print(f"gaussian_check_variance = {g.variance:.10g}")
    print(f"gaussian_check_std = {math.sqrt(g.variance):.10g}")
    print(f"svt_sigma1 = {svt.sigma1:.10g}")
    print(f"svt_sigma2 = {svt.sigma2:.10g}")
    print(f"svt_t = {svt.t_split:.10g}")
    print(f"svt_eps1 = {svt.eps_gaussian:.10g}")
    print(f"svt_eps2 = {svt.eps_laplace:.10g}")
    print(f"svt_total_variance = {svt.total_variance:.10g}")
    return 0


def cmd_verify(args) -> int:
    mech = load_mechanism(args.mechanism)
    alphas = [float(a) for a in args.alpha.split(",")]
    ok = True
    print(f"outcomes = {len(mech)}")
    for a in alphas:
        fwd = expost_rdp_lhs_exact(mech, a).lhs
        bwd = expost_rdp_lhs_exact(mech.swapped(), a).lhs
        passed = fwd <= 1 and bwd <= 1
        ok &= passed
        print(f"alpha={a:g} lhs(X,X')={fwd:.12g} lhs(X',X)={bwd:.12g} "
              f"ex-post-rdp={'PASS' if passed else 'FAIL'}")
    v_fwd = probabilistic_expost_violation_mass(mech)
    v_bwd = probabilistic_expost_violation_mass(mech.swapped())
    passed = is_probabilistic_expost_private(mech, args.delta)
    print(f"violation_mass(X,X')={v_fwd:.12g} violation_mass(X',X)={v_bwd:.12g}")
    print(f"probabilistic-ex-post(delta={args.delta:g})={'PASS' if passed else 'FAIL'}")
    pure = is_probabilistic_expost_private(mech, 0.0)
    print(f"pure-ex-post={'PASS' if pure else 'FAIL'}")
    return 0 if ok else 1


def cmd_run(args) -> int:
    from .pipeline.data import generate_dataset, load_and_discretize
    from .pipeline.experiment import ExperimentConfig, records_to_csv, run_experiment

    dataset = load_and_discretize(args.data) if args.data else generate_dataset()
    cfg = ExperimentConfig(
        alpha=args.alpha,
        eps_query=args.eps_query,
        eps_check=args.eps_check,
        schedule=parse_schedule(args.schedule),
        threshold=args.threshold,
        repeats=args.repeats,
        checker=args.checker,
        seed=args.seed,
        synth_repeats=args.synth_repeats,
        trace=not args.no_trace,
    )
    text = records_to_csv(run_experiment(cfg, dataset))
    if args.out:
        Path(args.out).write_text(text)
        logging.getLogger(__name__).info("wrote %s (threshold %.6f)", args.out, cfg.threshold)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="expostdp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("convert", help="RDP to approximate DP conversion table (CSV)")
    p.add_argument("--alpha", type=float, default=20.0)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--eps", type=str, default=None, help="comma-separated RDP epsilons")
    p.add_argument("--schedule", type=str, default=DEFAULT_SCHEDULE, help="lo:hi:m log-spaced grid")
    p.add_argument("--config", type=str, default=None, help="key=value file")
    p.set_defaults(func=cmd_convert)
    subs["convert"] = p

    p = sub.add_parser("calibrate", help="noise levels of the accuracy checks")
    p.add_argument("--alpha", type=float, default=20.0)
    p.add_argument("--n-validation", type=int, default=18089)
    p.add_argument("--eps-check", type=float, default=0.01)
    p.add_argument("--m", type=int, default=7, help="number of candidate budgets")
    p.set_defaults(func=cmd_calibrate)
    subs["calibrate"] = p

    p = sub.add_parser("verify", help="check a finite mechanism file")
    p.add_argument("mechanism", help="file with lines: label, p_X, p_X', eps")
    p.add_argument("--alpha", type=str, default="2,20", help="comma-separated Rényi orders")
    p.add_argument("--delta", type=float, default=0.0)
    p.set_defaults(func=cmd_verify)
    subs["verify"] = p

    p = sub.add_parser("run", help="accuracy-first experiment", description=RUN_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data", type=str, default=None, help="Adult CSV (default: generated data)")
    p.add_argument("--alpha", type=float, default=20.0)
    p.add_argument("--eps-query", type=float, default=0.01)
    p.add_argument("--eps-check", type=float, default=0.01)
    p.add_argument("--schedule", type=str, default=DEFAULT_SCHEDULE)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--checker", choices=["gaussian", "svt"], default="gaussian")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--synth-repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-trace", action="store_true", help="skip evaluating unreleased steps")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--config", type=str, default=None, help="key=value file, overridden by flags")
    p.set_defaults(func=cmd_run)
    subs["run"] = p
    return parser, subs


def main(argv=None) -> int:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args = _apply_config(args, subs[args.command])
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
