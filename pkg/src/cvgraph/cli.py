"""Command-line entry point: ``python -m cvgraph <command> ...``.

Commands::

    simulate --config FILE
    theory --model SPEC --n N --reps R --out CSV
    nongaussian --dist NAME --n N[,N...] --p P --s S --reps R --out CSV
    sweep-sparsity --p P --s-list S,... --n-list N,... --reps R --out CSV

``--seed``, ``--threads`` and ``--wall-time`` are accepted before or after
the command name. On ``simulate`` they override the config file.
"""

import argparse
import math
import sys

from . import __version__
from .harness import (load_config, nongaussian_experiment, run_experiment,
                      sparsity_sweep, summarize)
from .selection import CRITERIA
from .theory import parse_model_spec, run_theory


def _ints(text):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers, got %r" % text)
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _criteria(text):
    vals = [x.strip() for x in text.split(",") if x.strip()]
    bad = [v for v in vals if v not in CRITERIA]
    if bad or not vals:
        raise argparse.ArgumentTypeError("criteria must come from %s" % ", ".join(CRITERIA))
    return tuple(vals)


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive, got %s" % text)
        return v
    return parse


def _global_flags(suppress):
    p = argparse.ArgumentParser(add_help=False)
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--seed", type=int, help="base random seed", **kw)
    p.add_argument("--threads", type=_positive(int), help="worker threads", **kw)
    p.add_argument("--wall-time", type=_positive(float), dest="wall_time",
                   help="deadline in seconds per cell (checked between repetitions)", **kw)
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cvgraph", parents=[_global_flags(False)],
        description="Lasso structure learning: penalty selection experiments and "
                    "numerical checks of the selection geometry.")
    parser.set_defaults(seed=None, threads=None, wall_time=None)
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)
    flags = _global_flags(True)

    sim = sub.add_parser("simulate", parents=[flags],
                         help="graph recovery grid from a key=value config file")
    sim.add_argument("--config", required=True, help="config file")
    sim.add_argument("--out", help="results CSV (overrides output_path)")

    th = sub.add_parser("theory", parents=[flags],
                        help="event log of the oracle-penalty geometry per repetition")
    th.add_argument("--model", required=True,
                    help="e.g. single_edge:p=10,rho=0.5 or neighborhood:p=6,s=2")
    th.add_argument("--n", type=_positive(int), required=True)
    th.add_argument("--reps", type=_positive(int), required=True)
    th.add_argument("--out", required=True)

    def planted_common(p):
        p.add_argument("--reps", type=_positive(int), required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--K", type=int, default=5, help="CV folds")
        p.add_argument("--gamma", type=float, default=0.5, help="EBIC gamma")
        p.add_argument("--grid-size", type=_positive(int), default=100)
        p.add_argument("--lambda-min-ratio", type=float, default=None,
                       help="grid floor relative to lambda_max (default 1e-4 if n > p "
                            "else 1e-2)")

    ng = sub.add_parser("nongaussian", parents=[flags],
                        help="Lasso support recovery with a non-Gaussian design")
    ng.add_argument("--dist", required=True, choices=("skew_normal", "log_normal", "gaussian"))
    ng.add_argument("--n", type=_ints, required=True, help="sample size(s), comma-separated")
    ng.add_argument("--p", type=_positive(int), required=True)
    ng.add_argument("--s", type=int, required=True)
    ng.add_argument("--criteria", type=_criteria, default=("cv", "ebic"))
    planted_common(ng)

    sw = sub.add_parser("sweep-sparsity", parents=[flags],
                        help="CV support recovery across planted sparsity levels")
    sw.add_argument("--p", type=_positive(int), required=True)
    sw.add_argument("--s-list", type=_ints, required=True)
    sw.add_argument("--n-list", type=_ints, required=True)
    sw.add_argument("--dist", default="gaussian",
                    choices=("skew_normal", "log_normal", "gaussian"))
    sw.add_argument("--criteria", type=_criteria, default=("cv",))
    planted_common(sw)
    return parser


def _print_summary(records, out):
    for key, v in sorted(summarize(records).items()):
        fam, method, crit, p, n = key
        print("%-12s %-6s %-6s p=%-4d n=%-6d shd=%.3f tpr=%.3f fdr=%.4f timeouts=%d"
              % (fam, method, crit, p, n, v["shd_mean"], v["tpr_mean"], v["fdr_mean"],
                 v["missing"]), file=out)


def _simulate(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.wall_time is not None:
        changes["wall_time_budget"] = args.wall_time
    if args.out:
        changes["output_path"] = args.out
    cfg = cfg.replace(**changes)
    records = run_experiment(cfg)
    _print_summary(records, sys.stdout)
    print("wrote %s" % cfg.output_path)
    return 0


def _theory(args):
    model = parse_model_spec(args.model)
    events = run_theory(model, args.n, args.reps, base_seed=args.seed or 0, out=args.out,
                        threads=args.threads or 1,
                        wall_time=args.wall_time or math.inf,
                        meta=["model=%s" % args.model])
    cases = {}
    for ev in events:
        cases[ev.case] = cases.get(ev.case, 0) + 1
    print("reps=%d completed=%d cases: %s" % (args.reps, len(events), ", ".join(
        "%s=%d" % kv for kv in sorted(cases.items()))))
    print("wrote %s" % args.out)
    return 0 if len(events) == args.reps else 3


def _planted_kwargs(args):
    return dict(seed=args.seed or 0, criteria=args.criteria, K=args.K, gamma=args.gamma,
                grid_size=args.grid_size, out=args.out, threads=args.threads or 1,
                lambda_min_ratio=args.lambda_min_ratio,
                wall_time=args.wall_time or math.inf)


def _nongaussian(args):
    records = nongaussian_experiment(args.dist, args.n, args.p, args.s, args.reps,
                                     **_planted_kwargs(args))
    _print_summary(records, sys.stdout)
    print("wrote %s" % args.out)
    return 0


def _sweep(args):
    records = sparsity_sweep(args.p, args.s_list, args.n_list, args.reps, dist=args.dist,
                             **_planted_kwargs(args))
    _print_summary(records, sys.stdout)
    print("wrote %s" % args.out)
    return 0


COMMANDS = {"simulate": _simulate, "theory": _theory, "nongaussian": _nongaussian,
            "sweep-sparsity": _sweep}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print("cvgraph: error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
