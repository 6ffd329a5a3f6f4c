"""Command-line entry point.

Subcommands:
  train        run one training job from a key=value config file
  grid         cross-product sweep over comma-separated config values x seeds
  verify       self-contained pass/fail oracles (moments | zeta | gradcheck)
  analyze-zeta tabulate the rate-division cost curve J(zeta) to CSV

Verdict lines are machine readable: every check prints
``check=<name> ... verdict=PASS|FAIL`` and the process exits nonzero iff
any check failed.
"""

from __future__ import annotations

import argparse
import sys

from .agnostic import mean_t, var_t
from .analysis import argmin_J, cost_J, cost_curve, gradient_check, moment_grid, write_cost_csv
from .harness import config_from_mapping, parse_config_file, run_grid, run_training, summary_line
from .nets import DenseNet
from .vectors import make_rng

MOMENT_ALPHAS = (0.01, 0.1, 0.25)
MOMENT_DS = (10, 100, 1000)
MOMENT_TS = (2, 10, 100)

ZETA_CCONSTS = (1e-3, 1e-2, 1e-1)
ZETA_PINNED = ((2.0, 0.20757), (4.0, 0.16155))

GRADCHECK_SHAPES = (("m0_small", (12, 10)), ("m2_small", (9, 8, 6, 5)))
GRADCHECK_TOL = 1e-6


def _verdict(ok):
    return "PASS" if ok else "FAIL"


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise SystemExit(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def cmd_train(args):
    mapping = parse_config_file(args.config)
    overrides = _parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out_dir"] = args.out
    config = config_from_mapping(mapping, overrides)
    record = run_training(config)
    print(summary_line(record.summary))
    return 0


def cmd_grid(args):
    mapping = parse_config_file(args.spec)
    n_seeds = args.seeds if args.seeds is not None else int(mapping.get("seeds", 1))
    if n_seeds < 1:
        raise SystemExit(f"--seeds must be >= 1, got {n_seeds}")
    _, report = run_grid(mapping, seeds=range(n_seeds), jobs=args.jobs, out_root=args.out or "")
    for line in report:
        print(line)
    return 0


def verify_moments(n_reps=10_000, seed=0):
    """Monte Carlo check of the reference walk moments on the 27-cell grid,
    plus the exact t=1 identities. Emits one verdict line per check."""
    lines = []
    failures = 0

    for alpha in MOMENT_ALPHAS:
        ok = mean_t(alpha, 1) == alpha * alpha
        failures += not ok
        lines.append(f"check=mean_exact_t1 alpha={alpha} verdict={_verdict(ok)}")
    for alpha in MOMENT_ALPHAS:
        for d in MOMENT_DS:
            ok = var_t(alpha, d, 1) == 0.0
            failures += not ok
            lines.append(f"check=var_exact_t1 alpha={alpha} d={d} verdict={_verdict(ok)}")

    rows = moment_grid(MOMENT_ALPHAS, MOMENT_DS, MOMENT_TS, n_reps=n_reps, seed=seed)
    for est, mean_c, var_c in rows:
        mean_ok = abs(est.mean_est - mean_c) <= 4.0 * est.stderr_mean
        var_ok = abs(est.var_est / var_c - 1.0) <= 0.10
        failures += not (mean_ok and var_ok)
        lines.append(
            f"check=moments alpha={est.alpha} d={est.d} t={est.t}"
            f" mean_err={abs(est.mean_est - mean_c):.3e} stderr={est.stderr_mean:.3e}"
            f" var_ratio={est.var_est / var_c:.4f}"
            f" verdict={_verdict(mean_ok and var_ok)}"
        )
    return lines, failures


def verify_zeta():
    """Cost-curve checks: argmin location per cost constant and two pinned
    values of J at c_const=0.01."""
    lines = []
    failures = 0
    for c_const in ZETA_CCONSTS:
        zeta_star, _ = argmin_J(c_const)
        ok = 3.0 < zeta_star < 5.0
        failures += not ok
        lines.append(f"check=zeta_argmin cconst={c_const} zeta_star={zeta_star:.4f} verdict={_verdict(ok)}")
    for zeta, pinned in ZETA_PINNED:
        value = cost_J(zeta, 0.01)
        ok = abs(value - pinned) <= 1e-4
        failures += not ok
        lines.append(
            f"check=zeta_value zeta={zeta} J={value:.6f} expected={pinned} verdict={_verdict(ok)}"
        )
    ok = cost_J(4.0, 0.01) < cost_J(2.0, 0.01)
    failures += not ok
    lines.append(f"check=zeta_order J(4)<J(2) at cconst=0.01 verdict={_verdict(ok)}")
    return lines, failures


def verify_gradcheck(seeds=(0, 1, 2)):
    """Backprop vs central finite differences on small random instances of
    both network registers (softmax regression and the two-hidden-layer net)."""
    lines = []
    failures = 0
    for name, sizes in GRADCHECK_SHAPES:
        net = DenseNet(sizes)
        for seed in seeds:
            rel_err = gradient_check(net, make_rng(seed))
            ok = rel_err < GRADCHECK_TOL
            failures += not ok
            lines.append(
                f"check=gradcheck net={name} seed={seed} rel_err={rel_err:.3e} verdict={_verdict(ok)}"
            )
    return lines, failures


VERIFIERS = {"moments": verify_moments, "zeta": verify_zeta, "gradcheck": verify_gradcheck}


def cmd_verify(args):
    lines, failures = VERIFIERS[args.kind]()
    for line in lines:
        print(line)
    total = len(lines)
    print(f"verify {args.kind}: passed={total - failures}/{total} verdict={_verdict(failures == 0)}")
    return 1 if failures else 0


def cmd_analyze_zeta(args):
    curve = cost_curve(args.cconst)
    write_cost_csv(curve, args.out)
    print(f"cconst={curve.c_const} zeta_star={curve.zeta_star:.6f} j_star={curve.j_star:.6f} out={args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="salera", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training job from a config file")
    p_train.add_argument("--config", required=True, help="key=value config file")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument("--out", default=None, help="override the output directory")
    p_train.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override any config key (repeatable)"
    )
    p_train.set_defaults(func=cmd_train)

    p_grid = sub.add_parser("grid", help="run a seed-replicated sweep from a grid spec file")
    p_grid.add_argument("--spec", required=True, help="config file; comma-separated values form axes")
    p_grid.add_argument("--seeds", type=int, default=None, help="seeds 0..K-1 per cell (default from spec, else 1)")
    p_grid.add_argument("--jobs", type=int, default=1, help="parallel worker processes across cells")
    p_grid.add_argument("--out", default=None, help="root directory for per-run and aggregate outputs")
    p_grid.set_defaults(func=cmd_grid)

    p_verify = sub.add_parser("verify", help="run a built-in verification suite")
    p_verify.add_argument("kind", choices=sorted(VERIFIERS))
    p_verify.set_defaults(func=cmd_verify)

    p_zeta = sub.add_parser("analyze-zeta", help="tabulate the rate-division cost curve")
    p_zeta.add_argument("--cconst", type=float, required=True, help="per-division cost constant")
    p_zeta.add_argument("--out", required=True, help="CSV output path")
    p_zeta.set_defaults(func=cmd_analyze_zeta)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
