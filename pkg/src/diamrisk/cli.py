"""Command-line entry points.

Subcommands:
  run         full label-noise experiment from a JSON config
  rate        sup-gap quantiles vs sample size on a 1-D analytic loss
  confidence  excess-condition pass rates for level-set confidence regions
  landscape   neighborhood risk histogram around a saved checkpoint
  examples    per-trial ERM vs DRM generalization gaps on the 1-D losses

Exit codes: 0 success, 2 configuration/usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    confidence_region_check,
    erm_drm_gap_table,
    g17,
    landscape_histogram,
    rate_study,
    write_confidence_csv,
    write_hist_csv,
    write_rate_csv,
)
from .harness import (
    ConfigError,
    build_datasets,
    load_experiment_config,
    run_label_noise_experiment,
    worker_count,
)
from .losses import ReciprocalLoss, TentLoss
from .mlp import MlpLossModel
from .params import ParamVector


def _loss_from_args(args):
    if args.loss == "tent":
        return TentLoss(kappa=args.kappa, gamma_loss=args.gamma_loss)
    if args.loss == "reciprocal":
        return ReciprocalLoss()
    raise ConfigError(f"unknown loss {args.loss!r}")


def _default_interval(args) -> tuple[float, float]:
    if args.w_lo is not None and args.w_hi is not None:
        return (args.w_lo, args.w_hi)
    if args.loss == "tent":
        return (-2.0, 2.0)
    return (args.gamma, 2.0)  # keep the reciprocal window off the pole


def _cmd_run(args) -> int:
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        raw = dict(cfg.raw)
        for section in ("dataset", "mlp", "drm"):
            raw[section] = {**raw.get(section, {}), "seed": args.seed}
        from .harness import experiment_config_from_dict

        cfg = experiment_config_from_dict(raw)
    result = run_label_noise_experiment(cfg, out_dir=args.out)
    print(f"wrote artifacts to {result.out_dir}")
    print(
        f"erm: final test acc {result.erm.final_test_acc:.4f} "
        f"(peak {result.erm.peak_test_acc:.4f}), final train risk {result.erm.final_train_risk:.4f}"
    )
    print(
        f"drm: final test acc {result.drm.final_test_acc:.4f} "
        f"(peak {result.drm.peak_test_acc:.4f}), final train risk {result.drm.final_train_risk:.4f}"
    )
    print(
        f"flatness gaps: erm {result.flatness.erm_gap:.4f}, drm {result.flatness.drm_gap:.4f}, "
        f"flatter: {result.flatness.flatter}"
    )
    return 0


def _cmd_rate(args) -> int:
    model = _loss_from_args(args)
    m_list = [int(x) for x in args.m.split(",")]
    result = rate_study(
        model,
        _default_interval(args),
        args.gamma,
        m_list,
        trials=args.trials,
        alpha=args.alpha,
        grid_points=args.grid,
        rng=args.seed if args.seed is not None else 0,
        inner_points=args.inner,
        gamma_mode=args.gamma_mode,
    )
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_rate_csv(result, out / "rate.csv")
    for rec in result.records:
        print(
            f"m={rec.m:>7d}  gamma={rec.gamma:.6g}  q05={rec.q05:.6g}  "
            f"q50={rec.q50:.6g}  q95={rec.q95:.6g}"
        )
    if result.slope is not None:
        print(f"log-log slope of the (1-alpha) quantile: {result.slope:.4f}")
    else:
        print("all quantiles nonpositive; no slope fitted")
    print(f"wrote {out / 'rate.csv'}")
    return 0


def _cmd_confidence(args) -> int:
    model = _loss_from_args(args)
    epsilons = [float(x) for x in args.eps.split(",")]
    result = confidence_region_check(
        model,
        _default_interval(args),
        args.gamma,
        args.delta,
        m=args.m,
        trials=args.trials,
        grid_points=args.grid,
        rng=args.seed if args.seed is not None else 0,
        epsilons=epsilons,
        inner_points=args.inner,
    )
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_confidence_csv(result, out / "confidence.csv")
    for eps, rate in zip(result.epsilons, result.pass_rates):
        print(f"eps={eps:.6g}  pass_rate={rate:.4f}")
    if result.empty_level_sets:
        print(f"note: {result.empty_level_sets} trial/eps events had an empty level set")
    print(f"wrote {out / 'confidence.csv'}")
    return 0


def _cmd_landscape(args) -> int:
    cfg = load_experiment_config(args.config)
    try:
        w = ParamVector.load(args.checkpoint)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {args.checkpoint}") from None
    train, _, _ = build_datasets(cfg)
    model = MlpLossModel(cfg.mlp_spec())
    hist = landscape_histogram(
        model,
        w,
        args.gamma,
        cfg.drm.norm_kind,
        args.n,
        train,
        rng=np.random.default_rng(args.seed if args.seed is not None else 0),
        bins=args.bins,
        max_workers=worker_count(),
    )
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_hist_csv(hist, out / "hist.csv", extra={"checkpoint": args.checkpoint})
    print(f"reference risk {hist.reference:.6g}, neighborhood max {hist.values.max():.6g}")
    print(f"wrote {out / 'hist.csv'}")
    return 0


def _cmd_examples(args) -> int:
    model = _loss_from_args(args)
    interval = _default_interval(args)
    table = erm_drm_gap_table(
        model,
        interval,
        args.gamma,
        m=args.m,
        trials=args.trials,
        grid_points=args.grid,
        rng=args.seed if args.seed is not None else 0,
    )
    if args.loss == "tent":
        print("trial,rho,erm_gap,erm_bound,drm_gap")
        for rec in table:
            bound = max(0, -rec.rho) * args.kappa / args.m
            print(f"{rec.trial},{rec.rho},{g17(rec.erm_gap)},{g17(bound)},{g17(rec.drm_gap)}")
    else:
        print("trial,rho,erm_gap,drm_gap")
        for rec in table:
            print(f"{rec.trial},{rec.rho},{g17(rec.erm_gap)},{g17(rec.drm_gap)}")
    n_pos = sum(1 for rec in table if rec.erm_gap > 0)
    print(f"# erm gap positive in {n_pos}/{len(table)} trials")
    print(f"# max drm gap: {g17(max(rec.drm_gap for rec in table))}")
    if args.loss == "reciprocal":
        negative = [rec for rec in table if rec.rho < 0]
        if negative:
            rho = negative[0].rho
            w_grid = np.logspace(-8, np.log10(interval[1]), 200)
            curve = (rho / args.m) / w_grid
            print(f"# empirical risk min over a log grid near 0 (rho={rho}): {g17(curve.min())}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "examples.csv", "w") as fh:
            fh.write("trial,rho,erm_gap,drm_gap\n")
            for rec in table:
                fh.write(f"{rec.trial},{rec.rho},{g17(rec.erm_gap)},{g17(rec.drm_gap)}\n")
        print(f"# wrote {out / 'examples.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diamrisk",
        description="Worst-case-in-parameter-neighborhood risk: training and analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the seed")
    common.add_argument("--out", default=None, help="output directory")

    scalar = argparse.ArgumentParser(add_help=False)
    scalar.add_argument("--loss", choices=("tent", "reciprocal"), default="tent")
    scalar.add_argument("--kappa", type=float, default=2.0)
    scalar.add_argument("--gamma-loss", dest="gamma_loss", type=float, default=0.5)
    scalar.add_argument("--gamma", type=float, default=0.5, help="neighborhood radius")
    scalar.add_argument("--grid", type=int, default=257, help="points on the parameter window")
    scalar.add_argument("--inner", type=int, default=257, help="points per neighborhood interval")
    scalar.add_argument("--w-lo", dest="w_lo", type=float, default=None)
    scalar.add_argument("--w-hi", dest="w_hi", type=float, default=None)

    p = sub.add_parser("run", parents=[common], help="run the label-noise experiment")
    p.add_argument("--config", required=True, help="experiment JSON config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("rate", parents=[common, scalar], help="sup-gap rate study")
    p.add_argument("--m", default="250,1000,4000,16000", help="comma-separated sample sizes")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma-mode", dest="gamma_mode", choices=("fixed", "inverse_m"), default="fixed")
    p.set_defaults(func=_cmd_rate)

    p = sub.add_parser("confidence", parents=[common, scalar], help="confidence-region check")
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--delta", type=float, default=0.0, help="risk level of the target set")
    p.add_argument("--eps", default="0.0,0.01,0.1", help="comma-separated slack values")
    p.set_defaults(func=_cmd_confidence)

    p = sub.add_parser("landscape", parents=[common], help="neighborhood risk histogram")
    p.add_argument("--config", required=True, help="experiment JSON config (dataset + model)")
    p.add_argument("--checkpoint", required=True, help="ParamVector JSON checkpoint")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--bins", type=int, default=50)
    p.set_defaults(func=_cmd_landscape)

    p = sub.add_parser("examples", parents=[common, scalar], help="ERM vs DRM gap tables")
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=_cmd_examples)

    return parser


def cli_main(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure in a subcommand
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
