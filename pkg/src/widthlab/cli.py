"""Command-line entry point: ``widthlab <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data or format error, 4 a single run
diverged.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ConfigError, DatasetSpec, ExperimentConfig, ScalingSpec, named_scaling
from .data import DataError
from .net import InitDist
from .scaling import Optimizer, classify_scaling, scaling_from_args
from .svg import Chart, slope_guide
from .train import ReferenceConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        s = scaling_from_args(args.q_sigma, args.qt_a, args.qt_w, args.qt_v or (), args.optimizer)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = classify_scaling(s, k_max=args.k_max)
    _emit({"scaling": s.to_dict(), **report.to_json()})
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    if not args.config:
        raise UsageError("sweep needs --config")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    out = _out_dir(args, cfg.out or "results")
    result = ex.run_sweep(cfg, workers=args.workers)
    result.write(out)
    diverged = sorted({r[0] for r in result.runs if r[10]})
    _emit({"out": str(out), "runs": len({r[0] for r in result.runs}), "diverged_runs": diverged})
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    out = Path(args.out or "results")
    sweep = ex.load_sweep(out)
    rows = ex.fit_sweep(sweep, tol=args.tol)
    ex.write_fits(rows, out / "fits.csv")
    for r in rows:
        pred = "-" if r.predicted_q is None else str(r.predicted_q)
        print(f"{r.scaling:>14} H={r.H} {r.optimizer:<7} {r.observable:<12} "
              f"pred {pred:>6}  fit {r.fitted_q:+.3f} +- {r.stderr:.3f}  {r.verdict}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    out = Path(args.out or "results")
    sweep = ex.load_sweep(out)
    written = []
    losses = ex.mean_final_losses(sweep)
    chart = Chart("final test loss", "width d", "cross-entropy", log2_x=True)
    for label, per in losses.items():
        finite = {d: v for d, v in per.items() if math.isfinite(v)}
        chart.add(label, list(finite), list(finite.values()))
    written.append(chart.save(out / "loss_vs_width.svg"))

    curves: dict[tuple[str, int], list[list[float]]] = defaultdict(list)
    by_run: dict[str, list[tuple]] = defaultdict(list)
    for row in sweep.runs:
        by_run[row[0]].append(row)
    widest = max(sweep.config.widths)
    for rows in by_run.values():
        if rows[0][4] == widest:
            curves[(rows[0][1], rows[0][4])].append([r[8] for r in rows])
    chart = Chart(f"test loss during training, d={widest}", "step", "cross-entropy")
    for (label, _), runs in sorted(curves.items()):
        n = min(len(r) for r in runs)
        mean = np.mean([r[:n] for r in runs], axis=0)
        chart.add(label, range(n), mean)
    written.append(chart.save(out / "loss_vs_step.svg"))

    fits = {(r.scaling, r.observable): r for r in ex.fit_sweep(sweep)}
    _, obs = ex.collect_observables(sweep)
    by_label: dict[str, dict[str, dict]] = defaultdict(dict)
    for (label, name), values in obs.items():
        if name.startswith(("inc:", "var:")):
            by_label[label][name] = values
    for label, series in sorted(by_label.items()):
        chart = Chart(f"{label}: observables vs width", "width d", "seed mean", log2_x=True, log2_y=True)
        for name, values in sorted(series.items()):
            per_d: dict[int, list[float]] = defaultdict(list)
            for (d, _), v in values.items():
                per_d[d].append(v)
            ds = sorted(per_d)
            ys = [float(np.mean(per_d[d])) for d in ds]
            chart.add(name, ds, ys)
            fit = fits.get((label, name))
            exact = fit is not None and fit.H == 0 and fit.predicted_q is not None
            if exact and ys[0] > 0 and math.isfinite(ys[0]):
                power = float(fit.predicted_q) * (2 if name.startswith("var:") else 1)
                chart.add(f"{name} theory", ds, slope_guide(ds, ys[0], power), dashed=True)
        written.append(chart.save(out / f"observables_{label}.svg"))
    _emit({"written": [str(p) for p in written]})
    return EXIT_OK


def cmd_kernel(args: argparse.Namespace) -> int:
    opts = _load_json(args.config)
    widths = args.widths or opts.get("widths", [256, 4096])
    seeds = [args.seed] if args.seed is not None else opts.get("seeds", [0, 1, 2, 3, 4])
    n_mc = args.n_mc or int(opts.get("n_mc", 1 << 20))
    study = ex.kernel_tracking(widths, seeds, n_query=int(opts.get("n_query", 64)),
                               eta=float(opts.get("eta", 2e-4)), steps=int(opts.get("steps", 50)), n_mc=n_mc)
    out = _out_dir(args, "results")
    ex.write_csv(out / "kernel_dyn.csv", ex.KERNEL_DYN_COLUMNS, study.rows)
    _emit({"widths": list(study.widths), "mean_sup_gap": study.mean_gaps().tolist(),
           "out": str(out / "kernel_dyn.csv")})
    return EXIT_OK


def cmd_mf(args: argparse.Namespace) -> int:
    opts = _load_json(args.config)
    widths = args.widths or opts.get("widths", [64, 256, 1024])
    seeds = [args.seed] if args.seed is not None else opts.get("seeds", [0, 1, 2, 3, 4])
    dist = InitDist(opts.get("init", InitDist.SYMMETRIC_UNIFORM.value))
    study = ex.wasserstein_study(widths, seeds, d_ref=int(opts.get("d_ref", 4096)),
                                 steps=int(opts.get("steps", 10)), dist=dist)
    out = _out_dir(args, "results")
    ex.write_csv(out / "wasserstein.csv", ex.WASSERSTEIN_COLUMNS, study.rows)
    mean = study.mean_w2()
    _emit({"widths": list(study.widths), "mean_w2": mean.tolist(),
           "inversions": ex.count_inversions(mean.tolist()), "out": str(out / "wasserstein.csv")})
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    optimizer = Optimizer.parse(args.optimizer)
    try:
        if args.q_sigma is not None:
            chosen = ScalingSpec.from_dict({"label": "custom", "q_sigma": args.q_sigma, "qt_a": args.qt_a,
                                          "qt_w": args.qt_w, "qt_v": args.qt_v or []})
            chosen.resolve(args.depth, optimizer)
        else:
            named_scaling(args.scaling, args.depth, optimizer)
            chosen = ScalingSpec(label=args.scaling, name=args.scaling)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    base = ExperimentConfig.load(args.config) if args.config else None
    cfg = ExperimentConfig(
        scalings=(chosen,),
        widths=(args.width,),
        seeds=(args.seed if args.seed is not None else 0,),
        depth=args.depth,
        optimizer=optimizer,
        steps=args.steps if args.steps is not None else (base.steps if base else 50),
        dataset=base.dataset if base else DatasetSpec(),
        reference=base.reference if base else ReferenceConfig.for_optimizer(optimizer),
    )
    result = ex.run_sweep(cfg, workers=1)
    if args.out:
        result.write(_out_dir(args, "results"))
    last = result.runs[-1]
    diverged = bool(last[10])
    _emit({"run_id": last[0], "steps_run": last[6], "train_loss": last[7], "test_loss": last[8],
           "test_acc": last[9], "diverged": diverged})
    return EXIT_DIVERGED if diverged else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="widthlab", description="Width-scaling analysis and experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the seed list with one seed")
    common.add_argument("--out", default=None, help="output directory (default: results)")
    common.add_argument("--config", default=None, help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="classify a scaling symbolically")
    p.add_argument("--q-sigma", required=True, help="initialization exponent, e.g. -1/2")
    p.add_argument("--qt-a", required=True)
    p.add_argument("--qt-w", required=True)
    p.add_argument("--qt-v", nargs="*", default=None, help="one exponent per hidden matrix")
    p.add_argument("--optimizer", default="GD", choices=["GD", "RMSProp"])
    p.add_argument("--k-max", type=int, default=32)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[common], help="train over widths x seeds x scalings")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", parents=[common], help="fit exponents from sweep CSVs")
    p.add_argument("--tol", type=float, default=0.15)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", parents=[common], help="render SVG charts from sweep CSVs")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("kernel", parents=[common], help="trained nets vs limit-kernel dynamics")
    p.add_argument("--widths", type=_int_list, default=None)
    p.add_argument("--n-mc", type=int, default=None)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("mf", parents=[common], help="W2 convergence of particle systems")
    p.add_argument("--widths", type=_int_list, default=None)
    p.set_defaults(func=cmd_mf)

    p = sub.add_parser("train", parents=[common], help="a single training run")
    p.add_argument("--scaling", default="mf", help="mf, ntk, intermediate or default")
    p.add_argument("--q-sigma", default=None, help="explicit exponents instead of --scaling")
    p.add_argument("--qt-a", default="0")
    p.add_argument("--qt-w", default="0")
    p.add_argument("--qt-v", nargs="*", default=None)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--depth", type=int, default=0)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--optimizer", default="GD", choices=["GD", "RMSProp"])
    p.set_defaults(func=cmd_train)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
