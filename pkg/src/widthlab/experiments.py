"""Width sweeps, exponent fits and the limit-model studies, with CSV interchange."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import mflimit, probes
from .config import ExperimentConfig
from .data import Dataset, gen_synthetic
from .net import InitDist, forward_batch, gradients, sample_unit
from .powerlaw import FitRefused, aggregate_seeds, compare_to_theory, fit_loglog
from .scaling import (
    Optimizer,
    Scaling,
    ScalingClass,
    canonical_scaling,
    classify_scaling,
    deep_decomposition_bounds,
    predicted_decomposition,
    predicted_increment_exponents,
)
from .train import ProbeSchedule, ReferenceConfig, gd_step, make_net, scale_hyperparams, train

RUNS_COLUMNS = ("run_id", "scaling", "H", "optimizer", "d", "seed", "step",
                "train_loss", "test_loss", "test_acc", "diverged")
DECOMP_COLUMNS = ("run_id", "step", "term", "variance")
INCREMENT_COLUMNS = ("run_id", "step", "group", "avg_norm")
OUTPUT_COLUMNS = ("run_id", "step", "mean_abs_f")
FIT_COLUMNS = ("scaling", "H", "optimizer", "observable", "predicted_q", "fitted_q", "stderr", "verdict")
WASSERSTEIN_COLUMNS = ("k", "d", "d_ref", "w2")
KERNEL_DYN_COLUMNS = ("d", "seed", "point", "step", "net_f", "kernel_f")
SWEEP_FILES = ("runs.csv", "decomp.csv", "increments.csv", "outputs.csv")


def run_id(label: str, H: int, optimizer: Optimizer, d: int, seed: int) -> str:
    return f"{label}-H{H}-{optimizer.value}-d{d:05d}-s{seed}"


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class RunTask:
    label: str
    scaling: Scaling
    width: int
    seed: int
    ref: ReferenceConfig
    train_ds: Dataset
    test_ds: Dataset
    probe_steps: tuple[int, ...]
    init: InitDist = InitDist.STD_NORMAL

    @property
    def run_id(self) -> str:
        return run_id(self.label, self.scaling.depth, self.scaling.optimizer, self.width, self.seed)


@dataclass
class RunRows:
    run_id: str
    runs: list[tuple] = field(default_factory=list)
    decomp: list[tuple] = field(default_factory=list)
    increments: list[tuple] = field(default_factory=list)
    outputs: list[tuple] = field(default_factory=list)


def execute_run(task: RunTask) -> RunRows:
    """Train one net and flatten its record into CSV rows."""
    s = task.scaling
    net, _ = make_net(task.ref, s, task.width, task.train_ds.d0, task.seed, task.init)
    sched = ProbeSchedule.at(task.probe_steps, task.test_ds.inputs, keep_outputs=True)
    rec = train(net, task.train_ds, task.test_ds, task.ref, s, sched, seed=task.seed)
    rid = task.run_id
    out = RunRows(rid)
    diverged = int(rec.diverged)
    for k in range(len(rec.train_loss)):
        out.runs.append((rid, task.label, s.depth, s.optimizer.value, task.width, task.seed, k,
                         rec.train_loss[k], rec.test_loss[k], rec.test_acc[k], diverged))
    for k in sorted(rec.decomposition):
        for term, var in rec.decomposition[k].items():
            out.decomp.append((rid, k, term, var))
    for k in sorted(rec.increments):
        for group, val in rec.increments[k].groups().items():
            out.increments.append((rid, k, group, val))
    for k in sorted(rec.outputs):
        out.outputs.append((rid, k, float(np.mean(np.abs(rec.outputs[k])))))
    if rec.diverged:
        out.outputs.append((rid, rec.halt_step, math.inf))
    return out


@dataclass
class SweepResult:
    config: ExperimentConfig
    runs: list[tuple]
    decomp: list[tuple]
    increments: list[tuple]
    outputs: list[tuple]

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(self.config.dumps() + "\n")
        write_csv(out / "runs.csv", RUNS_COLUMNS, self.runs)
        write_csv(out / "decomp.csv", DECOMP_COLUMNS, self.decomp)
        write_csv(out / "increments.csv", INCREMENT_COLUMNS, self.increments)
        write_csv(out / "outputs.csv", OUTPUT_COLUMNS, self.outputs)
        return out


def sweep_tasks(cfg: ExperimentConfig) -> list[RunTask]:
    train_ds, test_ds = cfg.dataset.load()
    probe_steps = cfg.effective_probe_steps()
    return [
        RunTask(label, s, d, seed, cfg.reference, train_ds, test_ds, probe_steps, cfg.init)
        for label, s in cfg.resolved_scalings()
        for d in cfg.widths
        for seed in cfg.seeds
    ]


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> SweepResult:
    """Every scaling x width x seed, optionally across processes.

    Rows are gathered by one writer and sorted by run id then step, so the
    result does not depend on completion order.
    """
    tasks = sweep_tasks(cfg)
    workers = cfg.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute_run, tasks))
    else:
        results = [execute_run(t) for t in tasks]
    results.sort(key=lambda r: r.run_id)
    key = lambda row: (row[0], row[1])  # noqa: E731
    return SweepResult(
        cfg,
        [row for r in results for row in r.runs],
        sorted((row for r in results for row in r.decomp), key=key),
        sorted((row for r in results for row in r.increments), key=key),
        sorted((row for r in results for row in r.outputs), key=key),
    )


# ---------------------------------------------------------------- fits


@dataclass(frozen=True)
class FitRow:
    scaling: str
    H: int
    optimizer: str
    observable: str
    predicted_q: Fraction | None
    fitted_q: float
    stderr: float
    verdict: str
    widths: tuple[int, ...] = ()

    def as_row(self) -> tuple:
        pred = "" if self.predicted_q is None else str(self.predicted_q)
        return (self.scaling, self.H, self.optimizer, self.observable, pred,
                self.fitted_q, self.stderr, self.verdict)


def predictions(s: Scaling, step: int) -> dict[str, Fraction]:
    """Predicted width exponents of every observable the sweep records."""
    inc = predicted_increment_exponents(s, step)
    out: dict[str, Fraction] = {"inc:a": inc.q_a, "inc:w": inc.q_w}
    for h, q in enumerate(inc.q_v, start=1):
        out[f"inc:v{h}"] = q
    if s.depth == 0:
        dec = predicted_decomposition(s, step)
        terms = dict(zip(("empty", "a", "w", "aw"), dec.as_tuple()))
    else:
        terms = deep_decomposition_bounds(s, inc)
    for name, q in terms.items():
        out[f"var:{name}"] = q
    total = max(terms.values())
    out["var:total"] = total
    out["abs_f"] = total
    return out


def top_half(widths: Sequence[int]) -> tuple[int, ...]:
    ws = sorted(widths)
    return tuple(ws[len(ws) // 2:])


def _series_by_seed(values: dict[tuple[int, int], float], widths: Sequence[int]) -> list[list[tuple[int, float]]]:
    seeds = sorted({s for _, s in values})
    allowed = set(widths)
    return [[(d, v) for (d, s), v in sorted(values.items()) if s == seed and d in allowed] for seed in seeds]


def fit_observable(values: dict[tuple[int, int], float], widths: Sequence[int], halve: bool,
                   predicted: Fraction | None, tol: float) -> tuple[float, float, str]:
    """Per-seed log-log fits aggregated to (mean slope, across-seed std, verdict)."""
    series = _series_by_seed(values, widths)
    try:
        if len(series) >= 2:
            agg = aggregate_seeds(series, halve=halve)
            slope, spread = agg.mean_slope, agg.std_slope
        else:
            fit = fit_loglog(series[0])
            fit = fit.halved() if halve else fit
            slope, spread = fit.slope, fit.stderr_slope
    except FitRefused as exc:
        return math.nan, math.nan, f"Refused({exc.dropped} dropped)"
    if predicted is None:
        return slope, spread, ""
    return slope, spread, compare_to_theory(slope, predicted, tol).value


def collect_observables(sweep: SweepResult) -> tuple[dict, dict]:
    """Run metadata and, per (scaling label, observable), values keyed by (width, seed)."""
    meta = {}
    for row in sweep.runs:
        meta[row[0]] = (row[1], int(row[4]), int(row[5]))
    obs: dict[tuple[str, str], dict[tuple[int, int], float]] = {}

    def put(rid: str, name: str, value: float) -> None:
        label, d, seed = meta[rid]
        obs.setdefault((label, name), {})[(d, seed)] = float(value)

    steps = sweep.config.effective_probe_steps()
    final = max(steps)
    for rid, k, group, val in sweep.increments:
        if k == final:
            put(rid, f"inc:{group}", val)
    for rid, k, term, var in sweep.decomp:
        if k == final:
            put(rid, f"var:{term}", var)
    for rid, k, val in sweep.outputs:
        put(rid, "abs_f", val)
    for row in sweep.runs:
        if row[6] == sweep.config.steps:
            put(row[0], "test_loss", row[8])
    return meta, obs


def fit_sweep(sweep: SweepResult, tol: float = 0.15) -> list[FitRow]:
    """Fit every recorded observable against width and attach predictions.

    Variances are halved into scale exponents. Deep nets only have upper
    bounds, reported as WithinBound or AboveBound. For the mean-field untouched
    term only the upper half of the width grid is used, since that term
    settles to a constant rather than a clean power law.
    """
    cfg = sweep.config
    _, obs = collect_observables(sweep)
    final = max(cfg.effective_probe_steps())
    rows = []
    for label, s in cfg.resolved_scalings():
        preds = predictions(s, final)
        kind = classify_scaling(s).kind
        for (lab, name), values in sorted(obs.items()):
            if lab != label:
                continue
            widths = cfg.widths
            if name == "var:empty" and kind is ScalingClass.MEAN_FIELD and s.depth == 0:
                widths = top_half(cfg.widths)
            pred = preds.get(name)
            if name == "abs_f" and any(math.isinf(v) for v in values.values()):
                rows.append(FitRow(label, s.depth, s.optimizer.value, name, pred, math.inf, math.nan,
                                   "Diverged", tuple(widths)))
                continue
            slope, spread, verdict = fit_observable(values, widths, name.startswith("var:"), pred, tol)
            if s.depth > 0 and pred is not None and not verdict.startswith("Refused"):
                # deep predictions are upper bounds, so only an excess is informative
                verdict = "WithinBound" if slope <= float(pred) + tol else "AboveBound"
            rows.append(FitRow(label, s.depth, s.optimizer.value, name, pred, slope, spread, verdict, tuple(widths)))
    return rows


def load_sweep(out_dir: str | Path) -> SweepResult:
    out = Path(out_dir)
    missing = [name for name in ("config.json", *SWEEP_FILES) if not (out / name).exists()]
    if missing:
        raise FileNotFoundError(f"missing in {out}: {', '.join(missing)}")
    cfg = ExperimentConfig.load(out / "config.json")
    runs = [(r["run_id"], r["scaling"], int(r["H"]), r["optimizer"], int(r["d"]), int(r["seed"]),
             int(r["step"]), float(r["train_loss"]), float(r["test_loss"]), float(r["test_acc"]),
             int(r["diverged"])) for r in read_csv(out / "runs.csv")]
    decomp = [(r["run_id"], int(r["step"]), r["term"], float(r["variance"])) for r in read_csv(out / "decomp.csv")]
    incs = [(r["run_id"], int(r["step"]), r["group"], float(r["avg_norm"]))
            for r in read_csv(out / "increments.csv")]
    outs = [(r["run_id"], int(r["step"]), float(r["mean_abs_f"])) for r in read_csv(out / "outputs.csv")]
    return SweepResult(cfg, runs, decomp, incs, outs)


def write_fits(rows: Sequence[FitRow], path: str | Path) -> None:
    write_csv(path, FIT_COLUMNS, (r.as_row() for r in rows))


def mean_final_losses(sweep: SweepResult) -> dict[str, dict[int, float]]:
    """Seed-averaged final test loss per scaling label and width."""
    acc: dict[str, dict[int, list[float]]] = {}
    by_run: dict[str, tuple] = {}
    for row in sweep.runs:
        by_run[row[0]] = row  # rows are sorted by step, the last one wins
    for row in by_run.values():
        acc.setdefault(row[1], {}).setdefault(row[4], []).append(row[8])
    return {lab: {d: float(np.mean(v)) for d, v in sorted(per.items())} for lab, per in acc.items()}


def gaps_shrink(losses_by_width: dict[int, float], count: int = 3) -> tuple[bool, list[float]]:
    """Consecutive loss gaps over the widest ``count`` widths, and whether each is no larger than the last."""
    ws = sorted(losses_by_width)[-count:]
    gaps = [abs(losses_by_width[b] - losses_by_width[a]) for a, b in zip(ws, ws[1:])]
    return all(g2 <= g1 for g1, g2 in zip(gaps, gaps[1:])), gaps


# ---------------------------------------------------------------- kernel studies


def ntk_prefactors(ref: ReferenceConfig, s: Scaling, d: int, d0: int) -> tuple[float, float]:
    """Width-independent (output, input) kernel prefactors rate * sigma^2 * d."""
    hp = scale_hyperparams(ref, s, d, d0)
    return hp.eta_a * hp.sigma**2 * d, hp.eta_w * hp.sigma**2 * d


@dataclass(frozen=True)
class KernelConvergence:
    widths: tuple[int, ...]
    deviations: np.ndarray  # (seeds, widths): mean |finite - limit| over the pairs
    slope: float


def kernel_convergence(widths: Sequence[int], seeds: Sequence[int], n_pairs: int = 20, n_mc: int = 1 << 20,
                       ref: ReferenceConfig | None = None, data: Dataset | None = None,
                       mc_seed: int = 7919) -> KernelConvergence:
    """Distance between the tangent kernel at initialization and its Monte-Carlo limit."""
    ref = ref or ReferenceConfig()
    data = data or gen_synthetic(512, 20, 3.0, 1001)
    s = canonical_scaling("NTK", 0, Optimizer.GD)
    dev = np.empty((len(seeds), len(widths)))
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng([seed, 17])
        idx = rng.choice(data.n, size=(n_pairs, 2), replace=True)
        P, Q = data.inputs[idx[:, 0]], data.inputs[idx[:, 1]]
        pref = ntk_prefactors(ref, s, widths[0], data.d0)
        limit, _ = probes.ntk_limit_pairs(P, Q, pref, ref.alpha, n_mc, mc_seed + seed)
        for j, d in enumerate(widths):
            net, hp = make_net(ref, s, d, data.d0, seed)
            finite = probes.ntk_kernel_pairs(net, P, Q, (hp.eta_a, hp.eta_w))
            dev[i, j] = np.mean(np.abs(finite - limit))
    slope = fit_loglog(zip(widths, dev.mean(axis=0))).slope
    return KernelConvergence(tuple(widths), dev, slope)


@dataclass(frozen=True)
class KernelTracking:
    widths: tuple[int, ...]
    sup_gaps: np.ndarray  # (seeds, widths)
    rows: list[tuple]

    def mean_gaps(self) -> np.ndarray:
        return self.sup_gaps.mean(axis=0)


def kernel_tracking(widths: Sequence[int], seeds: Sequence[int], n_query: int = 64, eta: float = 2e-4,
                    steps: int = 50, n_mc: int = 1 << 20, train_ds: Dataset | None = None,
                    test_ds: Dataset | None = None, mc_seed: int = 104729) -> KernelTracking:
    """Trained NTK-scaled nets against kernel gradient descent with the limit kernel.

    Both start from the net's own initial outputs, so the gap isolates how far
    the finite net's kernel wanders from the deterministic limit.
    """
    ref = ReferenceConfig(eta_a=eta, eta_v=eta, eta_w=eta, steps=steps)
    train_ds = train_ds or gen_synthetic(256, 20, 3.0, 1)
    test_ds = test_ds or gen_synthetic(512, 20, 3.0, 1001)
    query = test_ds.inputs[:n_query]
    s = canonical_scaling("NTK", 0, Optimizer.GD)
    pref = ntk_prefactors(ref, s, widths[0], train_ds.d0)
    everything = np.vstack([train_ds.inputs, query])
    gram = probes.ntk_limit_gram(train_ds.inputs, everything, pref, ref.alpha, n_mc, mc_seed)
    gaps = np.empty((len(seeds), len(widths)))
    rows = []
    for i, seed in enumerate(seeds):
        for j, d in enumerate(widths):
            net, _ = make_net(ref, s, d, train_ds.d0, seed)
            f0, _ = forward_batch(net, everything)
            traj = mflimit.kernel_dynamics(f0, gram, train_ds.labels, steps)
            sched = ProbeSchedule.at([steps], query, decomposition=False, increments=False, keep_outputs=True)
            rec = train(net, train_ds, test_ds, ref, s, sched, seed=seed)
            if rec.diverged:
                gaps[i, j] = math.inf
                continue
            net_f = rec.outputs[steps]
            kern_f = traj.query[steps]
            gaps[i, j] = float(np.max(np.abs(net_f - kern_f)))
            rows.extend((d, seed, p, steps, float(net_f[p]), float(kern_f[p])) for p in range(n_query))
    return KernelTracking(tuple(widths), gaps, rows)


# ---------------------------------------------------------------- mean-field measures


def mf_operator_params(ref: ReferenceConfig, d0: int) -> tuple[tuple[float, float], float]:
    """Rates and output scale of the width-free transition map at the mean-field scaling."""
    s = canonical_scaling("MF", 0, Optimizer.GD)
    hp = scale_hyperparams(ref, s, ref.d_star, d0)
    return (hp.eta_a / ref.d_star, hp.eta_w / ref.d_star), hp.sigma * ref.d_star


def master_atoms(n_atoms: int, d0: int, seed: int, dist: InitDist = InitDist.SYMMETRIC_UNIFORM) -> np.ndarray:
    """One seeded stream of atoms; smaller measures take its leading rows."""
    rng = np.random.default_rng(seed)
    return sample_unit(rng, (n_atoms, 1 + d0), dist)


@dataclass(frozen=True)
class WassersteinStudy:
    widths: tuple[int, ...]
    d_ref: int
    steps: int
    w2: np.ndarray  # (seeds, widths)
    rows: list[tuple]

    def mean_w2(self) -> np.ndarray:
        return self.w2.mean(axis=0)


def evolve(mu: mflimit.ParticleMeasure, steps: int, eta, sigma_op: float, ds: Dataset,
           alpha: float) -> mflimit.ParticleMeasure:
    for _ in range(steps):
        mu = mflimit.transition_step(mu, eta, sigma_op, ds, alpha)
    return mu


def wasserstein_study(widths: Sequence[int], seeds: Sequence[int], d_ref: int = 4096, steps: int = 10,
                      ref: ReferenceConfig | None = None, train_ds: Dataset | None = None,
                      dist: InitDist = InitDist.SYMMETRIC_UNIFORM) -> WassersteinStudy:
    """W2 between small particle systems and the matching atoms of a wide one.

    Each system starts from the leading atoms of one master stream, so the
    distance after ``steps`` transitions reflects the dynamics alone.
    """
    ref = ref or ReferenceConfig()
    train_ds = train_ds or gen_synthetic(256, 20, 3.0, 1)
    eta, sigma_op = mf_operator_params(ref, train_ds.d0)
    w2 = np.empty((len(seeds), len(widths)))
    rows = []
    for i, seed in enumerate(seeds):
        master = mflimit.ParticleMeasure(master_atoms(d_ref, train_ds.d0, seed, dist))
        fine = evolve(master, steps, eta, sigma_op, train_ds, ref.alpha)
        for j, d in enumerate(widths):
            coarse = evolve(master.head(d), steps, eta, sigma_op, train_ds, ref.alpha)
            w2[i, j] = mflimit.wasserstein2(coarse, fine.head(d))
            rows.append((steps, d, d_ref, float(w2[i, j])))
    rows.sort(key=lambda r: (r[0], r[1]))
    return WassersteinStudy(tuple(widths), d_ref, steps, w2, rows)


def count_inversions(values: Sequence[float]) -> int:
    """Adjacent increases in a sequence expected to decrease."""
    return sum(1 for x, y in zip(values, values[1:]) if y > x)


def commutation_gap(d: int, seed: int, ref: ReferenceConfig | None = None, ds: Dataset | None = None,
                    dist: InitDist = InitDist.SYMMETRIC_UNIFORM) -> float:
    """Max atomwise difference between a mean-field GD step and the transition map."""
    ref = ref or ReferenceConfig()
    ds = ds or gen_synthetic(64, 20, 3.0, 1)
    s = canonical_scaling("MF", 0, Optimizer.GD)
    net, hp = make_net(ref, s, d, ds.d0, seed, dist)
    eta, sigma_op = mf_operator_params(ref, ds.d0)
    mapped = mflimit.transition_step(mflimit.measure_of(net), eta, sigma_op, ds, ref.alpha)
    gd_step(net, gradients(net, ds), hp)
    stepped = mflimit.measure_of(net)
    return float(np.max(np.abs(mapped.atoms - stepped.atoms)))



