"""Log-log least-squares exponent estimates and comparison with predictions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import linregress


class FitRefused(ValueError):
    def __init__(self, message: str, dropped: int):
        super().__init__(message)
        self.dropped = dropped


class Verdict(str, enum.Enum):
    MATCH = "Match"
    MISMATCH = "Mismatch"


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    stderr_slope: float
    n_points: int
    r_squared: float
    dropped: int = 0

    def halved(self) -> "PowerLawFit":
        """Exponent of the square root of the observable (variances to scales)."""
        return PowerLawFit(self.slope / 2, self.intercept / 2, self.stderr_slope / 2,
                           self.n_points, self.r_squared, self.dropped)


def fit_loglog(points: Iterable[tuple[float, float]]) -> PowerLawFit:
    """Least squares of log2(value) against log2(width).

    Points with nonpositive or non-finite values are dropped and counted.
    """
    pts = [(float(d), float(v)) for d, v in points]
    kept = [(d, v) for d, v in pts if v > 0 and math.isfinite(v) and d > 0]
    dropped = len(pts) - len(kept)
    if len({d for d, _ in kept}) < 3:
        raise FitRefused(f"fewer than 3 usable widths ({dropped} points dropped)", dropped)
    x = np.log2([d for d, _ in kept])
    y = np.log2([v for _, v in kept])
    res = linregress(x, y)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    resid = y - (res.intercept + res.slope * x)
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    stderr = 0.0 if ss_tot == 0.0 else float(res.stderr)
    return PowerLawFit(float(res.slope), float(res.intercept), stderr, len(kept), r2, dropped)


@dataclass(frozen=True)
class SeedAggregate:
    mean_slope: float
    std_slope: float
    fits: tuple[PowerLawFit, ...]


def aggregate_seeds(series: Sequence[Sequence[tuple[float, float]]] | Sequence[PowerLawFit],
                    halve: bool = False) -> SeedAggregate:
    """Fit each seed's series (or take given fits) and summarize the slopes.

    The spread is the sample standard deviation across seeds.
    """
    if len(series) < 2:
        raise ValueError("need at least two seeds")
    fits = tuple(s if isinstance(s, PowerLawFit) else fit_loglog(s) for s in series)
    if halve:
        fits = tuple(f.halved() for f in fits)
    slopes = np.array([f.slope for f in fits])
    return SeedAggregate(float(slopes.mean()), float(slopes.std(ddof=1)), fits)


def compare_to_theory(fit: PowerLawFit | float, predicted: Fraction | float, tol: float) -> Verdict:
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    slope = fit.slope if isinstance(fit, PowerLawFit) else float(fit)
    return Verdict.MATCH if abs(slope - float(predicted)) <= tol else Verdict.MISMATCH
