"""Desk-scale binary classification datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

RECORD_BYTES = 3073
PIXELS = 3072


class DataError(ValueError):
    """Malformed or unusable input data."""


class InsufficientDataError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self) -> None:
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise DataError("inputs must be a matrix")
        if y.shape != (x.shape[0],):
            raise DataError("labels must have one entry per input row")
        if x.shape[0] < 2:
            raise DataError(f"need at least 2 samples, got {x.shape[0]}")
        if not np.all(np.isfinite(x)):
            raise DataError("inputs contain NaN or Inf")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        y = y.astype(np.float64)
        if y.min() == y.max():
            raise DataError("both classes must be present")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d0(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx: Sequence[int] | np.ndarray, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.inputs[idx], self.labels[idx], name or self.name)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", *[f"f{j}" for j in range(self.d0)]])
            for label, row in zip(self.labels, self.inputs):
                writer.writerow([int(label), *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path: str | Path, name: str | None = None) -> "Dataset":
        try:
            raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        return cls(raw[:, 1:], raw[:, 0], name or Path(path).stem)


def gen_synthetic(n: int, d0: int, separation: float, seed: int) -> Dataset:
    """Two unit-covariance Gaussian classes centred at -/+ separation/2 along the first axis.

    Features are rescaled so the whole matrix has root-mean-square 1.
    """
    if n % 2:
        raise DataError("n must be even")
    if d0 < 1:
        raise DataError("d0 must be positive")
    if separation < 0:
        raise DataError("separation must be nonnegative")
    rng = np.random.default_rng(seed)
    half = n // 2
    labels = np.repeat([0.0, 1.0], half)
    x = rng.standard_normal((n, d0))
    x[:, 0] += np.where(labels == 1.0, 0.5 * separation, -0.5 * separation)
    order = rng.permutation(n)
    x, labels = x[order], labels[order]
    x /= math.sqrt(np.mean(x * x))
    return Dataset(x, labels, f"synthetic-n{n}-d{d0}-s{seed}")


def _batch_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == ".bin")
        if not files:
            raise DataError(f"no .bin batch files in {path}")
        return files
    if not path.exists():
        raise DataError(f"{path} does not exist")
    return [path]


def read_cifar_records(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """All (labels, uint8 pixels) records from one batch file or a directory of them."""
    labels, pixels = [], []
    for file in _batch_files(Path(path)):
        raw = np.fromfile(file, dtype=np.uint8)
        if raw.size % RECORD_BYTES:
            raise DataError(f"{file}: size {raw.size} is not a multiple of {RECORD_BYTES}")
        rec = raw.reshape(-1, RECORD_BYTES)
        labels.append(rec[:, 0])
        pixels.append(rec[:, 1:])
    return np.concatenate(labels), np.concatenate(pixels)


def load_cifar2(path: str | Path, n_train: int, n_test: int) -> tuple[Dataset, Dataset]:
    labels, pixels = read_cifar_records(path)
    keep = labels <= 1
    labels, pixels = labels[keep], pixels[keep]
    need = n_train + n_test
    if labels.size < need:
        raise InsufficientDataError(f"found {labels.size} class-0/1 records, need {need}")
    x = pixels.astype(np.float64) / 255.0
    y = labels.astype(np.float64)
    train = Dataset(x[:n_train], y[:n_train], "cifar2-train")
    test = Dataset(x[n_train:need], y[n_train:need], "cifar2-test")
    return train, test


def batch_iter(ds: Dataset | int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Index batches for one epoch; a full batch keeps the natural order."""
    n = ds if isinstance(ds, int) else ds.n
    if not 1 <= batch_size <= n:
        raise ValueError("batch_size must lie in [1, n]")
    if batch_size == n:
        return [np.arange(n)]
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]
