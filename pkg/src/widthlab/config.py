"""Experiment configuration: JSON with exact rational exponents."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .data import DataError, Dataset, gen_synthetic, load_cifar2
from .net import InitDist
from .scaling import Optimizer, Scaling, canonical_scaling, rational
from .train import ReferenceConfig

NAMED_SCALINGS = ("mf", "ntk", "intermediate", "default")


class ConfigError(ValueError):
    pass


def named_scaling(name: str, H: int, optimizer: Optimizer) -> Scaling:
    """Canonical MF/NTK scalings plus the intermediate and unscaled-rate ones."""
    key = name.lower()
    if key in ("mf", "ntk"):
        return canonical_scaling(key.upper(), H, optimizer)
    if key == "intermediate":
        half = Fraction(1, 2)
        return Scaling(Fraction(-3, 4), half, (Fraction(1),) * H, half, optimizer)
    if key == "default":
        # initialization scaled with width, raw learning rates left alone
        return Scaling(Fraction(-1, 2), Fraction(1), (Fraction(1),) * H, Fraction(0), optimizer)
    raise ConfigError(f"unknown scaling name {name!r}; expected one of {NAMED_SCALINGS}")


@dataclass(frozen=True)
class ScalingSpec:
    label: str
    name: str | None = None
    exponents: dict | None = None

    def resolve(self, H: int, optimizer: Optimizer) -> Scaling:
        if self.name is not None:
            return named_scaling(self.name, H, optimizer)
        e = self.exponents or {}
        try:
            qt_v = [rational(q) for q in e.get("qt_v", [])]
            if len(qt_v) != H:
                raise ConfigError(f"scaling {self.label!r} has {len(qt_v)} hidden exponents, depth is {H}")
            return Scaling(rational(e["q_sigma"]), rational(e["qt_a"]), tuple(qt_v), rational(e["qt_w"]), optimizer)
        except KeyError as exc:
            raise ConfigError(f"scaling {self.label!r} is missing {exc}") from exc

    def to_dict(self) -> dict:
        if self.name is not None:
            return {"label": self.label, "name": self.name}
        return {"label": self.label, **self.exponents}

    @classmethod
    def from_dict(cls, raw: dict | str) -> "ScalingSpec":
        if isinstance(raw, str):
            return cls(label=raw, name=raw)
        label = raw.get("label") or raw.get("name")
        if not label:
            raise ConfigError("scaling entries need a label or a name")
        if "name" in raw:
            if raw["name"].lower() not in NAMED_SCALINGS:
                raise ConfigError(f"unknown scaling name {raw['name']!r}")
            return cls(label=label, name=raw["name"])
        exps = {}
        for key in ("q_sigma", "qt_a", "qt_w"):
            if key not in raw:
                raise ConfigError(f"scaling {label!r} is missing {key}")
            exps[key] = str(rational(raw[key]))
        exps["qt_v"] = [str(rational(q)) for q in raw.get("qt_v", [])]
        return cls(label=label, exponents=exps)


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic"
    n_train: int = 256
    n_test: int = 512
    d0: int = 20
    separation: float = 3.0
    seed: int = 1
    test_seed: int = 1001
    path: str | None = None

    def load(self) -> tuple[Dataset, Dataset]:
        if self.kind == "synthetic":
            return (gen_synthetic(self.n_train, self.d0, self.separation, self.seed),
                    gen_synthetic(self.n_test, self.d0, self.separation, self.test_seed))
        if self.kind == "cifar2":
            if not self.path:
                raise DataError("cifar2 dataset needs a path")
            return load_cifar2(self.path, self.n_train, self.n_test)
        raise ConfigError(f"unknown dataset kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if out["path"] is None:
            del out["path"]
        return out


_REF_KEYS = ("d_star", "eta_a", "eta_v", "eta_w", "sigma_a_star", "sigma_v_star", "sigma_w_star",
             "alpha", "beta", "eps", "batch_size")


@dataclass(frozen=True)
class ExperimentConfig:
    scalings: tuple[ScalingSpec, ...]
    widths: tuple[int, ...]
    seeds: tuple[int, ...]
    depth: int = 0
    optimizer: Optimizer = Optimizer.GD
    steps: int = 50
    probe_steps: tuple[int, ...] = ()
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    init: InitDist = InitDist.STD_NORMAL
    out: str | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.scalings:
            raise ConfigError("at least one scaling is required")
        if not self.widths or list(self.widths) != sorted(set(self.widths)) or min(self.widths) < 1:
            raise ConfigError("widths must be positive, distinct and ascending")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.depth < 0:
            raise ConfigError("depth must be nonnegative")
        if any(k < 0 or k > self.steps for k in self.probe_steps):
            raise ConfigError("probe steps must lie in [0, steps]")
        labels = [s.label for s in self.scalings]
        if len(set(labels)) != len(labels):
            raise ConfigError("scaling labels must be distinct")
        if self.reference.steps != self.steps:
            object.__setattr__(self, "reference", replace(self.reference, steps=self.steps))

    def resolved_scalings(self) -> list[tuple[str, Scaling]]:
        return [(s.label, s.resolve(self.depth, self.optimizer)) for s in self.scalings]

    def effective_probe_steps(self) -> tuple[int, ...]:
        return self.probe_steps or (self.steps,)

    def to_dict(self) -> dict:
        ref = {k: getattr(self.reference, k) for k in _REF_KEYS}
        return {
            "dataset": self.dataset.to_dict(),
            "scalings": [s.to_dict() for s in self.scalings],
            "depth": self.depth,
            "optimizer": self.optimizer.value,
            "reference": ref,
            "widths": list(self.widths),
            "seeds": list(self.seeds),
            "steps": self.steps,
            "probe_steps": list(self.probe_steps),
            "init": self.init.value,
            "out": self.out,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            optimizer = Optimizer.parse(raw.get("optimizer", "GD"))
            ref_raw = dict(raw.get("reference", {}))
            unknown = set(ref_raw) - set(_REF_KEYS)
            if unknown:
                raise ConfigError(f"unknown reference keys {sorted(unknown)}")
            if "eta" in raw.get("reference", {}):
                raise ConfigError("use eta_a/eta_v/eta_w")
            ref = ReferenceConfig.for_optimizer(optimizer, **ref_raw, steps=int(raw.get("steps", 50)))
            return cls(
                scalings=tuple(ScalingSpec.from_dict(s) for s in raw["scalings"]),
                widths=tuple(int(d) for d in raw["widths"]),
                seeds=tuple(int(s) for s in raw.get("seeds", [0])),
                depth=int(raw.get("depth", 0)),
                optimizer=optimizer,
                steps=int(raw.get("steps", 50)),
                probe_steps=tuple(int(k) for k in raw.get("probe_steps", [])),
                dataset=DatasetSpec(**raw.get("dataset", {})),
                reference=ref,
                init=InitDist(raw.get("init", InitDist.STD_NORMAL.value)),
                out=raw.get("out"),
                workers=int(raw.get("workers", 1)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text)
