"""Exact exponent calculus for width scalings.

Every exponent is a :class:`fractions.Fraction` so that fixed points and ties
in the max-recursions are detected exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

HALF = Fraction(1, 2)
ONE = Fraction(1)
ZERO = Fraction(0)

TERMS_H0 = ("empty", "a", "w", "aw")


class Optimizer(str, enum.Enum):
    GD = "GD"
    RMSPROP = "RMSProp"

    @classmethod
    def parse(cls, text: str | "Optimizer") -> "Optimizer":
        if isinstance(text, Optimizer):
            return text
        for member in cls:
            if member.value.lower() == str(text).lower():
                return member
        raise ValueError(f"unknown optimizer {text!r}")


class Exactness(str, enum.Enum):
    EXACT = "Exact"
    UPPER_BOUND = "UpperBound"


class KappaCase(str, enum.Enum):
    BOTH_NEG = "BothNeg"
    BOTH_ZERO = "BothZero"
    A_ZERO_W_NEG = "AZeroWNeg"
    W_ZERO_A_NEG = "WZeroANeg"
    A_POS_SUM_NONPOS = "APosSumNonpos"
    W_POS_SUM_NONPOS = "WPosSumNonpos"
    SUM_POS = "SumPos"


class ScalingClass(str, enum.Enum):
    NTK = "NTK"
    MEAN_FIELD = "MeanField"
    INTERMEDIATE = "Intermediate"
    OUTPUT_ONLY = "OutputOnly"
    INPUT_ONLY = "InputOnly"
    OUTPUT_PLUS_CROSS = "OutputPlusCross"
    DIVERGENT = "Divergent"
    TRIVIAL_VANISHING = "TrivialVanishing"
    NOT_PROVABLY_TRIVIAL = "NotProvablyTrivial"


class CanonicalKind(str, enum.Enum):
    MF = "MF"
    NTK = "NTK"


def rational(value: object) -> Fraction:
    """Parse ``value`` as an exact rational.

    Accepts ints, Fractions and strings such as ``"-3/4"`` or ``"0.5"``.
    Floats are rejected: they would smuggle rounding into the calculus.
    """
    if isinstance(value, bool):
        raise ValueError("booleans are not exponents")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"malformed rational {value!r}") from exc
    raise ValueError(f"cannot read {value!r} as an exact rational")


def _fmt(q: Fraction) -> str:
    return str(q)


@dataclass(frozen=True)
class Scaling:
    q_sigma: Fraction
    qt_a: Fraction
    qt_v: tuple[Fraction, ...]
    qt_w: Fraction
    optimizer: Optimizer = Optimizer.GD

    def __post_init__(self) -> None:
        object.__setattr__(self, "q_sigma", rational(self.q_sigma))
        object.__setattr__(self, "qt_a", rational(self.qt_a))
        object.__setattr__(self, "qt_w", rational(self.qt_w))
        object.__setattr__(self, "qt_v", tuple(rational(q) for q in self.qt_v))
        object.__setattr__(self, "optimizer", Optimizer.parse(self.optimizer))

    @property
    def depth(self) -> int:
        return len(self.qt_v)

    def to_dict(self) -> dict:
        return {
            "q_sigma": _fmt(self.q_sigma),
            "qt_a": _fmt(self.qt_a),
            "qt_v": [_fmt(q) for q in self.qt_v],
            "qt_w": _fmt(self.qt_w),
            "optimizer": self.optimizer.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scaling":
        return cls(
            q_sigma=rational(data["q_sigma"]),
            qt_a=rational(data["qt_a"]),
            qt_v=tuple(rational(q) for q in data.get("qt_v", [])),
            qt_w=rational(data["qt_w"]),
            optimizer=Optimizer.parse(data.get("optimizer", "GD")),
        )

    def __str__(self) -> str:
        v = ",".join(_fmt(q) for q in self.qt_v)
        return (
            f"(q_sigma={self.q_sigma}, qt_a={self.qt_a}, qt_v=[{v}], "
            f"qt_w={self.qt_w}, {self.optimizer.value})"
        )


@dataclass(frozen=True)
class ExponentState:
    step: int
    q_a: Fraction
    q_v: tuple[Fraction, ...]
    q_w: Fraction
    exactness: Exactness

    def values(self) -> tuple[Fraction, ...]:
        return (self.q_a, *self.q_v, self.q_w)

    def as_dict(self) -> dict[str, str]:
        out = {"a": _fmt(self.q_a)}
        for h, q in enumerate(self.q_v, start=1):
            out[f"v{h}"] = _fmt(q)
        out["w"] = _fmt(self.q_w)
        return out


@dataclass(frozen=True)
class KappaAssignment:
    kappa_empty: Fraction
    kappa_a: Fraction
    kappa_w: Fraction
    kappa_aw: Fraction
    case: KappaCase
    # names of kappas whose value is only known as an upper bound of 1
    bounded: frozenset[str] = frozenset()


@dataclass(frozen=True)
class DecompositionExponents:
    qf_empty: Fraction
    qf_a: Fraction
    qf_w: Fraction
    qf_aw: Fraction
    step: int

    def as_tuple(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        return (self.qf_empty, self.qf_a, self.qf_w, self.qf_aw)

    def as_dict(self) -> dict[str, Fraction]:
        return dict(zip(TERMS_H0, self.as_tuple()))


@dataclass(frozen=True)
class Classification:
    kind: ScalingClass
    surviving_terms: frozenset[str]
    exponent_table: dict[int, ExponentState]
    decomposition: DecompositionExponents | None = None
    kappa: KappaAssignment | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_json(self) -> dict:
        order = {t: i for i, t in enumerate(TERMS_H0)}
        out = {
            "class": self.kind.value,
            "surviving_terms": sorted(self.surviving_terms, key=lambda t: order.get(t, 99)),
            "exponent_table": {str(k): st.as_dict() for k, st in self.exponent_table.items()},
            "notes": list(self.notes),
        }
        if self.decomposition is not None:
            out["decomposition"] = {t: _fmt(q) for t, q in self.decomposition.as_dict().items()}
        return out


def first_step_exponents(s: Scaling) -> ExponentState:
    if s.optimizer is not Optimizer.GD:
        raise ValueError("first_step_exponents applies to GD; use rmsprop_increment_exponents")
    H = s.depth
    lift = (H + 1) * s.q_sigma
    q_a = s.qt_a + lift + Fraction(H, 2)
    q_w = s.qt_w + lift + Fraction(H, 2)
    q_v = tuple(q + lift + Fraction(H - 1, 2) for q in s.qt_v)
    exact = Exactness.EXACT if H == 0 else Exactness.UPPER_BOUND
    return ExponentState(1, q_a, q_v, q_w, exact)


def _step_bound_deep(state: ExponentState, s: Scaling) -> ExponentState:
    # Bound recursions for H >= 1. The hidden layers share one exponent in the
    # derivation; with unequal per-layer rates the largest one is a valid bound.
    H = s.depth
    lift = (H + 1) * s.q_sigma
    qa, qw = state.q_a, state.q_w
    qv = max(state.q_v)
    h2 = Fraction(H, 2)
    h12 = Fraction(H + 1, 2)
    hm = Fraction(H - 1, 2)
    new_w = max(
        qw,
        s.qt_w + lift + max(h2, h12 + qa, h12 + qv, H + qa + qv, H + 2 * qv),
    )
    new_a = max(
        qa,
        s.qt_a + lift + max(h2, h12 + qw, h12 + qv, H + qw + qv, H + 2 * qv),
    )
    inner_v = max(
        hm,
        h2 + qa,
        h2 + qw,
        h2 + qv,
        H - 1 + qa + qw,
        H - 1 + qw + qv,
        H - 1 + qa + qv,
    )
    new_v = tuple(max(old, qt + lift + inner_v) for old, qt in zip(state.q_v, s.qt_v))
    return ExponentState(state.step + 1, new_a, new_v, new_w, Exactness.UPPER_BOUND)


def step_exponents(state: ExponentState, first: ExponentState, s: Scaling) -> ExponentState:
    if s.optimizer is Optimizer.RMSPROP:
        # normalized updates: the exponent is the same at every step
        return ExponentState(state.step + 1, state.q_a, state.q_v, state.q_w, state.exactness)
    if s.depth == 0:
        q_a = max(state.q_a, first.q_a + max(ZERO, state.q_w))
        q_w = max(state.q_w, first.q_w + max(ZERO, state.q_a))
        return ExponentState(state.step + 1, q_a, (), q_w, Exactness.EXACT)
    return _step_bound_deep(state, s)


def rmsprop_increment_exponents(s: Scaling) -> ExponentState:
    if s.optimizer is not Optimizer.RMSPROP:
        raise ValueError("rmsprop_increment_exponents applies to RMSProp scalings only")
    return ExponentState(1, s.qt_a, s.qt_v, s.qt_w, Exactness.EXACT)


def initial_exponents(s: Scaling) -> ExponentState:
    if s.optimizer is Optimizer.RMSPROP:
        return rmsprop_increment_exponents(s)
    return first_step_exponents(s)


def iterate_exponents(s: Scaling, k_max: int) -> dict[int, ExponentState]:
    """Exponent states for steps 1..k_max."""
    first = initial_exponents(s)
    table = {1: first}
    state = first
    for k in range(2, k_max + 1):
        state = step_exponents(state, first, s)
        table[k] = state
    return table


def kappa_case(q_a1: Fraction, q_w1: Fraction) -> KappaCase:
    if q_a1 < 0 and q_w1 < 0:
        return KappaCase.BOTH_NEG
    if q_a1 == 0 and q_w1 == 0:
        return KappaCase.BOTH_ZERO
    if q_a1 == 0 and q_w1 < 0:
        return KappaCase.A_ZERO_W_NEG
    if q_w1 == 0 and q_a1 < 0:
        return KappaCase.W_ZERO_A_NEG
    if q_a1 + q_w1 > 0:
        return KappaCase.SUM_POS
    if q_a1 > 0:
        return KappaCase.A_POS_SUM_NONPOS
    return KappaCase.W_POS_SUM_NONPOS


def kappa_terms(first: ExponentState, state_k: ExponentState) -> KappaAssignment:
    """Sum-growth exponents (1/2 for CLT-like sums, 1 for coherent ones).

    In the both-negative regime the cross term picks up a coherent second-order
    part: the increment of the output weight acquires a component aligned with
    the initial output weight after two steps, so its sum grows faster than the
    CLT rate once max(q_a, q_w) > -1/2.
    """
    if first.q_v or state_k.q_v:
        raise ValueError("kappa_terms is defined for one hidden layer only")
    case = kappa_case(first.q_a, first.q_w)
    if case is KappaCase.BOTH_NEG:
        aw = max(HALF, ONE + max(state_k.q_a, state_k.q_w))
        return KappaAssignment(HALF, ONE, ONE, aw, case)
    if case is KappaCase.BOTH_ZERO:
        return KappaAssignment(ONE, ONE, ONE, ONE, case)
    if case is KappaCase.A_ZERO_W_NEG:
        return KappaAssignment(HALF, ONE, ONE, ONE, case, frozenset({"w", "aw"}))
    if case is KappaCase.W_ZERO_A_NEG:
        return KappaAssignment(ONE, ONE, ONE, ONE, case, frozenset({"a", "aw"}))
    if case is KappaCase.A_POS_SUM_NONPOS:
        bounded = {"empty", "w"}
        if state_k.q_w != 0:
            bounded.add("aw")
        return KappaAssignment(ONE, ONE, ONE, ONE, case, frozenset(bounded))
    if case is KappaCase.W_POS_SUM_NONPOS:
        bounded = {"a"}
        if state_k.q_a != 0:
            bounded.add("aw")
        return KappaAssignment(ONE, ONE, ONE, ONE, case, frozenset(bounded))
    return KappaAssignment(ONE, ONE, ONE, ONE, case, frozenset(TERMS_H0))


def decomposition_exponents(
    s: Scaling, state: ExponentState, kappa: KappaAssignment
) -> DecompositionExponents:
    if s.depth != 0:
        raise ValueError("decomposition_exponents is defined for one hidden layer only")
    qs = s.q_sigma
    return DecompositionExponents(
        qf_empty=qs + kappa.kappa_empty,
        qf_a=state.q_a + qs + kappa.kappa_a,
        qf_w=state.q_w + qs + kappa.kappa_w,
        qf_aw=state.q_a + state.q_w + qs + kappa.kappa_aw,
        step=state.step,
    )


def check_nontrivial(d: DecompositionExponents, q_w_k: Fraction) -> bool:
    top = max(d.as_tuple())
    if top != 0:
        return False
    learned = max(d.qf_a, d.qf_w, d.qf_aw)
    return learned == 0 or (d.qf_empty == 0 and q_w_k >= 0)


def canonical_scaling(kind: CanonicalKind | str, H: int, optimizer: Optimizer | str) -> Scaling:
    if H < 0:
        raise ValueError("depth must be nonnegative")
    kind = CanonicalKind(kind) if not isinstance(kind, CanonicalKind) else kind
    opt = Optimizer.parse(optimizer)
    if kind is CanonicalKind.NTK:
        return Scaling(-HALF, ZERO, (ZERO,) * H, ZERO, opt)
    if opt is Optimizer.GD:
        return Scaling(Fraction(-1), ONE, (Fraction(2),) * H, ONE, opt)
    return Scaling(Fraction(-1), ZERO, (ZERO,) * H, ZERO, opt)


def _grows(table: dict[int, ExponentState], k_max: int) -> bool:
    if k_max < 2:
        return False
    prev, last = table[k_max - 1].values(), table[k_max].values()
    return any(b > a for a, b in zip(prev, last))


def deep_decomposition_bounds(s: Scaling, state: ExponentState) -> dict[str, Fraction]:
    """Sign-safe exponent bounds for the subset terms of a deep net.

    The untouched term is a product of zero-mean independent factors, so each of
    the H+1 width sums is CLT-sized. Any term containing an increment is bounded
    by treating every width sum as coherent.
    """
    H = s.depth
    names = ["a", *[f"v{h}" for h in range(1, H + 1)], "w"]
    qs = dict(zip(names, state.values()))
    out = {"empty": (H + 1) * (s.q_sigma + HALF)}
    coherent = (H + 1) * (s.q_sigma + ONE)
    for r in range(1, len(names) + 1):
        for subset in combinations(names, r):
            out["".join(subset)] = coherent + sum((qs[n] for n in subset), ZERO)
    return out


def _classify_deep(s: Scaling, k_max: int) -> Classification:
    table = iterate_exponents(s, k_max)
    last = table[k_max]
    notes = [
        "multilayer exponents are upper bounds",
        "subset bounds: untouched term (H+1)(q_sigma+1/2); "
        "terms with increments (H+1)(q_sigma+1) + sum of their increment exponents",
    ]
    if _grows(table, k_max):
        notes.append("bound recursion still growing at the horizon")
        return Classification(ScalingClass.NOT_PROVABLY_TRIVIAL, frozenset(), table, notes=tuple(notes))
    bounds = deep_decomposition_bounds(s, last)
    increments_negative = all(q < 0 for st in table.values() for q in st.values())
    if increments_negative and all(b < 0 for b in bounds.values()):
        notes.append("all increment and decomposition bounds are negative: the limit vanishes")
        return Classification(ScalingClass.TRIVIAL_VANISHING, frozenset(), table, notes=tuple(notes))
    if (
        s.optimizer is Optimizer.RMSPROP
        and s.q_sigma == -1
        and all(q == 0 for q in last.values())
    ):
        notes.append("normalized updates with width-independent rates keep every layer moving")
        return Classification(ScalingClass.MEAN_FIELD, frozenset(), table, notes=tuple(notes))
    notes.append("sign information is insufficient to prove a trivial limit")
    return Classification(ScalingClass.NOT_PROVABLY_TRIVIAL, frozenset(), table, notes=tuple(notes))


def classify_scaling(s: Scaling, k_max: int = 32) -> Classification:
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    if s.depth > 0:
        return _classify_deep(s, k_max)

    table = iterate_exponents(s, k_max)
    first, last = table[1], table[k_max]
    notes: list[str] = []
    if s.optimizer is Optimizer.RMSPROP:
        notes.append("normalized updates: increment exponents equal the rate exponents")
    kappa = kappa_terms(first, last)
    decomp = decomposition_exponents(s, last, kappa)
    if kappa.bounded:
        notes.append("kappa set to its upper bound 1 for: " + ", ".join(sorted(kappa.bounded)))

    if _grows(table, k_max) or kappa.case is KappaCase.SUM_POS:
        notes.append(
            "increment exponents grow without bound; saturation of the loss "
            "derivative is not modelled, so a vanishing gradient cannot be excluded"
        )
        return Classification(ScalingClass.DIVERGENT, frozenset(), table, decomp, kappa, tuple(notes))

    top = max(decomp.as_tuple())
    if top > 0:
        notes.append(f"decomposition exponent {top} > 0")
        return Classification(ScalingClass.DIVERGENT, frozenset(), table, decomp, kappa, tuple(notes))
    if top < 0:
        notes.append("every decomposition term vanishes")
        return Classification(
            ScalingClass.TRIVIAL_VANISHING, frozenset(), table, decomp, kappa, tuple(notes)
        )
    surviving = frozenset(t for t, q in decomp.as_dict().items() if q == 0)
    if not check_nontrivial(decomp, last.q_w):
        notes.append("the limit stays at its initialization: learning vanishes")
        return Classification(
            ScalingClass.TRIVIAL_VANISHING, surviving, table, decomp, kappa, tuple(notes)
        )

    case = kappa.case
    if case is KappaCase.BOTH_NEG:
        if s.q_sigma == -HALF:
            kind = ScalingClass.NTK
        else:
            kind = ScalingClass.INTERMEDIATE
            if "empty" not in surviving:
                notes.append("the limit model is zero at initialization")
    elif case is KappaCase.BOTH_ZERO:
        kind = ScalingClass.MEAN_FIELD
    elif case in (KappaCase.W_ZERO_A_NEG, KappaCase.W_POS_SUM_NONPOS):
        kind = ScalingClass.INPUT_ONLY
        if "aw" in surviving:
            notes.append("the cross term also survives")
    elif "aw" in surviving:
        kind = ScalingClass.OUTPUT_PLUS_CROSS
    else:
        kind = ScalingClass.OUTPUT_ONLY
    return Classification(kind, surviving, table, decomp, kappa, tuple(notes))


def predicted_increment_exponents(s: Scaling, step: int) -> ExponentState:
    """Increment exponents at ``step`` (bounds when the net is deep)."""
    return iterate_exponents(s, max(step, 1))[max(step, 1)]


def predicted_decomposition(s: Scaling, step: int) -> DecompositionExponents:
    table = iterate_exponents(s, max(step, 1))
    last = table[max(step, 1)]
    return decomposition_exponents(s, last, kappa_terms(table[1], last))


def parse_exponents(values: Iterable[object]) -> tuple[Fraction, ...]:
    return tuple(rational(v) for v in values)


def scaling_from_args(
    q_sigma: object,
    qt_a: object,
    qt_w: object,
    qt_v: Sequence[object] = (),
    optimizer: Optimizer | str = Optimizer.GD,
) -> Scaling:
    return Scaling(rational(q_sigma), rational(qt_a), parse_exponents(qt_v), rational(qt_w), Optimizer.parse(optimizer))
