"""Variables, scopes, the abstract factor and the five generic operations.

Inference code is written only against the module-level functions here
(:func:`multiply`, :func:`sum_out`, :func:`reduce`, :func:`divide`,
:func:`add`, plus the plumbing helpers).  Each call is routed to a
representation-specific implementation: unary operations are methods on the
concrete factor class, binary operations are looked up in a registry keyed on
the ordered pair of representation tags.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce as _fold
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import (
    DivisionByZero,
    DomainMismatch,
    FactorError,
    IndexOutOfRange,
    MissingVariable,
    NotInScope,
    ScopeMismatch,
    Unsupported,
    UnsupportedPair,
    ZeroMass,
)


@dataclass(frozen=True)
class Variable:
    """A named random variable.

    ``cardinality`` is ``None`` for a real-valued (continuous) variable and a
    positive integer for a discrete one.  ``states`` optionally labels the
    discrete values; labels take no part in equality.
    """

    name: str
    cardinality: int | None = None
    states: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("variable name must be a non-empty string")
        if self.cardinality is not None:
            if int(self.cardinality) != self.cardinality or self.cardinality < 1:
                raise ValueError(f"{self.name}: cardinality must be a positive integer")
            if self.states is not None and len(self.states) != self.cardinality:
                raise ValueError(f"{self.name}: {len(self.states)} state labels for cardinality {self.cardinality}")
        elif self.states is not None:
            raise ValueError(f"{self.name}: continuous variables carry no state labels")

    @property
    def discrete(self) -> bool:
        return self.cardinality is not None

    def coerce(self, value):
        """Validate ``value`` for this variable and return it as int or float."""
        if not self.discrete:
            try:
                x = float(value)
            except (TypeError, ValueError):
                raise IndexOutOfRange(f"{self.name}: {value!r} is not a real number") from None
            if not np.isfinite(x):
                raise IndexOutOfRange(f"{self.name}: evidence must be finite, got {value!r}")
            return x
        if isinstance(value, str):
            if self.states is not None and value in self.states:
                return self.states.index(value)
            try:
                value = int(value)
            except ValueError:
                raise IndexOutOfRange(f"{self.name}: unknown state {value!r}") from None
        if isinstance(value, (bool, np.bool_)):
            value = int(value)
        if not isinstance(value, (int, np.integer)) and not (isinstance(value, float) and value.is_integer()):
            raise IndexOutOfRange(f"{self.name}: {value!r} is not a discrete index")
        value = int(value)
        if not 0 <= value < self.cardinality:
            raise IndexOutOfRange(f"{self.name}: index {value} outside [0, {self.cardinality})")
        return value

    def __repr__(self):
        kind = f"card={self.cardinality}" if self.discrete else "real"
        return f"Variable({self.name!r}, {kind})"


def discrete(name: str, cardinality: int, states=None) -> Variable:
    return Variable(name, int(cardinality), tuple(states) if states is not None else None)


def continuous(name: str) -> Variable:
    return Variable(name, None)


Scope = tuple  # tuple[Variable, ...] in canonical (name) order


def canonical_scope(variables: Iterable[Variable]) -> tuple[Variable, ...]:
    """Sort variables by name; duplicates with equal domains collapse, conflicting ones raise."""
    seen: dict[str, Variable] = {}
    for v in variables:
        if not isinstance(v, Variable):
            raise TypeError(f"expected Variable, got {v!r}")
        other = seen.get(v.name)
        if other is None:
            seen[v.name] = v
        elif other != v:
            raise DomainMismatch(f"variable {v.name!r} used with conflicting domains: {other!r} vs {v!r}")
    return tuple(seen[name] for name in sorted(seen))


def strict_scope(variables: Iterable[Variable]) -> tuple[Variable, ...]:
    """Like :func:`canonical_scope` but rejects repeated names."""
    variables = list(variables)
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate variables in scope: {names}")
    return canonical_scope(variables)


def merge_scopes(*scopes: Iterable[Variable]) -> tuple[Variable, ...]:
    return canonical_scope(v for s in scopes for v in s)


def as_assignment(a) -> dict[str, object]:
    """Normalise an assignment's keys to variable names."""
    if a is None:
        return {}
    out = {}
    for k, v in dict(a).items():
        out[k.name if isinstance(k, Variable) else str(k)] = v
    return out


def _names(vars_) -> list[str]:
    if isinstance(vars_, (str, Variable)):
        vars_ = [vars_]
    return [v.name if isinstance(v, Variable) else str(v) for v in vars_]


class Factor:
    """Abstract factor: a non-negative function of the joint values of its scope.

    Subclasses set ``rep`` (the representation tag used for dispatch) and
    ``scope`` (variables in canonical order), and override the underscore
    hooks they support.  Factors are immutable values.
    """

    rep: str = "abstract"
    scope: tuple[Variable, ...] = ()

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.scope)

    def variable(self, name: str) -> Variable:
        for v in self.scope:
            if v.name == name:
                return v
        raise NotInScope(f"{name!r} not in scope {self.names}")

    @property
    def is_scalar(self) -> bool:
        return len(self.scope) == 0

    # -- representation hooks -------------------------------------------------

    def log_evaluate_batch(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """Log-values at many assignments given as per-variable columns."""
        raise Unsupported(f"{self.rep} factors do not support pointwise evaluation")

    def _sum_out(self, names: frozenset[str]) -> "Factor":
        raise Unsupported(f"{self.rep} factors do not support sum-out")

    def _reduce(self, evidence: dict[str, object]) -> "Factor":
        raise Unsupported(f"{self.rep} factors do not support reduction")

    def _scale(self, log_c: float) -> "Factor":
        raise Unsupported(f"{self.rep} factors cannot be rescaled")

    def _rename(self, mapping: dict[str, Variable]) -> "Factor":
        raise Unsupported(f"{self.rep} factors cannot be renamed")

    def _project(self) -> "Factor":
        return self

    def _summary(self) -> "Summary":
        raise Unsupported(f"{self.rep} factors provide no marginal summary")

    # -- operator sugar for point-free expressions ----------------------------

    def __mul__(self, other):
        return multiply(self, other)

    def __truediv__(self, other):
        return divide(self, other)

    def __add__(self, other):
        return add(self, other)

    def __repr__(self):
        return f"<{type(self).__name__} over ({', '.join(self.names)})>"


class ScalarFactor(Factor):
    """A factor with an empty scope, stored as a log-value."""

    rep = "scalar"
    scope = ()

    def __init__(self, log_value: float):
        log_value = float(log_value)
        if np.isnan(log_value) or log_value == np.inf:
            raise ValueError(f"scalar log-value must be finite or -inf, got {log_value}")
        self.log_value = log_value

    @classmethod
    def of(cls, value: float) -> "ScalarFactor":
        if value < 0:
            raise ValueError("factor values are non-negative")
        with np.errstate(divide="ignore"):
            return cls(np.log(value))

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))

    def log_evaluate_batch(self, columns):
        n = len(next(iter(columns.values()))) if columns else 1
        return np.full(n, self.log_value)

    def _sum_out(self, names):
        return self

    def _reduce(self, evidence):
        return self

    def _scale(self, log_c):
        return ScalarFactor(self.log_value + log_c)

    def _rename(self, mapping):
        return self

    def _summary(self):
        return Summary()

    def __eq__(self, other):
        return isinstance(other, ScalarFactor) and self.log_value == other.log_value

    __hash__ = None

    def __repr__(self):
        return f"ScalarFactor({self.value!r})"


@dataclass
class Summary:
    """Per-variable marginal summaries of a factor (normalised)."""

    mean: dict[str, float] = field(default_factory=dict)
    var: dict[str, float] = field(default_factory=dict)
    probs: dict[str, np.ndarray] = field(default_factory=dict)
    ess: float | None = None


# ---------------------------------------------------------------------------
# Dispatch registry
# ---------------------------------------------------------------------------

_BINARY: dict[tuple[str, str, str], Callable[[Factor, Factor], Factor]] = {}
_PROMOTIONS: dict[str, list[tuple[str, Callable[[Factor], Factor]]]] = {}
_COMMUTATIVE = frozenset({"multiply", "add"})


def register(op: str, left: str, right: str):
    """Register ``fn(f, g)`` for ``op`` on the representation pair (left, right).

    ``"*"`` matches any representation.  Multiplication and addition are
    commutative, so one registration serves both argument orders.
    """

    def deco(fn):
        _BINARY[(op, left, right)] = fn
        return fn

    return deco


def register_promotion(source: str, target: str, convert: Callable[[Factor], Factor]):
    _PROMOTIONS.setdefault(source, []).append((target, convert))


def _lookup(op, a, b):
    for key in ((op, a, b), (op, a, "*"), (op, "*", b)):
        fn = _BINARY.get(key)
        if fn is not None:
            return fn, False
    if op in _COMMUTATIVE:
        for key in ((op, b, a), (op, b, "*"), (op, "*", a)):
            fn = _BINARY.get(key)
            if fn is not None:
                return fn, True
    return None, False


def _call(fn, swapped, f, g):
    return fn(g, f) if swapped else fn(f, g)


def dispatch(op: str, f: Factor, g: Factor) -> Factor:
    fn, swapped = _lookup(op, f.rep, g.rep)
    if fn is not None:
        return _call(fn, swapped, f, g)
    # one promotion step on either side
    for side in (0, 1):
        src = (f, g)[side]
        for target, convert in _PROMOTIONS.get(src.rep, ()):
            a, b = (target, g.rep) if side == 0 else (f.rep, target)
            fn, swapped = _lookup(op, a, b)
            if fn is None:
                continue
            try:
                promoted = convert(src)
            except FactorError:
                continue
            ff, gg = (promoted, g) if side == 0 else (f, promoted)
            return _call(fn, swapped, ff, gg)
    raise UnsupportedPair(f"{op} not defined for ({f.rep}, {g.rep})")


def supported(op: str, left: str, right: str) -> bool:
    return _lookup(op, left, right)[0] is not None


# ---------------------------------------------------------------------------
# Generic operations
# ---------------------------------------------------------------------------


def _columns(f: Factor, a: Mapping) -> dict[str, np.ndarray]:
    a = as_assignment(a)
    cols = {}
    for v in f.scope:
        if v.name not in a:
            raise MissingVariable(f"assignment lacks {v.name!r}")
        x = v.coerce(a[v.name])
        cols[v.name] = np.asarray([x], dtype=np.int64 if v.discrete else float)
    return cols


def log_evaluate(f: Factor, a: Mapping) -> float:
    return float(f.log_evaluate_batch(_columns(f, a))[0])


def evaluate(f: Factor, a: Mapping | None = None) -> float:
    """Value of ``f`` at assignment ``a`` (extra entries are ignored)."""
    return float(np.exp(log_evaluate(f, a or {})))


def log_scalar(f: Factor) -> float:
    """Log-value of an empty-scope factor."""
    if not f.is_scalar:
        raise ScopeMismatch(f"expected a scalar factor, got scope {f.names}")
    if isinstance(f, ScalarFactor):
        return f.log_value
    return float(f.log_evaluate_batch({})[0])


def multiply(*factors: Factor) -> Factor:
    """Pointwise product, folded left to right."""
    if not factors:
        return ScalarFactor(0.0)
    return _fold(_multiply2, factors)


def _multiply2(f: Factor, g: Factor) -> Factor:
    if g.is_scalar:
        if f.is_scalar:
            return ScalarFactor(log_scalar(f) + log_scalar(g))
        return f._scale(log_scalar(g))
    if f.is_scalar:
        return g._scale(log_scalar(f))
    merge_scopes(f.scope, g.scope)
    return dispatch("multiply", f, g)


def sum_out(f: Factor, variables) -> Factor:
    """Marginalise ``variables`` (summing discrete, integrating continuous)."""
    names = frozenset(_names(variables))
    missing = names - set(f.names)
    if missing:
        raise NotInScope(f"cannot sum out {sorted(missing)}: not in scope {f.names}")
    if not names:
        return f
    return f._sum_out(names)


def reduce(f: Factor, evidence) -> Factor:
    """Condition on ``evidence``; variables outside the scope are ignored."""
    evidence = as_assignment(evidence)
    relevant = {}
    for v in f.scope:
        if v.name in evidence:
            relevant[v.name] = v.coerce(evidence[v.name])
    if not relevant:
        return f
    return f._reduce(relevant)


def divide(f: Factor, g: Factor) -> Factor:
    """Pointwise quotient with 0/0 := 0."""
    if g.is_scalar:
        lc = log_scalar(g)
        if lc == -np.inf:
            if f.is_scalar and log_scalar(f) == -np.inf:
                return ScalarFactor(-np.inf)
            if f.rep in ("table", "sparse_table"):
                return dispatch("divide", f, g)
            if getattr(f, "is_zero", False):
                return f
            raise DivisionByZero("division by a zero scalar")
        if f.is_scalar:
            return ScalarFactor(log_scalar(f) - lc)
        return f._scale(-lc)
    merge_scopes(f.scope, g.scope)
    return dispatch("divide", f, g)


def add(f: Factor, g: Factor) -> Factor:
    """Pointwise sum of two factors over the same scope."""
    if set(f.names) != set(g.names):
        raise ScopeMismatch(f"addition needs equal scopes, got {f.names} and {g.names}")
    merge_scopes(f.scope, g.scope)
    if f.is_scalar:
        return ScalarFactor(np.logaddexp(log_scalar(f), log_scalar(g)))
    return dispatch("add", f, g)


def normalize(f: Factor) -> Factor:
    """``f`` divided by its total mass."""
    total = sum_out(f, f.names)
    if log_scalar(total) == -np.inf:
        raise ZeroMass("cannot normalise a factor with zero total mass")
    return divide(f, total)


def rename(f: Factor, mapping: Mapping) -> Factor:
    """Relabel variables; ``mapping`` maps old names to new :class:`Variable` objects."""
    mapping = {k.name if isinstance(k, Variable) else k: v for k, v in mapping.items()}
    mapping = {k: v for k, v in mapping.items() if k in f.names}
    if not mapping:
        return f
    for old, new in mapping.items():
        if f.variable(old).cardinality != new.cardinality:
            raise DomainMismatch(f"cannot rename {old!r} to {new!r}: domains differ")
    return f._rename(mapping)


def project(f: Factor) -> Factor:
    """Representation-specific collapse (moment matching, resampling); identity for exact forms."""
    return f._project()


def summarize(f: Factor) -> Summary:
    """Normalised per-variable marginals: means/variances and discrete probabilities."""
    return f._summary()


def renamed_scope(scope, mapping: dict[str, Variable]) -> list[Variable]:
    return [mapping.get(v.name, v) for v in scope]
