"""Conditional factors: one continuous sub-factor per discrete assignment.

Binary operations are lifted branch-wise over the union of the discrete
scopes.  The other operand is sliced per branch with :func:`reduce`, which
turns a table into a scalar, an indicator into a plain box, and another
conditional factor into its matching branch, so a single lifting rule
covers every partner representation.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from ..core import (
    Factor,
    ScalarFactor,
    Summary,
    add,
    divide,
    log_scalar,
    merge_scopes,
    multiply,
    project,
    reduce,
    register,
    rename,
    renamed_scope,
    strict_scope,
    sum_out,
)
from ..errors import FactorError, NotIntegrable, Unsupported, ZeroMass
from ..gaussian import CanonicalGaussian, MixtureFactor, moment_match_mixture
from ..table import TableFactor, all_assignments
from .indicator import IndicatorFactor
from .truncated import TruncatedGaussian, intersect, restrict


def _is_zero(f: Factor) -> bool:
    if isinstance(f, ScalarFactor):
        return f.log_value == -np.inf
    return bool(getattr(f, "is_zero", False))


class ConditionalFactor(Factor):
    """Map from joint discrete assignments to continuous factors.

    Parameters
    ----------
    discrete : sequence of Variable
        The discrete variables indexing the branches.
    continuous : sequence of Variable
        Common scope of every branch.
    branches : mapping or sequence
        Either a mapping from index tuples (in ``discrete`` order) to
        factors, or a sequence of factors in row-major order over
        ``discrete``.  Every assignment must be covered.
    """

    rep = "conditional"

    def __init__(self, discrete, continuous, branches):
        discrete, continuous = list(discrete), list(continuous)
        if any(not v.discrete for v in discrete) or any(v.discrete for v in continuous):
            raise ValueError("conditional factors split into discrete keys and continuous branches")
        dscope = strict_scope(discrete)
        keys_given = all_assignments(discrete)
        if not isinstance(branches, Mapping):
            branches = list(branches)
            if len(branches) != len(keys_given):
                raise ValueError(f"expected {len(keys_given)} branches, got {len(branches)}")
            branches = dict(zip(keys_given, branches))
        order = [discrete.index(v) for v in dscope]
        table = {}
        for key in keys_given:
            if key not in branches:
                raise ValueError(f"no branch for discrete assignment {key}")
            table[tuple(key[i] for i in order)] = branches[key]
        if len(branches) != len(table):
            raise ValueError("branch keys outside the discrete domain")
        self._init(dscope, strict_scope(continuous), table)

    def _init(self, dscope, cscope, table):
        names = set(v.name for v in cscope)
        for key, f in table.items():
            if set(f.names) != names:
                raise ValueError(f"branch {key} has scope {f.names}, expected {sorted(names)}")
        self.discrete = tuple(dscope)
        self.continuous = tuple(cscope)
        self.scope = merge_scopes(dscope, cscope)
        self.table = dict(table)

    @classmethod
    def _raw(cls, dscope, cscope, table) -> "ConditionalFactor":
        obj = cls.__new__(cls)
        obj._init(dscope, cscope, table)
        return obj

    @classmethod
    def from_table(cls, t: TableFactor) -> "ConditionalFactor":
        """A table seen as a conditional factor with scalar branches."""
        with np.errstate(divide="ignore"):
            logs = np.log(t.table)
        return cls._raw(t.scope, (), {key: ScalarFactor(logs[key]) for key in all_assignments(t.scope)})

    def branch(self, assignment) -> Factor:
        if isinstance(assignment, Mapping):
            assignment = tuple(v.coerce(assignment[v.name]) for v in self.discrete)
        return self.table[tuple(assignment)]

    def _assign(self, key) -> dict:
        return {v.name: k for v, k in zip(self.discrete, key)}

    # -- unary operations -------------------------------------------------

    def log_evaluate_batch(self, columns):
        n = len(next(iter(columns.values()))) if columns else 1
        out = np.full(n, -np.inf)
        if not self.discrete:
            return self.table[()].log_evaluate_batch(columns)
        keys = np.column_stack([np.asarray(columns[v.name], dtype=np.int64) for v in self.discrete])
        for key, f in self.table.items():
            rows = np.all(keys == np.array(key), axis=1)
            if rows.any():
                sub = {v.name: np.asarray(columns[v.name])[rows] for v in self.continuous}
                if not sub:
                    sub = {"_": np.zeros(int(rows.sum()))}
                out[rows] = f.log_evaluate_batch(sub)
        return out

    def _sum_out(self, names):
        cont = frozenset(n for n in names if n in set(v.name for v in self.continuous))
        disc = frozenset(names) - cont
        f: Factor = self
        if cont:
            f = self._sum_out_continuous(cont)
        if disc:
            f = sum_out(f, disc) if not isinstance(f, ConditionalFactor) else f._sum_out_discrete(disc)
        return f

    def _sum_out_continuous(self, names) -> Factor:
        table = {}
        for key, f in self.table.items():
            try:
                table[key] = sum_out(f, names)
            except NotIntegrable as err:
                raise NotIntegrable(f"branch {self._assign(key)}: {err}", branch=self._assign(key)) from err
        keep = [v for v in self.continuous if v.name not in names]
        if keep:
            return ConditionalFactor._raw(self.discrete, keep, table)
        return _table_of_scalars(self.discrete, table)

    def _sum_out_discrete(self, names) -> Factor:
        keep = [v for v in self.discrete if v.name not in names]
        pos = [i for i, v in enumerate(self.discrete) if v.name not in names]
        groups: dict[tuple, list[Factor]] = {}
        for key, f in self.table.items():
            groups.setdefault(tuple(key[i] for i in pos), []).append(f)
        table = {k: _combine(parts) for k, parts in groups.items()}
        if keep:
            return ConditionalFactor._raw(keep, self.continuous, table)
        return table[()]

    def _reduce(self, evidence):
        keep = [v for v in self.discrete if v.name not in evidence]
        cont_ev = {n: x for n, x in evidence.items() if n in set(v.name for v in self.continuous)}
        table = {}
        for key, f in self.table.items():
            if any(evidence.get(v.name, k) != k for v, k in zip(self.discrete, key)):
                continue
            new_key = tuple(k for v, k in zip(self.discrete, key) if v.name not in evidence)
            table[new_key] = reduce(f, cont_ev)
        cont = [v for v in self.continuous if v.name not in cont_ev]
        if not cont:
            return _table_of_scalars(keep, table) if keep else table[()]
        if not keep:
            return table[()]
        return ConditionalFactor._raw(keep, cont, table)

    def _scale(self, log_c):
        return ConditionalFactor._raw(self.discrete, self.continuous, {k: f._scale(log_c) for k, f in self.table.items()})

    def _rename(self, mapping):
        dscope = renamed_scope(self.discrete, mapping)
        order = sorted(range(len(dscope)), key=lambda i: dscope[i].name)
        table = {tuple(key[i] for i in order): rename(f, mapping) for key, f in self.table.items()}
        return ConditionalFactor._raw([dscope[i] for i in order], strict_scope(renamed_scope(self.continuous, mapping)), table)

    def _project(self):
        table = {}
        for key, f in self.table.items():
            table[key] = CanonicalGaussian.zero(self.continuous) if _is_zero(f) else project(f)
        return ConditionalFactor._raw(self.discrete, self.continuous, table)

    def branch_log_masses(self) -> dict[tuple, float]:
        return {key: _log_mass(f) for key, f in self.table.items()}

    def _summary(self):
        masses = self.branch_log_masses()
        logs = np.array([masses[k] for k in all_assignments(self.discrete)]).reshape(
            [v.cardinality for v in self.discrete]
        )
        total = logsumexp(logs)
        if total == -np.inf:
            raise ZeroMass("conditional factor has zero total mass")
        joint = np.exp(logs - total)
        probs = {}
        for i, v in enumerate(self.discrete):
            axes = tuple(j for j in range(len(self.discrete)) if j != i)
            probs[v.name] = joint.sum(axis=axes)
        comps = [(0.0, f) for k, f in self.table.items() if masses[k] > -np.inf]
        m = moment_match_mixture(MixtureFactor._from_log(comps))
        s = m._summary()
        return Summary(mean=s.mean, var=s.var, probs=probs)

    def _extend_samples(self, columns, new_names, rng):
        """Draw new continuous variables branch by branch (see CanonicalGaussian)."""
        missing = [v.name for v in self.discrete if v.name not in columns]
        if missing:
            raise Unsupported(f"cannot extend samples: discrete keys {missing} are not sampled yet")
        n = len(next(iter(columns.values())))
        keys = np.column_stack([np.asarray(columns[v.name], dtype=np.int64) for v in self.discrete])
        new_cols = {name: np.empty(n) for name in new_names}
        log_mass = np.full(n, -np.inf)
        for key in sorted(self.table):
            rows = np.nonzero(np.all(keys == np.array(key), axis=1))[0]
            if not len(rows):
                continue
            f = self.table[key]
            if not hasattr(f, "_extend_samples"):
                raise Unsupported(f"{f.rep} branches cannot be sampled")
            sub = {v.name: np.asarray(columns[v.name])[rows] for v in self.continuous if v.name in columns}
            if not sub:
                sub = {"_": np.zeros(len(rows))}
            cols, lm = f._extend_samples(sub, new_names, rng)
            for name in new_names:
                new_cols[name][rows] = cols[name]
            log_mass[rows] = lm
        return new_cols, log_mass

    def __eq__(self, other):
        return (
            isinstance(other, ConditionalFactor)
            and self.discrete == other.discrete
            and self.continuous == other.continuous
            and self.table.keys() == other.table.keys()
            and all(self.table[k] == other.table[k] for k in self.table)
        )

    __hash__ = None


def _log_mass(f: Factor) -> float:
    if _is_zero(f):
        return -np.inf
    if isinstance(f, ScalarFactor):
        return f.log_value
    return log_scalar(sum_out(f, f.names))


def _table_of_scalars(dscope, table) -> Factor:
    if not dscope:
        return table[()]
    vals = np.zeros([v.cardinality for v in dscope])
    for key, s in table.items():
        vals[key] = np.exp(log_scalar(s))
    return TableFactor._raw(dscope, vals)


def _combine(parts: list[Factor]) -> Factor:
    """Sum branch factors with addition, skipping exact zeros."""
    live = [f for f in parts if not _is_zero(f)]
    if not live:
        return parts[0]
    out = live[0]
    for f in live[1:]:
        out = add(out, f)
    return out


def _finish(dscope, cscope, table) -> Factor:
    if not cscope:
        return _table_of_scalars(dscope, table)
    if not dscope:
        return table[()]
    return ConditionalFactor._raw(dscope, cscope, table)


def _discrete_of(f: Factor):
    if isinstance(f, ConditionalFactor):
        return f.discrete
    if isinstance(f, IndicatorFactor):
        return f.selectors
    return tuple(v for v in f.scope if v.discrete)


def _lift(op, f: ConditionalFactor, g: Factor) -> Factor:
    """Apply ``op`` branch-wise over the union of both discrete scopes."""
    dscope = merge_scopes(f.discrete, _discrete_of(g))
    cscope = merge_scopes(f.continuous, (v for v in g.scope if not v.discrete))
    table = {}
    for key in all_assignments(dscope):
        a = dict(zip((v.name for v in dscope), key))
        left = reduce(f, {v.name: a[v.name] for v in f.discrete}) if f.discrete else f.table[()]
        right = reduce(g, a)
        try:
            table[key] = op(left, right)
        except FactorError as err:
            if not err.context.get("branch"):
                err.context["branch"] = a
            raise
    return _finish(dscope, cscope, table)


def conditional_multiply(f: ConditionalFactor, g: Factor) -> Factor:
    return _lift(multiply, f, g)


def conditional_divide(f: ConditionalFactor, g: Factor) -> Factor:
    return _lift(divide, f, g)


def conditional_add(f: ConditionalFactor, g: ConditionalFactor) -> Factor:
    return _lift(add, f, g)


for _rep in ("conditional", "table", "canonical", "mixture", "truncated", "indicator"):
    register("multiply", "conditional", _rep)(conditional_multiply)
for _rep in ("conditional", "table", "canonical"):
    register("divide", "conditional", _rep)(conditional_divide)
register("add", "conditional", "conditional")(conditional_add)


def _table_times_continuous(t: TableFactor, g: Factor) -> Factor:
    return _lift(multiply, ConditionalFactor.from_table(t), g)


for _rep in ("canonical", "mixture", "truncated"):
    register("multiply", "table", _rep)(_table_times_continuous)


# -- continuous factors times indicators ------------------------------------


def _restrict_any(f: Factor, box) -> Factor:
    if isinstance(f, CanonicalGaussian):
        return restrict(f, box)
    if isinstance(f, TruncatedGaussian):
        return restrict(f.base, intersect(f.box, box))
    if isinstance(f, MixtureFactor):
        return MixtureFactor._from_log([(lw, _restrict_any(c, box)) for lw, c in f.log_components])
    raise Unsupported(f"cannot truncate a {f.rep} factor")


def continuous_times_indicator(f: Factor, ind: IndicatorFactor) -> Factor:
    missing = [v for v in ind.continuous if v not in f.scope]
    if missing:
        f = multiply(f, CanonicalGaussian.unit(missing))
    if not ind.selectors:
        box = ind.regions.get(())
        return CanonicalGaussian.zero(f.scope) if box is None else _restrict_any(f, box)
    cscope = f.scope
    table = {}
    for key in all_assignments(ind.selectors):
        box = ind.regions.get(key)
        table[key] = CanonicalGaussian.zero(cscope) if box is None else _restrict_any(f, box)
    return ConditionalFactor._raw(ind.selectors, cscope, table)


for _rep in ("canonical", "mixture", "truncated"):
    register("multiply", _rep, "indicator")(continuous_times_indicator)
