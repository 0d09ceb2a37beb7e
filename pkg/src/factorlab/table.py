"""Discrete factors: dense strided tables and sparse default-zero maps."""

from __future__ import annotations

import itertools
from typing import Mapping

import numpy as np

from .core import (
    Factor,
    ScalarFactor,
    Summary,
    Variable,
    canonical_scope,
    merge_scopes,
    register,
    register_promotion,
    renamed_scope,
    strict_scope,
)
from .errors import DivisionByZero, DomainMismatch, ScopeMismatch

# mixed dense/sparse operands go dense up to this many result cells
DENSE_CELL_LIMIT = 2**20


def _check_discrete(variables):
    for v in variables:
        if not v.discrete:
            raise DomainMismatch(f"table factors need discrete variables, {v.name!r} is continuous")


def _cards(scope) -> tuple[int, ...]:
    return tuple(v.cardinality for v in scope)


class TableFactor(Factor):
    """Dense table over discrete variables.

    Parameters
    ----------
    variables : sequence of Variable
        Scope in the order the axes of ``values`` are laid out.
    values : array_like
        Either an array shaped by the cardinalities or a flat row-major
        array.  Internally the table is transposed to canonical (name) order.
    """

    rep = "table"

    def __init__(self, variables, values):
        variables = list(variables)
        _check_discrete(variables)
        scope = strict_scope(variables)
        arr = np.array(values, dtype=float).reshape(_cards(variables))
        if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
            raise ValueError("table values must be finite and non-negative")
        order = [variables.index(v) for v in scope]
        arr = np.ascontiguousarray(np.transpose(arr, order)) if order else arr
        arr.setflags(write=False)
        self.scope = scope
        self._table = arr

    @classmethod
    def _raw(cls, scope, arr) -> "TableFactor":
        obj = cls.__new__(cls)
        obj.scope = tuple(scope)
        arr = np.ascontiguousarray(arr, dtype=float)
        arr.setflags(write=False)
        obj._table = arr
        return obj

    @classmethod
    def ones(cls, variables) -> "TableFactor":
        variables = list(variables)
        return cls(variables, np.ones(_cards(variables)))

    @classmethod
    def one_hot(cls, variable: Variable, index: int) -> "TableFactor":
        vals = np.zeros(variable.cardinality)
        vals[variable.coerce(index)] = 1.0
        return cls([variable], vals)

    @property
    def table(self) -> np.ndarray:
        """Values as an array with one axis per scope variable (canonical order)."""
        return self._table

    @property
    def values(self) -> np.ndarray:
        return self._table.reshape(-1)

    @property
    def strides(self) -> tuple[int, ...]:
        return tuple(s // self._table.itemsize for s in self._table.strides)

    @property
    def total(self) -> float:
        return float(self._table.sum())

    def _aligned(self, scope) -> np.ndarray:
        """View of the table broadcastable against ``scope`` (a canonical superset)."""
        shape = [v.cardinality if v in self.scope else 1 for v in scope]
        return self._table.reshape(shape)

    def log_evaluate_batch(self, columns):
        idx = tuple(np.asarray(columns[v.name], dtype=np.int64) for v in self.scope)
        if not idx:
            n = len(next(iter(columns.values()))) if columns else 1
            vals = np.full(n, float(self._table))
        else:
            vals = self._table[idx]
        with np.errstate(divide="ignore"):
            return np.log(vals)

    def _sum_out(self, names):
        axes = tuple(i for i, v in enumerate(self.scope) if v.name in names)
        keep = [v for v in self.scope if v.name not in names]
        out = self._table.sum(axis=axes)
        if not keep:
            return ScalarFactor.of(float(out))
        return TableFactor._raw(keep, out)

    def _reduce(self, evidence):
        index = tuple(evidence.get(v.name, slice(None)) for v in self.scope)
        keep = [v for v in self.scope if v.name not in evidence]
        out = self._table[index]
        if not keep:
            return ScalarFactor.of(float(out))
        return TableFactor._raw(keep, out)

    def _scale(self, log_c):
        return TableFactor._raw(self.scope, self._table * np.exp(log_c))

    def _rename(self, mapping):
        return TableFactor(renamed_scope(self.scope, mapping), self._table)

    def _summary(self):
        total = self._table.sum()
        probs = {}
        for i, v in enumerate(self.scope):
            axes = tuple(j for j in range(len(self.scope)) if j != i)
            probs[v.name] = self._table.sum(axis=axes) / total
        return Summary(probs=probs)

    def to_sparse(self) -> "SparseTableFactor":
        return to_sparse(self)

    def __eq__(self, other):
        return isinstance(other, TableFactor) and self.scope == other.scope and np.array_equal(self._table, other._table)

    __hash__ = None


class SparseTableFactor(Factor):
    """Discrete factor stored as a map from index tuples to strictly positive values.

    Index tuples in ``entries`` follow the order of ``variables``; absent
    tuples have value zero and zeros are never stored.
    """

    rep = "sparse_table"

    def __init__(self, variables, entries: Mapping[tuple, float]):
        variables = list(variables)
        _check_discrete(variables)
        scope = strict_scope(variables)
        order = [variables.index(v) for v in scope]
        cards = _cards(variables)
        clean = {}
        for key, val in dict(entries).items():
            key = tuple(int(k) for k in key)
            if len(key) != len(cards) or any(not 0 <= k < c for k, c in zip(key, cards)):
                raise IndexError(f"index {key} out of range for cardinalities {cards}")
            val = float(val)
            if not np.isfinite(val) or val < 0:
                raise ValueError("sparse table values must be finite and non-negative")
            if val > 0:
                clean[tuple(key[i] for i in order)] = val
        self.scope = scope
        self._entries = clean

    @classmethod
    def _raw(cls, scope, entries) -> "SparseTableFactor":
        obj = cls.__new__(cls)
        obj.scope = tuple(scope)
        obj._entries = {k: v for k, v in entries.items() if v > 0}
        return obj

    @property
    def entries(self) -> dict[tuple, float]:
        return dict(self._entries)

    @property
    def nnz(self) -> int:
        return len(self._entries)

    @property
    def cells(self) -> int:
        return int(np.prod(_cards(self.scope), dtype=np.int64))

    def log_evaluate_batch(self, columns):
        n = len(next(iter(columns.values()))) if columns else 1
        cols = [np.asarray(columns[v.name], dtype=np.int64) for v in self.scope]
        out = np.empty(n)
        for i in range(n):
            out[i] = self._entries.get(tuple(int(c[i]) for c in cols), 0.0)
        with np.errstate(divide="ignore"):
            return np.log(out)

    def _sum_out(self, names):
        keep_pos = [i for i, v in enumerate(self.scope) if v.name not in names]
        keep = [self.scope[i] for i in keep_pos]
        acc: dict[tuple, float] = {}
        for key, val in self._entries.items():
            k = tuple(key[p] for p in keep_pos)
            acc[k] = acc.get(k, 0.0) + val
        if not keep:
            return ScalarFactor.of(acc.get((), 0.0))
        return SparseTableFactor._raw(keep, acc)

    def _reduce(self, evidence):
        fixed = [(i, evidence[v.name]) for i, v in enumerate(self.scope) if v.name in evidence]
        keep_pos = [i for i, v in enumerate(self.scope) if v.name not in evidence]
        keep = [self.scope[i] for i in keep_pos]
        out = {}
        for key, val in self._entries.items():
            if all(key[i] == x for i, x in fixed):
                out[tuple(key[p] for p in keep_pos)] = val
        if not keep:
            return ScalarFactor.of(out.get((), 0.0))
        return SparseTableFactor._raw(keep, out)

    def _scale(self, log_c):
        c = np.exp(log_c)
        return SparseTableFactor._raw(self.scope, {k: v * c for k, v in self._entries.items()})

    def _rename(self, mapping):
        scope = renamed_scope(self.scope, mapping)
        return SparseTableFactor(scope, self._entries)

    def _summary(self):
        return to_dense(self)._summary()

    def to_dense(self) -> TableFactor:
        return to_dense(self)

    def __eq__(self, other):
        return isinstance(other, SparseTableFactor) and self.scope == other.scope and self._entries == other._entries

    __hash__ = None


def to_sparse(f: TableFactor) -> SparseTableFactor:
    table = f.table
    idx = np.nonzero(table)
    entries = {tuple(int(i) for i in key): float(table[key]) for key in zip(*idx)} if f.scope else {}
    return SparseTableFactor._raw(f.scope, entries)


def to_dense(f: SparseTableFactor) -> TableFactor:
    arr = np.zeros(_cards(f.scope))
    for key, val in f._entries.items():
        arr[key] = val
    return TableFactor._raw(f.scope, arr)


register_promotion("sparse_table", "table", to_dense)
register_promotion("table", "sparse_table", to_sparse)


# ---------------------------------------------------------------------------
# dense binary operations
# ---------------------------------------------------------------------------


@register("multiply", "table", "table")
def table_multiply(f: TableFactor, g: TableFactor) -> TableFactor:
    scope = merge_scopes(f.scope, g.scope)
    return TableFactor._raw(scope, f._aligned(scope) * g._aligned(scope))


def _safe_quotient(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num, den = np.broadcast_arrays(num, den)
    bad = (den == 0) & (num != 0)
    if np.any(bad):
        raise DivisionByZero("non-zero value divided by a zero cell")
    out = np.zeros(num.shape)
    ok = den != 0
    out[ok] = num[ok] / den[ok]
    return out


@register("divide", "table", "table")
def table_divide(f: TableFactor, g: TableFactor) -> TableFactor:
    scope = merge_scopes(f.scope, g.scope)
    return TableFactor._raw(scope, _safe_quotient(f._aligned(scope), g._aligned(scope)))


@register("divide", "table", "scalar")
def table_divide_scalar(f: TableFactor, g: ScalarFactor) -> TableFactor:
    return TableFactor._raw(f.scope, _safe_quotient(f.table, np.full(f.table.shape, g.value)))


@register("add", "table", "table")
def table_add(f: TableFactor, g: TableFactor) -> TableFactor:
    if f.scope != g.scope:
        raise ScopeMismatch(f"addition needs equal scopes, got {f.names} and {g.names}")
    return TableFactor._raw(f.scope, f.table + g.table)


# ---------------------------------------------------------------------------
# sparse binary operations
# ---------------------------------------------------------------------------


@register("multiply", "sparse_table", "sparse_table")
def sparse_multiply(f: SparseTableFactor, g: SparseTableFactor) -> SparseTableFactor:
    scope = merge_scopes(f.scope, g.scope)
    shared = [v for v in f.scope if v in g.scope]
    f_sh = [f.scope.index(v) for v in shared]
    g_sh = [g.scope.index(v) for v in shared]
    # index g's support by its shared-variable key
    buckets: dict[tuple, list] = {}
    for key, val in g._entries.items():
        buckets.setdefault(tuple(key[p] for p in g_sh), []).append((key, val))
    pos_f = {v.name: i for i, v in enumerate(f.scope)}
    pos_g = {v.name: i for i, v in enumerate(g.scope)}
    out = {}
    for fk, fv in f._entries.items():
        for gk, gv in buckets.get(tuple(fk[p] for p in f_sh), ()):
            key = tuple(fk[pos_f[v.name]] if v.name in pos_f else gk[pos_g[v.name]] for v in scope)
            out[key] = fv * gv
    return SparseTableFactor._raw(scope, out)


@register("divide", "sparse_table", "sparse_table")
def sparse_divide(f: SparseTableFactor, g: SparseTableFactor) -> Factor:
    if not set(g.names) <= set(f.names):
        return table_divide(to_dense(f), to_dense(g))
    g_pos = [f.scope.index(v) for v in g.scope]
    out = {}
    # 0/0 := 0, so only the numerator's support matters
    for key, val in f._entries.items():
        den = g._entries.get(tuple(key[p] for p in g_pos), 0.0)
        if den == 0.0:
            raise DivisionByZero(f"non-zero value at {key} divided by a zero cell")
        out[key] = val / den
    return SparseTableFactor._raw(f.scope, out)


@register("divide", "sparse_table", "scalar")
def sparse_divide_scalar(f: SparseTableFactor, g: ScalarFactor) -> SparseTableFactor:
    if f._entries:
        raise DivisionByZero("non-zero table divided by a zero scalar")
    return f


@register("add", "sparse_table", "sparse_table")
def sparse_add(f: SparseTableFactor, g: SparseTableFactor) -> SparseTableFactor:
    if f.scope != g.scope:
        raise ScopeMismatch(f"addition needs equal scopes, got {f.names} and {g.names}")
    out = dict(f._entries)
    for k, v in g._entries.items():
        out[k] = out.get(k, 0.0) + v
    return SparseTableFactor._raw(f.scope, out)


# ---------------------------------------------------------------------------
# mixed dense/sparse: go dense while the result stays small, sparse otherwise
# ---------------------------------------------------------------------------


def _mixed(op_dense, op_sparse):
    def run(f, g):
        scope = merge_scopes(f.scope, g.scope)
        cells = int(np.prod(_cards(scope), dtype=np.int64))
        if cells <= DENSE_CELL_LIMIT:
            f = to_dense(f) if isinstance(f, SparseTableFactor) else f
            g = to_dense(g) if isinstance(g, SparseTableFactor) else g
            return op_dense(f, g)
        f = to_sparse(f) if isinstance(f, TableFactor) else f
        g = to_sparse(g) if isinstance(g, TableFactor) else g
        return op_sparse(f, g)

    return run


register("multiply", "table", "sparse_table")(_mixed(table_multiply, sparse_multiply))
register("add", "table", "sparse_table")(_mixed(table_add, sparse_add))
register("divide", "table", "sparse_table")(_mixed(table_divide, sparse_divide))
register("divide", "sparse_table", "table")(_mixed(table_divide, sparse_divide))


def all_assignments(scope) -> list[tuple[int, ...]]:
    """Every joint index tuple of a discrete scope, row-major."""
    return list(itertools.product(*(range(v.cardinality) for v in scope)))


def table_from_function(variables, fn) -> TableFactor:
    """Tabulate ``fn(assignment_dict)`` over every joint assignment of ``variables``."""
    variables = list(canonical_scope(variables))
    vals = [fn({v.name: k for v, k in zip(variables, key)}) for key in all_assignments(variables)]
    return TableFactor(variables, np.array(vals, dtype=float).reshape(_cards(variables)))
