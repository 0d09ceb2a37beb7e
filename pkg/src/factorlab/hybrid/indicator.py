"""0/1 factors selecting an axis-aligned box per discrete assignment."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..core import Factor, ScalarFactor, Variable, renamed_scope, strict_scope
from ..errors import Unsupported
from ..table import TableFactor
from .truncated import Box, as_box, inside


class IndicatorFactor(Factor):
    """Indicator of ``lower <= x < upper`` where the box may depend on discrete selectors.

    Parameters
    ----------
    selectors : sequence of Variable
        Discrete variables choosing the box (may be empty).
    variables : sequence of Variable
        Continuous variables the boxes constrain.
    regions : mapping
        Selector assignment (tuple of indices in ``selectors`` order, or a
        dict keyed by name) to a box ``{name: (lower, upper)}``.  Missing
        assignments select the empty set.
    """

    rep = "indicator"

    def __init__(self, selectors, variables, regions: Mapping):
        selectors, variables = list(selectors), list(variables)
        if any(not v.discrete for v in selectors):
            raise ValueError("selectors must be discrete")
        if any(v.discrete for v in variables):
            raise ValueError("indicator boxes constrain continuous variables")
        self.selectors = strict_scope(selectors)
        self.continuous = strict_scope(variables)
        self.scope = strict_scope(selectors + variables)
        order = [selectors.index(v) for v in self.selectors]
        names = set(v.name for v in self.continuous)
        self.regions: dict[tuple, Box] = {}
        for key, box in dict(regions).items():
            if isinstance(key, Mapping):
                key = tuple(self.selectors[i].coerce(key[self.selectors[i].name]) for i in range(len(self.selectors)))
            else:
                key = tuple(key) if isinstance(key, (tuple, list)) else (key,)
                if len(key) != len(selectors):
                    raise ValueError(f"region key {key} does not match {len(selectors)} selectors")
                key = tuple(selectors[i].coerce(key[i]) for i in order) if selectors else ()
            box = as_box(box)
            if set(box) - names:
                raise ValueError(f"box mentions variables outside the indicator: {sorted(set(box) - names)}")
            if any(lo > hi for lo, hi in box.values()):
                raise ValueError("box lower bounds must not exceed upper bounds")
            self.regions[key] = box

    @classmethod
    def _raw(cls, selectors, continuous, regions) -> "IndicatorFactor":
        obj = cls.__new__(cls)
        obj.selectors = tuple(selectors)
        obj.continuous = tuple(continuous)
        obj.scope = strict_scope(list(selectors) + list(continuous))
        obj.regions = dict(regions)
        return obj

    def box(self, assignment=()) -> Box | None:
        """The box for a selector assignment, or ``None`` for the empty set."""
        if isinstance(assignment, Mapping):
            assignment = tuple(v.coerce(assignment[v.name]) for v in self.selectors)
        return self.regions.get(tuple(assignment))

    def log_evaluate_batch(self, columns):
        if self.selectors:
            keys = np.column_stack([np.asarray(columns[v.name], dtype=np.int64) for v in self.selectors])
            n = len(keys)
        else:
            n = len(next(iter(columns.values()))) if columns else 1
            keys = np.zeros((n, 0), dtype=np.int64)
        hit = np.zeros(n, dtype=bool)
        for key, box in self.regions.items():
            rows = np.all(keys == np.array(key, dtype=np.int64), axis=1) if key else np.ones(n, dtype=bool)
            hit |= rows & inside(box, columns, n)
        return np.where(hit, 0.0, -np.inf)

    def _reduce(self, evidence):
        sel = [v for v in self.selectors if v.name not in evidence]
        cont = [v for v in self.continuous if v.name not in evidence]
        regions = {}
        for key, box in self.regions.items():
            if any(evidence.get(v.name, k) != k for v, k in zip(self.selectors, key)):
                continue
            ok = all(lo <= evidence[n] < hi for n, (lo, hi) in box.items() if n in evidence)
            if not ok:
                continue
            new_key = tuple(k for v, k in zip(self.selectors, key) if v.name not in evidence)
            regions[new_key] = {n: b for n, b in box.items() if n not in evidence}
        if cont:
            return IndicatorFactor._raw(sel, cont, regions)
        if not sel:
            return ScalarFactor(0.0 if () in regions else -np.inf)
        values = np.zeros([v.cardinality for v in sel])
        for key in regions:
            values[key] = 1.0
        return TableFactor(sel, values)

    def _sum_out(self, names):
        raise Unsupported("an indicator has no finite marginal; multiply it with a density first")

    def _rename(self, mapping):
        regions = {
            key: {mapping[n].name if n in mapping else n: b for n, b in box.items()} for key, box in self.regions.items()
        }
        sel = renamed_scope(self.selectors, mapping)
        cont = renamed_scope(self.continuous, mapping)
        # re-key regions when the selector order changes under renaming
        order = sorted(range(len(sel)), key=lambda i: sel[i].name)
        regions = {tuple(key[i] for i in order): box for key, box in regions.items()}
        return IndicatorFactor._raw([sel[i] for i in order], strict_scope(cont), regions)

    def __eq__(self, other):
        return (
            isinstance(other, IndicatorFactor)
            and self.selectors == other.selectors
            and self.continuous == other.continuous
            and self.regions == other.regions
        )

    __hash__ = None


def region_indicator(selector: Variable, variables, boxes) -> IndicatorFactor:
    """Indicator assigning ``selector = i`` to the points of ``boxes[i]``."""
    return IndicatorFactor([selector], variables, {(i,): b for i, b in enumerate(boxes)})


def partition_index(ind: IndicatorFactor, columns: Mapping[str, np.ndarray]) -> np.ndarray:
    """Selector index of the region containing each point (-1 when none does)."""
    n = len(np.asarray(columns[ind.continuous[0].name]))
    out = np.full(n, -1, dtype=np.int64)
    if len(ind.selectors) != 1:
        raise Unsupported("partition lookup needs exactly one selector")
    for (k,), box in sorted(ind.regions.items()):
        mask = inside(box, columns, n) & (out < 0)
        out[mask] = k
    return out

