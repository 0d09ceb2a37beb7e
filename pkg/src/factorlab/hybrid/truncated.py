"""Gaussian factors restricted to an axis-aligned box.

A :class:`TruncatedGaussian` is a canonical base factor times the indicator
of a half-open box ``lower <= x < upper``.  Mass and moments are computed
lazily (and cached) because products and exact marginals never need them.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..core import Factor, ScalarFactor, Variable, divide, multiply, reduce, register, rename, sum_out
from ..errors import ZeroMass
from ..gaussian import CanonicalGaussian, MixtureFactor, MomentGaussian, from_moment, to_moment
from .truncnorm import box_moments

# below this the box mass is treated as underflow by :func:`truncate`
MIN_LOG_MASS = float(np.log(1e-300))

Box = dict  # name -> (lower, upper)


def as_box(bounds) -> Box:
    """Normalise a box spec to ``{name: (lower, upper)}`` without unbounded axes."""
    out = {}
    for k, (lo, hi) in dict(bounds).items():
        name = k.name if isinstance(k, Variable) else str(k)
        lo, hi = float(lo), float(hi)
        if np.isnan(lo) or np.isnan(hi):
            raise ValueError(f"{name}: NaN box bound")
        if lo == -np.inf and hi == np.inf:
            continue
        out[name] = (lo, hi)
    return out


def intersect(a: Box, b: Box) -> Box:
    out = dict(a)
    for name, (lo, hi) in b.items():
        if name in out:
            lo0, hi0 = out[name]
            out[name] = (max(lo, lo0), min(hi, hi0))
        else:
            out[name] = (lo, hi)
    return out


def is_empty(box: Box) -> bool:
    return any(lo >= hi for lo, hi in box.values())


def inside(box: Box, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    for name, (lo, hi) in box.items():
        x = np.asarray(columns[name], dtype=float)
        mask &= (x >= lo) & (x < hi)
    return mask


def _zeroed(base: CanonicalGaussian) -> CanonicalGaussian:
    return CanonicalGaussian._raw(base.scope, base.K, base.h, -np.inf)


def restrict(base: CanonicalGaussian, box: Box) -> Factor:
    """``base`` times the box indicator, simplified where possible."""
    box = {k: v for k, v in box.items() if k in base.names}
    if is_empty(box):
        return _zeroed(base)
    if not box:
        return base
    return TruncatedGaussian(base, box)


class TruncatedGaussian(Factor):
    """Canonical factor restricted to a half-open axis-aligned box."""

    rep = "truncated"

    def __init__(self, base: CanonicalGaussian, bounds):
        if not isinstance(base, CanonicalGaussian):
            raise TypeError("the base of a truncated Gaussian is a canonical factor")
        box = as_box(bounds)
        unknown = set(box) - set(base.names)
        if unknown:
            raise ValueError(f"box bounds on variables outside the base scope: {sorted(unknown)}")
        self.base = base
        self.box = box
        self.scope = base.scope
        self._stats = None

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.box.get(n, (-np.inf, np.inf))[0] for n in self.names])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.box.get(n, (-np.inf, np.inf))[1] for n in self.names])

    @property
    def is_zero(self) -> bool:
        return self.base.is_zero

    def _compute(self):
        if self._stats is None:
            if self.base.is_zero or is_empty(self.box):
                n = len(self.scope)
                self._stats = (-np.inf, np.zeros(n), np.eye(n))
            else:
                m = to_moment(self.base)
                lp, mean, cov = box_moments(m.mean, m.cov, self.lower, self.upper)
                self._stats = (m.log_weight + lp, mean, cov)
        return self._stats

    @property
    def log_mass(self) -> float:
        return float(self._compute()[0])

    def moments(self) -> MomentGaussian:
        """Mass, mean and covariance of the truncated density as a moment-form factor."""
        lm, mean, cov = self._compute()
        return MomentGaussian._raw(self.scope, mean, cov, lm)

    def log_evaluate_batch(self, columns):
        out = self.base.log_evaluate_batch(columns)
        mask = inside(self.box, columns, len(out))
        return np.where(mask, out, -np.inf)

    def _sum_out(self, names):
        if not names & set(self.box):
            # the indicator does not involve the integrated axes: exact
            return restrict(sum_out(self.base, names), self.box)
        if names == set(self.names):
            return ScalarFactor(self.log_mass)
        lm = self.log_mass
        keep = [v for v in self.scope if v.name not in names]
        if lm == -np.inf:
            return CanonicalGaussian.zero(keep)
        # truncated axes integrated away: keep mass, mean and covariance exactly
        return from_moment(sum_out(self.moments(), names))

    def _reduce(self, evidence):
        for name, x in evidence.items():
            if name in self.box:
                lo, hi = self.box[name]
                if not lo <= x < hi:
                    reduced = reduce(self.base, evidence)
                    if reduced.is_scalar:
                        return ScalarFactor(-np.inf)
                    return _zeroed(reduced)
        reduced = reduce(self.base, evidence)
        if reduced.is_scalar:
            return reduced
        return restrict(reduced, {k: v for k, v in self.box.items() if k not in evidence})

    def _scale(self, log_c):
        out = TruncatedGaussian(self.base._scale(log_c), self.box)
        if self._stats is not None:
            lm, mean, cov = self._stats
            out._stats = (lm + log_c, mean, cov)
        return out

    def _rename(self, mapping):
        box = {mapping[k].name if k in mapping else k: v for k, v in self.box.items()}
        return TruncatedGaussian(rename(self.base, mapping), box)

    def _project(self):
        if self.log_mass == -np.inf:
            return CanonicalGaussian.zero(self.scope)
        return from_moment(self.moments())

    def _summary(self):
        if self.log_mass == -np.inf:
            raise ZeroMass("truncated factor has zero mass")
        return self.moments()._summary()

    def __eq__(self, other):
        return isinstance(other, TruncatedGaussian) and self.base == other.base and self.box == other.box

    __hash__ = None

    def __repr__(self):
        return f"<TruncatedGaussian over ({', '.join(self.names)}) box={self.box}>"


def truncate(f: Factor, bounds) -> TruncatedGaussian:
    """Restrict a normalisable Gaussian to a box, checking that mass survives.

    Raises
    ------
    NotNormalizable
        If ``f`` has no moment form.
    ZeroMass
        If the box mass underflows (below 1e-300).
    """
    if isinstance(f, MomentGaussian):
        f = from_moment(f)
    if not isinstance(f, CanonicalGaussian):
        raise TypeError("truncate expects a Gaussian factor")
    to_moment(f)  # raises NotNormalizable
    box = as_box(bounds)
    t = TruncatedGaussian(f, box)
    if t.log_mass < MIN_LOG_MASS:
        raise ZeroMass(f"box {box} carries no mass")
    return t


@register("multiply", "truncated", "canonical")
def truncated_multiply(t: TruncatedGaussian, g: CanonicalGaussian) -> Factor:
    return restrict(multiply(t.base, g), t.box)


@register("multiply", "truncated", "truncated")
def truncated_multiply_truncated(t: TruncatedGaussian, u: TruncatedGaussian) -> Factor:
    return restrict(multiply(t.base, u.base), intersect(t.box, u.box))


@register("divide", "truncated", "canonical")
def truncated_divide(t: TruncatedGaussian, g: CanonicalGaussian) -> Factor:
    return restrict(divide(t.base, g), t.box)


@register("multiply", "mixture", "truncated")
def mixture_multiply_truncated(m: MixtureFactor, t: TruncatedGaussian) -> MixtureFactor:
    return MixtureFactor._from_log([(lw, multiply(f, t)) for lw, f in m.log_components])


def _as_mixture(f: Factor):
    return f.log_components if isinstance(f, MixtureFactor) else [(0.0, f)]


def _mix(f: Factor, g: Factor) -> MixtureFactor:
    return MixtureFactor._from_log(_as_mixture(f) + _as_mixture(g))


register("add", "truncated", "truncated")(_mix)
register("add", "truncated", "canonical")(_mix)
register("add", "mixture", "truncated")(_mix)

