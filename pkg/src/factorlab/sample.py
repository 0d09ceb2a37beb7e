"""Weighted particle sets as factors.

A :class:`SampleFactor` approximates a non-negative function by weighted
point masses; its total weight estimates the function's total mass.
Weights are kept as log-weights so long filtering runs cannot underflow.

Randomness is explicit.  Every sample factor carries a
:class:`numpy.random.SeedSequence`; an operation that needs random numbers
derives a child sequence from the parent's and a fixed tag, so a run is
reproducible from the root seed alone.  ``lineage`` lists the tags that
produced a factor.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .core import Factor, ScalarFactor, Summary, Variable, merge_scopes, multiply, register, strict_scope
from .errors import Degenerate, NotNormalizable, Unsupported, UnsupportedPair, ZeroMass
from .gaussian import CanonicalGaussian, MixtureFactor, MomentGaussian, to_moment
from .table import SparseTableFactor, TableFactor, all_assignments

RESAMPLE_THRESHOLD = 0.5  # resample when ESS < threshold * n


def as_seed(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(seed.integers(0, 2**63, size=4).tolist())
    return np.random.SeedSequence(seed)


def child_seed(seed: np.random.SeedSequence, tag: str) -> np.random.SeedSequence:
    """Deterministic child of ``seed`` for the operation named ``tag``."""
    return np.random.SeedSequence([*seed.generate_state(4), zlib.crc32(tag.encode())])


class SampleFactor(Factor):
    """Weighted particles over a scope.

    Parameters
    ----------
    variables : sequence of Variable
    columns : mapping
        Variable name to a length-``n`` array of particle values.
    log_weights : array_like, optional
        Defaults to zero (unit weights).
    seed : int or SeedSequence, optional
        Root of the random stream for operations on this factor.
    lineage : tuple of str
        Tags of the operations that produced it.
    """

    rep = "sample"

    def __init__(self, variables, columns: Mapping, log_weights=None, seed=None, lineage=()):
        variables = list(variables)
        scope = strict_scope(variables)
        cols = {}
        n = None
        for v in scope:
            if v.name not in columns:
                raise ValueError(f"no particle values for {v.name!r}")
            x = np.asarray(columns[v.name], dtype=np.int64 if v.discrete else float).reshape(-1)
            if v.discrete and x.size and (x.min() < 0 or x.max() >= v.cardinality):
                raise ValueError(f"{v.name}: particle index out of range")
            if n is not None and len(x) != n:
                raise ValueError("particle columns differ in length")
            n = len(x)
            cols[v.name] = x
        if n is None:
            n = len(np.asarray(log_weights)) if log_weights is not None else 1
        lw = np.zeros(n) if log_weights is None else np.asarray(log_weights, dtype=float).reshape(-1)
        if len(lw) != n:
            raise ValueError("one weight per particle")
        if n == 0:
            raise Degenerate("a sample factor needs at least one particle")
        self._set(scope, cols, lw, as_seed(seed), tuple(lineage))

    def _set(self, scope, cols, lw, seed, lineage):
        for x in cols.values():
            x.setflags(write=False)
        lw = np.array(lw, dtype=float)
        lw.setflags(write=False)
        self.scope = tuple(scope)
        self._cols = cols
        self._lw = lw
        self.seed = seed
        self.lineage = lineage

    @classmethod
    def _raw(cls, scope, cols, lw, seed, lineage) -> "SampleFactor":
        obj = cls.__new__(cls)
        obj._set(scope, cols, lw, seed, lineage)
        return obj

    def _derive(self, scope, cols, lw, tag) -> "SampleFactor":
        return SampleFactor._raw(scope, cols, lw, child_seed(self.seed, tag), self.lineage + (tag,))

    def rng(self, tag: str) -> np.random.Generator:
        return np.random.default_rng(child_seed(self.seed, tag))

    @property
    def n(self) -> int:
        return len(self._lw)

    @property
    def columns(self) -> dict[str, np.ndarray]:
        return dict(self._cols)

    @property
    def log_weights(self) -> np.ndarray:
        return self._lw

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self._lw)

    @property
    def log_total(self) -> float:
        return float(logsumexp(self._lw))

    def particles(self) -> list[dict]:
        return [{k: x[i].item() for k, x in self._cols.items()} for i in range(self.n)]

    # -- unary hooks ------------------------------------------------------

    def _sum_out(self, names):
        keep = [v for v in self.scope if v.name not in names]
        if not keep:
            return ScalarFactor(self.log_total)
        return self._derive(keep, {v.name: self._cols[v.name] for v in keep}, self._lw, "sum_out")

    def _reduce(self, evidence):
        for name in evidence:
            if not self.variable(name).discrete:
                raise Unsupported(f"cannot condition particles on continuous {name!r}: a measure-zero event")
        rows = np.ones(self.n, dtype=bool)
        for name, k in evidence.items():
            rows &= self._cols[name] == k
        if not rows.any():
            raise Degenerate(f"no particle matches the evidence {evidence}")
        keep = [v for v in self.scope if v.name not in evidence]
        lw = self._lw[rows]
        if not keep:
            return ScalarFactor(float(logsumexp(lw)))
        return self._derive(keep, {v.name: self._cols[v.name][rows] for v in keep}, lw, "reduce")

    def _scale(self, log_c):
        return SampleFactor._raw(self.scope, self._cols, self._lw + log_c, self.seed, self.lineage)

    def _rename(self, mapping):
        scope = [mapping.get(v.name, v) for v in self.scope]
        cols = {mapping[k].name if k in mapping else k: x for k, x in self._cols.items()}
        return SampleFactor._raw(strict_scope(scope), cols, self._lw, self.seed, self.lineage)

    def _project(self):
        if effective_sample_size(self) < RESAMPLE_THRESHOLD * self.n:
            return resample_systematic(self)
        return self

    def _summary(self):
        w = _normalized(self._lw)
        out = Summary(ess=effective_sample_size(self))
        for v in self.scope:
            x = self._cols[v.name]
            if v.discrete:
                out.probs[v.name] = np.bincount(x, weights=w, minlength=v.cardinality)
            else:
                m = float(w @ x)
                out.mean[v.name] = m
                out.var[v.name] = float(w @ (x - m) ** 2)
        return out

    def __eq__(self, other):
        return (
            isinstance(other, SampleFactor)
            and self.scope == other.scope
            and np.array_equal(self._lw, other._lw)
            and all(np.array_equal(self._cols[k], other._cols[k]) for k in self._cols)
        )

    __hash__ = None

    def __repr__(self):
        return f"<SampleFactor over ({', '.join(self.names)}) n={self.n}>"


def _normalized(lw: np.ndarray) -> np.ndarray:
    total = logsumexp(lw)
    if total == -np.inf:
        raise Degenerate("all particle weights are zero")
    return np.exp(lw - total)


def effective_sample_size(s: SampleFactor) -> float:
    """``(sum w)^2 / sum w^2``."""
    w = _normalized(s.log_weights)
    return float(1.0 / np.sum(w * w))


def resample_systematic(s: SampleFactor, n: int | None = None, rng=None) -> SampleFactor:
    """Systematic resampling to ``n`` equally weighted particles, preserving total mass."""
    n = s.n if n is None else int(n)
    if n < 1:
        raise ValueError("need at least one particle")
    w = _normalized(s.log_weights)
    rng = s.rng("resample") if rng is None else np.random.default_rng(rng)
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    idx = np.minimum(np.searchsorted(cdf, positions, side="right"), s.n - 1)
    cols = {k: x[idx] for k, x in s._cols.items()}
    lw = np.full(n, s.log_total - np.log(n))
    return s._derive(s.scope, cols, lw, "resample")


@dataclass
class SampleMoments:
    """Weighted estimates: a moment-form Gaussian over the continuous variables
    and a normalised joint histogram over the discrete ones."""

    continuous: MomentGaussian | None
    discrete: TableFactor | None


def estimate_moments(s: SampleFactor) -> SampleMoments:
    w = _normalized(s.log_weights)
    cont = [v for v in s.scope if not v.discrete]
    disc = [v for v in s.scope if v.discrete]
    gauss = table = None
    if cont:
        # column by column so a marginal's estimate is bit-identical to the joint's
        cols = [s.columns[v.name] for v in cont]
        mean = np.array([w @ x for x in cols])
        D = [x - m for x, m in zip(cols, mean)]
        cov = np.array([[(w * a) @ b for b in D] for a in D])
        try:
            gauss = MomentGaussian(cont, mean, cov, s.log_total)
        except NotNormalizable:
            raise Degenerate("particles do not spread enough to estimate a covariance") from None
    if disc:
        cards = [v.cardinality for v in disc]
        flat = np.ravel_multi_index(tuple(s.columns[v.name] for v in disc), cards)
        hist = np.bincount(flat, weights=w, minlength=int(np.prod(cards)))
        table = TableFactor(disc, hist.reshape(cards))
    return SampleMoments(gauss, table)


# ---------------------------------------------------------------------------
# drawing from exact factors
# ---------------------------------------------------------------------------


def _draw_index(rng, log_p: np.ndarray, n: int) -> np.ndarray:
    p = _normalized(np.asarray(log_p, dtype=float))
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(p) - 1)


def _gaussian_parts(f: Factor):
    """(log-mass, discrete assignment, moment Gaussian) triples making up ``f``."""
    if isinstance(f, MomentGaussian):
        return [(f.log_weight, {}, f)]
    if isinstance(f, CanonicalGaussian):
        try:
            m = to_moment(f)
        except (NotNormalizable, ZeroMass) as err:
            raise Unsupported(f"cannot sample a canonical factor without moment form: {err}") from None
        return [(m.log_weight, {}, m)]
    if isinstance(f, MixtureFactor):
        out = []
        for lw, c in f.log_components:
            for lm, d, m in _gaussian_parts(c):
                out.append((lw + lm, d, m))
        return out
    if f.rep == "conditional":
        out = []
        for key, branch in f.table.items():
            if getattr(branch, "is_zero", False):
                continue
            d = {v.name: k for v, k in zip(f.discrete, key)}
            for lm, d2, m in _gaussian_parts(branch):
                out.append((lm, {**d, **d2}, m))
        return out
    raise Unsupported(f"cannot sample from a {f.rep} factor")


def sample_from(f: Factor, n: int, seed=None) -> SampleFactor:
    """``n`` independent draws from ``f`` normalised, each weighted ``mass / n``.

    Supports tables, Gaussians, mixtures of Gaussians and conditional
    factors with Gaussian branches.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one particle")
    seed = as_seed(seed)
    rng = np.random.default_rng(child_seed(seed, "sample_from"))
    if isinstance(f, SparseTableFactor):
        f = f.to_dense()
    if isinstance(f, TableFactor):
        flat = f.values
        total = flat.sum()
        if total <= 0:
            raise ZeroMass("cannot sample a zero table")
        with np.errstate(divide="ignore"):
            idx = _draw_index(rng, np.log(flat), n)
        keys = np.unravel_index(idx, f.table.shape)
        cols = {v.name: keys[i] for i, v in enumerate(f.scope)}
        return SampleFactor(f.scope, cols, np.full(n, np.log(total / n)), seed, ("sample_from",))
    parts = [p for p in _gaussian_parts(f) if p[0] > -np.inf]
    if not parts:
        raise ZeroMass("cannot sample a factor with zero mass")
    log_mass = np.array([p[0] for p in parts])
    which = _draw_index(rng, log_mass, n) if len(parts) > 1 else np.zeros(n, dtype=np.int64)
    cont = [v for v in f.scope if not v.discrete]
    disc = [v for v in f.scope if v.discrete]
    cols = {v.name: np.empty(n) for v in cont}
    cols.update({v.name: np.zeros(n, dtype=np.int64) for v in disc})
    for j, (_, d, m) in enumerate(parts):
        rows = np.nonzero(which == j)[0]
        if not len(rows):
            continue
        L = np.linalg.cholesky(m.cov)
        z = rng.standard_normal((len(rows), len(m.scope)))
        x = m.mean + z @ L.T
        for i, v in enumerate(m.scope):
            cols[v.name][rows] = x[:, i]
        for name, k in d.items():
            cols[name][rows] = k
    total = float(logsumexp(log_mass))
    return SampleFactor(f.scope, cols, np.full(n, total - np.log(n)), seed, ("sample_from",))


def sample_prior(factors, n: int, seed=None) -> Factor:
    """Particles for a product of factors: draw from the first, multiply in the rest."""
    factors = [factors] if isinstance(factors, Factor) else list(factors)
    return multiply(sample_from(factors[0], n, seed), *factors[1:])


# ---------------------------------------------------------------------------
# binary operations
# ---------------------------------------------------------------------------


@register("multiply", "sample", "*")
def sample_multiply(s: SampleFactor, f: Factor) -> SampleFactor:
    """Reweight by ``f``, first drawing any variables ``f`` adds to the scope.

    New discrete variables are drawn from ``f`` given each particle (the
    particle's weight picks up the sum over their values); new continuous
    variables are drawn from ``f`` conditionally when ``f`` supports it.
    """
    if f.rep == "sample":
        raise UnsupportedPair("the product of two particle sets is not defined")
    scope = merge_scopes(s.scope, f.scope)
    new = [v for v in f.scope if v not in s.scope]
    cols = dict(s._cols)
    if not new:
        lw = s.log_weights + f.log_evaluate_batch(cols)
        tag = "reweight"
    elif all(v.discrete for v in new):
        lw, drawn = _extend_discrete(s, f, new)
        cols.update(drawn)
        tag = "extend_discrete"
    elif not any(v.discrete for v in new) and hasattr(f, "_extend_samples"):
        rng = s.rng("extend_continuous")
        drawn, log_mass = f._extend_samples(cols, [v.name for v in new], rng)
        cols.update(drawn)
        lw = s.log_weights + log_mass
        tag = "extend_continuous"
    else:
        raise Unsupported(f"cannot extend particles with {[v.name for v in new]} from a {f.rep} factor")
    if not np.any(lw > -np.inf):
        raise Degenerate("every particle received zero weight")
    return s._derive(scope, cols, lw, tag)


def _extend_discrete(s: SampleFactor, f: Factor, new: list[Variable]):
    keys = all_assignments(new)
    n = s.n
    L = np.empty((n, len(keys)))
    for j, key in enumerate(keys):
        cols = dict(s._cols)
        for v, k in zip(new, key):
            cols[v.name] = np.full(n, k, dtype=np.int64)
        L[:, j] = f.log_evaluate_batch({v.name: cols[v.name] for v in f.scope})
    total = logsumexp(L, axis=1)
    live = total > -np.inf
    u = s.rng("extend_discrete").random(n)
    choice = np.zeros(n, dtype=np.int64)
    if live.any():
        p = np.exp(L[live] - total[live, None])
        cdf = np.cumsum(p, axis=1)
        cdf[:, -1] = 1.0
        choice[live] = np.minimum((cdf < u[live, None]).sum(axis=1), len(keys) - 1)
    key_arr = np.array(keys, dtype=np.int64).reshape(len(keys), len(new))
    drawn = {v.name: key_arr[choice, i] for i, v in enumerate(new)}
    return s.log_weights + total, drawn


@register("add", "sample", "sample")
def sample_add(s: SampleFactor, t: SampleFactor) -> SampleFactor:
    cols = {v.name: np.concatenate([s._cols[v.name], t._cols[v.name]]) for v in s.scope}
    return s._derive(s.scope, cols, np.concatenate([s.log_weights, t.log_weights]), "add")
