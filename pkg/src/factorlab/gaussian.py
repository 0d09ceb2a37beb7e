"""Continuous factors in canonical (information) form, moment form, and mixtures.

A canonical factor over x has value ``exp(-0.5 x'Kx + h'x + g)``.  ``K`` need
not be positive definite (quotients of Gaussians are legal factors); it only
has to be when integrating or converting to moment form.  ``g = -inf``
denotes the zero factor.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import logsumexp

from .core import (
    Factor,
    ScalarFactor,
    Summary,
    divide,
    log_scalar,
    merge_scopes,
    multiply,
    reduce,
    register,
    register_promotion,
    rename,
    renamed_scope,
    strict_scope,
    sum_out,
)
from .errors import DivisionByZero, DomainMismatch, NotIntegrable, NotNormalizable, ScopeMismatch, ZeroMass

LOG_2PI = float(np.log(2.0 * np.pi))
MIN_PIVOT = 1e-10
SYMMETRY_TOL = 1e-12


def _check_continuous(variables):
    for v in variables:
        if v.discrete:
            raise DomainMismatch(f"Gaussian factors need continuous variables, {v.name!r} is discrete")


def _symmetrize(K: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(K)))) if K.size else 1.0
    if not np.allclose(K, K.T, rtol=0.0, atol=SYMMETRY_TOL * scale):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (K + K.T)


def spd_solver(M: np.ndarray, error=NotIntegrable, what: str = "matrix"):
    """Cholesky factor of ``M`` with the minimum-eigenvalue guard.

    Returns ``(cho, logdet)``.  Raises ``error`` when the smallest eigenvalue
    is at or below ``MIN_PIVOT``.
    """
    if M.size == 0:
        return None, 0.0
    if not np.all(np.isfinite(M)):
        raise error(f"{what} has non-finite entries")
    lam = np.linalg.eigvalsh(M)
    if lam[0] <= MIN_PIVOT:
        raise error(f"{what} is not positive definite (min eigenvalue {lam[0]:.3g})")
    cho = cho_factor(M, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return cho, logdet


def _solve(cho, b):
    if cho is None:
        return np.zeros_like(b)
    return cho_solve(cho, b)


class CanonicalGaussian(Factor):
    """Gaussian-form factor ``exp(-0.5 x'Kx + h'x + g)`` over continuous variables."""

    rep = "canonical"

    def __init__(self, variables, K, h=None, g: float = 0.0):
        variables = list(variables)
        _check_continuous(variables)
        scope = strict_scope(variables)
        n = len(variables)
        K = np.array(K, dtype=float).reshape(n, n)
        h = np.zeros(n) if h is None else np.array(h, dtype=float).reshape(n)
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(h))):
            raise ValueError("K and h must be finite")
        g = float(g)
        if np.isnan(g) or g == np.inf:
            raise ValueError("g must be finite or -inf")
        K = _symmetrize(K)
        order = [variables.index(v) for v in scope]
        self._set(scope, K[np.ix_(order, order)], h[order], g)

    def _set(self, scope, K, h, g):
        K = np.array(K, dtype=float)
        h = np.array(h, dtype=float)
        K.setflags(write=False)
        h.setflags(write=False)
        self.scope = tuple(scope)
        self._K, self._h, self._g = K, h, float(g)

    @classmethod
    def _raw(cls, scope, K, h, g) -> "CanonicalGaussian":
        obj = cls.__new__(cls)
        obj._set(scope, K, h, g)
        return obj

    @classmethod
    def from_moments(cls, variables, mean, cov, log_weight: float = 0.0) -> "CanonicalGaussian":
        return from_moment(MomentGaussian(variables, mean, cov, log_weight))

    @classmethod
    def unit(cls, variables) -> "CanonicalGaussian":
        variables = list(variables)
        n = len(variables)
        return cls(variables, np.zeros((n, n)), np.zeros(n), 0.0)

    @classmethod
    def zero(cls, variables) -> "CanonicalGaussian":
        variables = list(variables)
        n = len(variables)
        return cls(variables, np.eye(n), np.zeros(n), -np.inf)

    @property
    def K(self) -> np.ndarray:
        return self._K

    @property
    def h(self) -> np.ndarray:
        return self._h

    @property
    def g(self) -> float:
        return self._g

    @property
    def is_zero(self) -> bool:
        return self._g == -np.inf

    def embed(self, scope) -> tuple[np.ndarray, np.ndarray]:
        """``K`` and ``h`` zero-padded onto a canonical superset scope."""
        idx = [scope.index(v) for v in self.scope]
        n = len(scope)
        K = np.zeros((n, n))
        h = np.zeros(n)
        K[np.ix_(idx, idx)] = self._K
        h[idx] = self._h
        return K, h

    def _index(self, names):
        inside = [i for i, v in enumerate(self.scope) if v.name in names]
        outside = [i for i, v in enumerate(self.scope) if v.name not in names]
        return inside, outside

    def log_evaluate_batch(self, columns):
        if not self.scope:
            n = len(next(iter(columns.values()))) if columns else 1
            return np.full(n, self._g)
        X = np.column_stack([np.asarray(columns[v.name], dtype=float) for v in self.scope])
        return -0.5 * np.einsum("ij,jk,ik->i", X, self._K, X) + X @ self._h + self._g

    def _sum_out(self, names):
        x, y = self._index(names)
        Kxx = self._K[np.ix_(x, x)]
        cho, logdet = spd_solver(Kxx, NotIntegrable, "precision block of the integrated variables")
        hx = self._h[x]
        Kyx = self._K[np.ix_(y, x)]
        sol_h = _solve(cho, hx)
        g = self._g + 0.5 * (len(x) * LOG_2PI - logdet + hx @ sol_h)
        if not y:
            return ScalarFactor(g if self._g > -np.inf else -np.inf)
        K = self._K[np.ix_(y, y)] - Kyx @ _solve(cho, Kyx.T)
        h = self._h[y] - Kyx @ sol_h
        return CanonicalGaussian._raw([self.scope[i] for i in y], 0.5 * (K + K.T), h, g)

    def _reduce(self, evidence):
        x, y = self._index(evidence)
        xe = np.array([evidence[self.scope[i].name] for i in x], dtype=float)
        Kxx = self._K[np.ix_(x, x)]
        g = self._g + self._h[x] @ xe - 0.5 * xe @ Kxx @ xe
        if not y:
            return ScalarFactor(g)
        h = self._h[y] - self._K[np.ix_(y, x)] @ xe
        return CanonicalGaussian._raw([self.scope[i] for i in y], self._K[np.ix_(y, y)], h, g)

    def _scale(self, log_c):
        return CanonicalGaussian._raw(self.scope, self._K, self._h, self._g + log_c)

    def _rename(self, mapping):
        return CanonicalGaussian(renamed_scope(self.scope, mapping), self._K, self._h, self._g)

    def _summary(self):
        return to_moment(self)._summary()

    @property
    def log_mass(self) -> float:
        """Log of the integral over all variables (requires positive-definite K)."""
        return to_moment(self).log_weight

    def moments(self) -> "MomentGaussian":
        return to_moment(self)

    def _extend_samples(self, columns, new_names, rng):
        """Draw the variables ``new_names`` given the others, per particle.

        Returns the new columns and, per particle, the log of the integral
        of this factor over the new variables.
        """
        y, x = self._index(new_names)
        Kyy = self._K[np.ix_(y, y)]
        cho, logdet = spd_solver(Kyy, NotIntegrable, "precision block of the sampled variables")
        n = len(next(iter(columns.values())))
        X = np.column_stack([np.asarray(columns[self.scope[i].name], dtype=float) for i in x]) if x else np.zeros((n, 0))
        eta = self._h[y][None, :] - X @ self._K[np.ix_(y, x)].T
        mean = cho_solve(cho, eta.T).T
        L = cho[0] if cho[1] else cho[0].T
        L = np.tril(L)
        z = rng.standard_normal((n, len(y)))
        # K = L L'  =>  L'^{-1} z has covariance K^{-1}
        draws = mean + solve_triangular(L.T, z.T, lower=False).T
        Kxx = self._K[np.ix_(x, x)]
        log_mass = (
            self._g
            + X @ self._h[x]
            - 0.5 * np.einsum("ij,jk,ik->i", X, Kxx, X)
            + 0.5 * (len(y) * LOG_2PI - logdet + np.einsum("ij,ij->i", eta, mean))
        )
        new_cols = {self.scope[i].name: draws[:, j] for j, i in enumerate(y)}
        return new_cols, log_mass

    def __eq__(self, other):
        return (
            isinstance(other, CanonicalGaussian)
            and self.scope == other.scope
            and np.array_equal(self._K, other._K)
            and np.array_equal(self._h, other._h)
            and self._g == other._g
        )

    __hash__ = None


class MomentGaussian(Factor):
    """Gaussian factor in mean/covariance form with total mass ``exp(log_weight)``."""

    rep = "moment"

    def __init__(self, variables, mean, cov, log_weight: float = 0.0):
        variables = list(variables)
        _check_continuous(variables)
        scope = strict_scope(variables)
        n = len(variables)
        mean = np.array(mean, dtype=float).reshape(n)
        cov = _symmetrize(np.array(cov, dtype=float).reshape(n, n))
        if n and np.linalg.eigvalsh(cov)[0] <= MIN_PIVOT:
            raise NotNormalizable("covariance is not positive definite")
        order = [variables.index(v) for v in scope]
        self._set(scope, mean[order], cov[np.ix_(order, order)], log_weight)

    def _set(self, scope, mean, cov, log_weight):
        mean = np.array(mean, dtype=float)
        cov = np.array(cov, dtype=float)
        mean.setflags(write=False)
        cov.setflags(write=False)
        self.scope = tuple(scope)
        self._mean, self._cov, self._lw = mean, cov, float(log_weight)

    @classmethod
    def _raw(cls, scope, mean, cov, log_weight) -> "MomentGaussian":
        obj = cls.__new__(cls)
        obj._set(scope, mean, cov, log_weight)
        return obj

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def cov(self) -> np.ndarray:
        return self._cov

    covariance = cov

    @property
    def log_weight(self) -> float:
        return self._lw

    def log_evaluate_batch(self, columns):
        if not self.scope:
            n = len(next(iter(columns.values()))) if columns else 1
            return np.full(n, self._lw)
        X = np.column_stack([np.asarray(columns[v.name], dtype=float) for v in self.scope])
        cho, logdet = spd_solver(self._cov, NotNormalizable, "covariance")
        D = X - self._mean
        maha = np.einsum("ij,ij->i", D, cho_solve(cho, D.T).T)
        return self._lw - 0.5 * (len(self.scope) * LOG_2PI + logdet + maha)

    def _sum_out(self, names):
        keep = [i for i, v in enumerate(self.scope) if v.name not in names]
        if not keep:
            return ScalarFactor(self._lw)
        return MomentGaussian._raw([self.scope[i] for i in keep], self._mean[keep], self._cov[np.ix_(keep, keep)], self._lw)

    def _reduce(self, evidence):
        x = [i for i, v in enumerate(self.scope) if v.name in evidence]
        y = [i for i, v in enumerate(self.scope) if v.name not in evidence]
        xe = np.array([evidence[self.scope[i].name] for i in x])
        Sxx = self._cov[np.ix_(x, x)]
        cho, logdet = spd_solver(Sxx, NotNormalizable, "covariance")
        d = xe - self._mean[x]
        sol = cho_solve(cho, d)
        lw = self._lw - 0.5 * (len(x) * LOG_2PI + logdet + d @ sol)
        if not y:
            return ScalarFactor(lw)
        Syx = self._cov[np.ix_(y, x)]
        mean = self._mean[y] + Syx @ sol
        cov = self._cov[np.ix_(y, y)] - Syx @ cho_solve(cho, Syx.T)
        return MomentGaussian._raw([self.scope[i] for i in y], mean, 0.5 * (cov + cov.T), lw)

    def _scale(self, log_c):
        return MomentGaussian._raw(self.scope, self._mean, self._cov, self._lw + log_c)

    def _rename(self, mapping):
        return MomentGaussian(renamed_scope(self.scope, mapping), self._mean, self._cov, self._lw)

    def _summary(self):
        return Summary(
            mean={v.name: float(self._mean[i]) for i, v in enumerate(self.scope)},
            var={v.name: float(self._cov[i, i]) for i, v in enumerate(self.scope)},
        )

    def moments(self) -> "MomentGaussian":
        return self

    @property
    def log_mass(self) -> float:
        return self._lw

    def __eq__(self, other):
        return (
            isinstance(other, MomentGaussian)
            and self.scope == other.scope
            and np.array_equal(self._mean, other._mean)
            and np.array_equal(self._cov, other._cov)
            and self._lw == other._lw
        )

    __hash__ = None


def to_moment(f: CanonicalGaussian) -> MomentGaussian:
    """Mean/covariance form; the log-weight is the log of the total mass."""
    if f.is_zero:
        raise ZeroMass("zero factor has no moment form")
    cho, logdet = spd_solver(f.K, NotNormalizable, "precision matrix")
    cov = _solve(cho, np.eye(len(f.scope)))
    mean = cov @ f.h
    log_weight = f.g + 0.5 * (len(f.scope) * LOG_2PI - logdet + f.h @ mean)
    return MomentGaussian._raw(f.scope, mean, 0.5 * (cov + cov.T), log_weight)


def from_moment(m: MomentGaussian) -> CanonicalGaussian:
    cho, logdet = spd_solver(m.cov, NotNormalizable, "covariance")
    K = _solve(cho, np.eye(len(m.scope)))
    K = 0.5 * (K + K.T)
    h = K @ m.mean
    g = m.log_weight - 0.5 * (len(m.scope) * LOG_2PI + logdet) - 0.5 * m.mean @ h
    return CanonicalGaussian._raw(m.scope, K, h, g)


def linear_gaussian(inputs, outputs, matrix, offset, covariance) -> CanonicalGaussian:
    """Conditional density ``outputs ~ N(matrix @ inputs + offset, covariance)`` as a canonical factor."""
    inputs, outputs = list(inputs), list(outputs)
    A = np.array(matrix, dtype=float).reshape(len(outputs), len(inputs))
    b = np.array(offset, dtype=float).reshape(len(outputs))
    Q = np.array(covariance, dtype=float).reshape(len(outputs), len(outputs))
    cho, logdet = spd_solver(_symmetrize(Q), NotNormalizable, "noise covariance")
    P = _solve(cho, np.eye(len(outputs)))
    # joint in (inputs, outputs): quadratic form of (y - A x - b)
    M = np.hstack([-A, np.eye(len(outputs))])
    K = M.T @ P @ M
    h = M.T @ P @ b
    g = -0.5 * (len(outputs) * LOG_2PI + logdet) - 0.5 * b @ P @ b
    return CanonicalGaussian(inputs + outputs, 0.5 * (K + K.T), h, g)


class MixtureFactor(Factor):
    """Weighted sum of continuous factors over a common scope.

    Components are usually canonical Gaussians; truncated Gaussians appear
    in hybrid models.  Identical canonical components are merged.
    """

    rep = "mixture"

    def __init__(self, components: Iterable[tuple[float, Factor]]):
        comps = []
        for w, f in components:
            w = float(w)
            if not np.isfinite(w) or w < 0:
                raise ValueError("mixture weights must be finite and non-negative")
            with np.errstate(divide="ignore"):
                comps.append((float(np.log(w)), f))
        self._init(comps)

    def _init(self, comps):
        if not comps:
            raise ValueError("a mixture needs at least one component")
        scope = comps[0][1].scope
        for _, f in comps:
            if set(f.names) != set(v.name for v in scope):
                raise ScopeMismatch("mixture components must share their scope")
            merge_scopes(scope, f.scope)
        self.scope = tuple(scope)
        self._comps = tuple(_merge_identical(comps))

    @classmethod
    def _from_log(cls, comps) -> "MixtureFactor":
        obj = cls.__new__(cls)
        obj._init(list(comps))
        return obj

    @property
    def components(self) -> list[tuple[float, Factor]]:
        return [(float(np.exp(lw)), f) for lw, f in self._comps]

    @property
    def log_components(self) -> list[tuple[float, Factor]]:
        return list(self._comps)

    def log_evaluate_batch(self, columns):
        vals = np.stack([lw + f.log_evaluate_batch(columns) for lw, f in self._comps])
        return logsumexp(vals, axis=0)

    def _map(self, fn) -> Factor:
        parts = [(lw, fn(f)) for lw, f in self._comps]
        if parts[0][1].is_scalar:
            return ScalarFactor(float(logsumexp([lw + log_scalar(f) for lw, f in parts])))
        return MixtureFactor._from_log(parts)

    def _sum_out(self, names):
        return self._map(lambda f: sum_out(f, names))

    def _reduce(self, evidence):
        return self._map(lambda f: reduce(f, evidence))

    def _scale(self, log_c):
        return MixtureFactor._from_log([(lw + log_c, f) for lw, f in self._comps])

    def _rename(self, mapping):
        return MixtureFactor._from_log([(lw, rename(f, mapping)) for lw, f in self._comps])

    @property
    def log_mass(self) -> float:
        return float(logsumexp([lw + _component_log_mass(f) for lw, f in self._comps]))

    def moments(self) -> MomentGaussian:
        return moment_match_mixture(self)

    def _project(self):
        if self.log_mass == -np.inf:
            return CanonicalGaussian.zero(self.scope)
        return from_moment(moment_match_mixture(self))

    def _summary(self):
        return moment_match_mixture(self)._summary()

    def __eq__(self, other):
        return isinstance(other, MixtureFactor) and self.scope == other.scope and self._comps == other._comps

    __hash__ = None


def _component_log_mass(f: Factor) -> float:
    if getattr(f, "is_zero", False):
        return -np.inf
    return f.log_mass


def _merge_identical(comps):
    out: list[tuple[float, Factor]] = []
    for lw, f in comps:
        if isinstance(f, CanonicalGaussian):
            for i, (lw2, f2) in enumerate(out):
                if (
                    isinstance(f2, CanonicalGaussian)
                    and f2.scope == f.scope
                    and np.array_equal(f2.K, f.K)
                    and np.array_equal(f2.h, f.h)
                ):
                    merged = np.logaddexp(lw + f.g, lw2 + f2.g)
                    out[i] = (0.0, CanonicalGaussian._raw(f.scope, f.K, f.h, merged))
                    break
            else:
                out.append((lw, f))
        else:
            out.append((lw, f))
    return out


def moment_match_mixture(m: MixtureFactor) -> MomentGaussian:
    """Single Gaussian with the mixture's total mass, mean and covariance."""
    scope = m.scope
    parts = []
    for lw, f in m.log_components:
        if lw == -np.inf or getattr(f, "is_zero", False):
            continue
        mg = f.moments()
        if mg.log_weight == -np.inf:
            continue
        order = [mg.names.index(v.name) for v in scope]
        parts.append((lw + mg.log_weight, mg.mean[order], mg.cov[np.ix_(order, order)]))
    if not parts:
        raise ZeroMass("mixture has zero total mass")
    logw = np.array([p[0] for p in parts])
    total = float(logsumexp(logw))
    w = np.exp(logw - total)
    means = np.stack([p[1] for p in parts])
    mean = w @ means
    cov = np.zeros((len(scope), len(scope)))
    for wi, (_, mu, S) in zip(w, parts):
        d = mu - mean
        cov += wi * (S + np.outer(d, d))
    return MomentGaussian._raw(scope, mean, 0.5 * (cov + cov.T), total)


register_promotion("moment", "canonical", from_moment)
register_promotion("canonical", "moment", to_moment)


@register("multiply", "canonical", "canonical")
def canonical_multiply(f: CanonicalGaussian, g: CanonicalGaussian) -> CanonicalGaussian:
    scope = merge_scopes(f.scope, g.scope)
    Kf, hf = f.embed(scope)
    Kg, hg = g.embed(scope)
    return CanonicalGaussian._raw(scope, Kf + Kg, hf + hg, f.g + g.g)


@register("divide", "canonical", "canonical")
def canonical_divide(f: CanonicalGaussian, g: CanonicalGaussian) -> CanonicalGaussian:
    scope = merge_scopes(f.scope, g.scope)
    Kf, hf = f.embed(scope)
    Kg, hg = g.embed(scope)
    if f.is_zero:
        return CanonicalGaussian._raw(scope, Kf - Kg, hf - hg, -np.inf)
    if g.is_zero:
        raise DivisionByZero("non-zero Gaussian divided by the zero factor")
    return CanonicalGaussian._raw(scope, Kf - Kg, hf - hg, f.g - g.g)


@register("add", "canonical", "canonical")
def canonical_add(f: CanonicalGaussian, g: CanonicalGaussian) -> MixtureFactor:
    return MixtureFactor._from_log([(0.0, f), (0.0, _align_like(g, f))])


def _align_like(g: Factor, f: Factor) -> Factor:
    if g.scope != f.scope:
        raise DomainMismatch("component scopes disagree")
    return g


@register("multiply", "mixture", "canonical")
def mixture_multiply(m: MixtureFactor, g: Factor) -> MixtureFactor:
    return MixtureFactor._from_log([(lw, multiply(f, g)) for lw, f in m.log_components])


@register("multiply", "mixture", "mixture")
def mixture_multiply_mixture(m: MixtureFactor, n: MixtureFactor) -> MixtureFactor:
    return MixtureFactor._from_log(
        [(lw1 + lw2, multiply(f1, f2)) for lw1, f1 in m.log_components for lw2, f2 in n.log_components]
    )


@register("divide", "mixture", "canonical")
def mixture_divide(m: MixtureFactor, g: CanonicalGaussian) -> MixtureFactor:
    return MixtureFactor._from_log([(lw, divide(f, g)) for lw, f in m.log_components])


@register("add", "mixture", "mixture")
def mixture_add(m: MixtureFactor, n: MixtureFactor) -> MixtureFactor:
    return MixtureFactor._from_log(m.log_components + n.log_components)


@register("add", "mixture", "canonical")
def mixture_add_component(m: MixtureFactor, g: Factor) -> MixtureFactor:
    return MixtureFactor._from_log(m.log_components + [(0.0, g)])
