"""Mass and first two moments of a Gaussian restricted to an axis-aligned box.

Independent (diagonal) constrained axes use the closed-form truncated-normal
formulas.  Two correlated constrained axes are integrated iteratively: the
inner axis in closed form conditional on the outer one, the outer axis with
adaptive composite Gauss-Legendre quadrature in log-space, so far-away boxes
keep an accurate log-mass instead of underflowing to zero.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr

from ..errors import NotNormalizable, QuadratureNonConvergence, Unsupported

REL_TOL = 1e-10
MAX_NODES = 2**14
GL_ORDER = 20
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
# outer integration is cut where the log-integrand is this far below its peak
_LOG_CUTOFF = 80.0


def _log_phi(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        out = -0.5 * z * z - _LOG_SQRT_2PI
    return np.where(np.isfinite(z), out, -np.inf)


def log_interval_prob(a, b):
    """``log(Phi(b) - Phi(a))`` for standard-normal bounds ``a < b``, stable in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.full(a.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        right = a >= 0  # both bounds in the upper tail: use the survival side
        la, lb = log_ndtr(-a), log_ndtr(-b)
        r = la + np.log1p(-np.exp(lb - la))
        left = b <= 0
        la2, lb2 = log_ndtr(a), log_ndtr(b)
        l = lb2 + np.log1p(-np.exp(la2 - lb2))
        mid = np.log1p(-(np.exp(la2) + np.exp(lb)))
    out = np.where(right, r, np.where(left, l, mid))
    out = np.where(b > a, out, -np.inf)
    return out


def _tail_ratios(a, b, logz):
    """``(phi(a)-phi(b))/Z`` and ``(a phi(a) - b phi(b))/Z`` with infinite bounds handled."""
    with np.errstate(invalid="ignore", over="ignore"):
        pa = np.exp(_log_phi(a) - logz)
        pb = np.exp(_log_phi(b) - logz)
        r1 = pa - pb
        ta = np.where(np.isfinite(a), a * pa, 0.0)
        tb = np.where(np.isfinite(b), b * pb, 0.0)
    return r1, ta - tb


def standard_interval_moments(a, b):
    """Log-mass, mean and variance of N(0,1) restricted to [a, b)."""
    logz = log_interval_prob(a, b)
    r1, r2 = _tail_ratios(a, b, logz)
    var = 1.0 + r2 - r1 * r1
    return logz, r1, var


def _bivariate(a, b, rho):
    """Standardised bivariate normal with correlation ``rho`` on the box [a, b).

    Returns ``(log_mass, mean(2), cov(2x2))``.
    """
    a1, a2 = a
    b1, b2 = b
    sd = np.sqrt(1.0 - rho * rho)

    def logf_and_parts(z):
        c = rho * z
        al, be = (a2 - c) / sd, (b2 - c) / sd
        logz = log_interval_prob(al, be)
        r1, r2 = _tail_ratios(al, be, logz)
        return _log_phi(z) + logz, c, r1, r2

    lo, hi = max(a1, -40.0), min(b1, 40.0)
    if not lo < hi:
        return -np.inf, np.zeros(2), np.eye(2)

    # the integrand is log-concave in z: bracket its bulk on a coarse grid
    grid = np.linspace(lo, hi, 801)
    lg = logf_and_parts(grid)[0]
    peak = np.max(lg)
    if peak == -np.inf:
        return -np.inf, np.zeros(2), np.eye(2)
    live = np.nonzero(lg > peak - _LOG_CUTOFF)[0]
    step = grid[1] - grid[0]
    lo = max(lo, grid[live[0]] - step)
    hi = min(hi, grid[live[-1]] + step)
    shift = peak

    def integrands(z):
        lf, c, r1, r2 = logf_and_parts(z)
        w = np.exp(lf - shift)
        e2 = c + sd * r1
        e22 = c * c + sd * sd + 2.0 * c * sd * r1 + sd * sd * r2
        w = np.where(np.isfinite(lf), w, 0.0)
        return np.stack([w, z * w, z * z * w, w * e2, z * w * e2, w * e22])

    def panel_rule(left, right):
        mid = 0.5 * (left + right)
        half = 0.5 * (right - left)
        z = mid[:, None] + half[:, None] * _GL_X[None, :]
        vals = integrands(z.ravel()).reshape(6, len(left), GL_ORDER)
        est = np.einsum("kpn,n->kp", vals, _GL_W) * half
        l1 = np.einsum("kpn,n->kp", np.abs(vals), _GL_W) * half
        return est, l1

    edges = np.linspace(lo, hi, 9)
    left, right = edges[:-1], edges[1:]
    accepted = np.zeros(6)
    accepted_l1 = np.zeros(6)
    pending_err = []
    nodes = 0
    while len(left):
        coarse, l1 = panel_rule(left, right)
        mid = 0.5 * (left + right)
        fine_l, l1_l = panel_rule(left, mid)
        fine_r, l1_r = panel_rule(mid, right)
        fine = fine_l + fine_r
        nodes += 3 * GL_ORDER * len(left)
        err = np.abs(fine - coarse)
        scale = np.maximum(accepted_l1 + (l1_l + l1_r).sum(axis=1), 1e-300)
        # a panel is done when its error is negligible against the whole integral
        done = np.all(err <= REL_TOL * scale[:, None] / 8.0, axis=0)
        accepted += fine[:, done].sum(axis=1)
        accepted_l1 += (l1_l + l1_r)[:, done].sum(axis=1)
        pending_err.append(err[:, done].sum(axis=1))
        if nodes > MAX_NODES * 4:
            raise QuadratureNonConvergence(
                f"truncated-Gaussian quadrature did not reach relative tolerance {REL_TOL:g}"
            )
        keep = ~done
        left, right, mid = left[keep], right[keep], mid[keep]
        left, right = np.concatenate([left, mid]), np.concatenate([mid, right])

    total_err = np.sum(pending_err, axis=0)
    if np.any(total_err > 1e-8 * np.maximum(accepted_l1, 1e-300)):
        raise QuadratureNonConvergence("truncated-Gaussian quadrature error estimate above 1e-8")
    P, E1, E11, E2, E12, E22 = accepted
    if P <= 0:
        return -np.inf, np.zeros(2), np.eye(2)
    mean = np.array([E1, E2]) / P
    second = np.array([[E11, E12], [E12, E22]]) / P
    cov = second - np.outer(mean, mean)
    return shift + float(np.log(P)), mean, 0.5 * (cov + cov.T)


def box_moments(mean, cov, lower, upper):
    """Restrict N(mean, cov) to the box ``lower <= x < upper``.

    Returns ``(log_prob, mean_t, cov_t)`` where ``log_prob`` is the log of the
    box probability and ``mean_t``/``cov_t`` are the moments of the
    renormalised truncated density.  At most two constrained axes may be
    correlated with each other; unconstrained axes are handled by Gaussian
    regression on the constrained ones.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = len(mean)
    if np.any(lower >= upper):
        return -np.inf, mean.copy(), cov.copy()
    T = [i for i in range(n) if np.isfinite(lower[i]) or np.isfinite(upper[i])]
    if not T:
        return 0.0, mean.copy(), cov.copy()
    U = [i for i in range(n) if i not in T]
    Stt = cov[np.ix_(T, T)]
    s = np.sqrt(np.diag(Stt))
    if np.any(s <= 0) or np.linalg.eigvalsh(Stt)[0] <= 0:
        raise NotNormalizable("covariance of the truncated axes is not positive definite")
    a = (lower[T] - mean[T]) / s
    b = (upper[T] - mean[T]) / s
    R = Stt / np.outer(s, s)
    off = R - np.diag(np.diag(R))
    if len(T) == 1 or not np.any(off):
        logz, mz, vz = standard_interval_moments(a, b)
        log_prob = float(np.sum(logz))
        mean_z, cov_z = mz, np.diag(vz)
    elif len(T) == 2:
        log_prob, mean_z, cov_z = _bivariate(a, b, float(R[0, 1]))
    else:
        raise Unsupported("correlated truncation over more than two axes")
    if log_prob == -np.inf:
        return -np.inf, mean.copy(), cov.copy()
    mt = mean[T] + s * mean_z
    St_new = cov_z * np.outer(s, s)
    out_mean = mean.copy()
    out_cov = cov.copy()
    out_mean[T] = mt
    out_cov[np.ix_(T, T)] = St_new
    if U:
        B = np.linalg.solve(Stt, cov[np.ix_(T, U)]).T  # regression of U on T
        out_mean[U] = mean[U] + B @ (mt - mean[T])
        out_cov[np.ix_(U, U)] = cov[np.ix_(U, U)] - B @ cov[np.ix_(T, U)] + B @ St_new @ B.T
        cross = B @ St_new
        out_cov[np.ix_(U, T)] = cross
        out_cov[np.ix_(T, U)] = cross.T
    return log_prob, out_mean, 0.5 * (out_cov + out_cov.T)


def log_box_prob(mean, cov, lower, upper) -> float:
    return box_moments(mean, cov, lower, upper)[0]

