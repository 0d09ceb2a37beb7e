import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import factorlab as fl
from factorlab import CanonicalGaussian, ConditionalFactor, IndicatorFactor, TableFactor, continuous, discrete, truncate
from factorlab.errors import NotIntegrable, ZeroMass
from factorlab.gaussian import moment_match_mixture
from factorlab.hybrid import box_moments, partition_index
from factorlab.models.quadrant import QUADRANT_BOXES, quadrant_indicator, quadrant_of
from oracles import truncated_1d_quad, truncated_2d_grid

X, Y = continuous("X"), continuous("Y")
S, D = discrete("S", 4), discrete("D", 2)
INF = np.inf


def std_normal(var=X):
    return CanonicalGaussian.from_moments([var], [0.0], [[1.0]])


# -- truncation: 1-D ----------------------------------------------------------


def test_identity_truncation():
    f = CanonicalGaussian.from_moments([X, Y], [0.3, -1], [[2, 0.5], [0.5, 1]])
    t = truncate(f, {"X": (-INF, INF), "Y": (-INF, INF)})
    assert t.log_mass == pytest.approx(0.0, abs=1e-15)
    m = t.moments()
    np.testing.assert_allclose(m.mean, [0.3, -1])
    np.testing.assert_allclose(m.cov, [[2, 0.5], [0.5, 1]])


@pytest.mark.parametrize(
    "lo, hi, mass, mean, var",
    [
        # golden values frozen from the quadrature oracle
        (0.0, INF, 0.5, 0.7978845608028653, 0.3633802276324187),
        (-1.0, 1.0, 0.682689492137086, 0.0, 0.29112509477279325),
    ],
)
def test_truncated_standard_normal(lo, hi, mass, mean, var):
    t = truncate(std_normal(), {"X": (lo, hi)})
    m = t.moments()
    qm, qmean, qvar = truncated_1d_quad(0.0, 1.0, lo, hi)
    for got, want, oracle in ((np.exp(t.log_mass), mass, qm), (m.mean[0], mean, qmean), (m.cov[0, 0], var, qvar)):
        assert got == pytest.approx(want, abs=1e-9)
        assert got == pytest.approx(oracle, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    mu=st.floats(-3, 3),
    sd=st.floats(0.2, 3),
    lo=st.floats(-4, 4),
    width=st.one_of(st.just(INF), st.floats(0.1, 5)),
)
def test_truncated_1d_matches_quadrature(mu, sd, lo, width):
    hi = lo + width
    f = CanonicalGaussian.from_moments([X], [mu], [[sd * sd]])
    mass, mean, var = truncated_1d_quad(mu, sd * sd, lo, hi)
    if mass < 1e-12:
        return
    t = truncate(f, {"X": (lo, hi)})
    m = t.moments()
    assert np.exp(t.log_mass) == pytest.approx(mass, rel=1e-7)
    assert m.mean[0] == pytest.approx(mean, abs=1e-7 * sd)
    assert m.cov[0, 0] == pytest.approx(var, rel=1e-6)


def test_truncate_zero_mass():
    with pytest.raises(ZeroMass):
        truncate(std_normal(), {"X": (50.0, INF)})


def test_truncated_density_is_base_inside_zero_outside():
    f = CanonicalGaussian.from_moments([X], [0.0], [[1.0]])
    t = truncate(f, {"X": (0.0, INF)})
    for x in (-1.0, -1e-12, 0.0, 0.5, 3.0):
        want = fl.evaluate(f, {"X": x}) if x >= 0 else 0.0
        assert fl.evaluate(t, {"X": x}) == pytest.approx(want, rel=1e-15)


# -- truncation: correlated 2-D ------------------------------------------------


def test_correlated_quadrant_matches_grid():
    cov = np.array([[1.0, 0.5], [0.5, 1.0]])
    f = CanonicalGaussian.from_moments([X, Y], [0, 0], cov)
    t = truncate(f, {"X": (0.0, INF), "Y": (0.0, INF)})
    mass, mu, Sg = truncated_2d_grid([0, 0], cov, [0, 0], [INF, INF])
    m = t.moments()
    assert np.exp(t.log_mass) == pytest.approx(1 / 3, abs=1e-9)  # 1/4 + asin(rho)/(2 pi)
    assert np.exp(t.log_mass) == pytest.approx(mass, abs=1e-8)
    np.testing.assert_allclose(m.mean, mu, atol=1e-6)
    np.testing.assert_allclose(m.cov, Sg, atol=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_random_quadrant_truncations_match_grid(seed):
    rng = np.random.default_rng(seed)
    mean = rng.normal(scale=0.7, size=2)
    A = rng.normal(size=(2, 2))
    cov = A @ A.T + 0.3 * np.eye(2)
    base = CanonicalGaussian.from_moments([X, Y], mean, cov)
    total = 0.0
    for bx, by in QUADRANT_BOXES:
        lo, hi = [bx[0], by[0]], [bx[1], by[1]]
        lp, mt, St = box_moments(mean, cov, lo, hi)
        mass, mu, Sg = truncated_2d_grid(mean, cov, lo, hi)
        total += np.exp(lp)
        assert np.exp(lp) == pytest.approx(mass, abs=1e-8)
        if mass > 1e-6:
            np.testing.assert_allclose(mt, mu, atol=1e-5)
            np.testing.assert_allclose(St, Sg, atol=1e-4)
            t = fl.multiply(base, IndicatorFactor([], [X, Y], {(): {"X": bx, "Y": by}}))
            np.testing.assert_allclose(t.moments().mean, mt, atol=1e-12)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_box_with_unconstrained_axis_uses_regression():
    mean = np.array([0.0, 1.0, -1.0])
    cov = np.array([[1.0, 0.3, 0.2], [0.3, 2.0, 0.4], [0.2, 0.4, 1.5]])
    lp, mt, St = box_moments(mean, cov, [0.0, -INF, -INF], [INF, INF, INF])
    rng = np.random.default_rng(9)
    draws = rng.multivariate_normal(mean, cov, size=400_000)
    kept = draws[draws[:, 0] >= 0]
    assert np.exp(lp) == pytest.approx(0.5, abs=1e-12)
    se = np.sqrt(np.diag(St) / len(kept))
    assert np.all(np.abs(kept.mean(axis=0) - mt) < 5 * se)
    np.testing.assert_allclose(np.cov(kept.T), St, atol=0.02)


# -- indicators ---------------------------------------------------------------


def test_quadrant_boxes_partition_the_plane():
    F1, F2 = continuous("F1"), continuous("F2")
    ind = quadrant_indicator(S, F1, F2)
    rng = np.random.default_rng(0)
    pts = rng.normal(scale=3, size=(10_000, 2))
    pts = pts[np.all(pts != 0, axis=1)]
    hits = np.zeros(len(pts), dtype=int)
    for s in range(4):
        cols = {"S": np.full(len(pts), s), "F1": pts[:, 0], "F2": pts[:, 1]}
        hits += np.exp(ind.log_evaluate_batch(cols)).astype(int)
    assert np.all(hits == 1)
    idx = partition_index(ind, {"F1": pts[:, 0], "F2": pts[:, 1]})
    np.testing.assert_array_equal(idx, quadrant_of(pts[:, 0], pts[:, 1]))


def test_half_open_boundaries():
    assert list(quadrant_of([0.0, -0.0, 0.0, -1e-300], [0.0, 0.0, -1e-300, 0.0])) == [0, 0, 3, 1]


def test_indicator_selects_region():
    F1, F2 = continuous("F1"), continuous("F2")
    ind = quadrant_indicator(S, F1, F2)
    assert fl.evaluate(ind, {"S": 3, "F1": 0.5, "F2": -0.2}) == 1.0
    assert fl.evaluate(ind, {"S": 0, "F1": 0.5, "F2": -0.2}) == 0.0
    r = fl.reduce(ind, {"F1": 0.5, "F2": -0.2})
    np.testing.assert_array_equal(r.table, [0, 0, 0, 1])


def test_gaussian_times_indicator_gives_truncated_branches():
    F1, F2 = continuous("F1"), continuous("F2")
    g = CanonicalGaussian.from_moments([F1, F2], [0.2, -0.1], [[1.0, 0.3], [0.3, 0.5]])
    c = fl.multiply(g, quadrant_indicator(S, F1, F2))
    assert isinstance(c, ConditionalFactor)
    assert all(isinstance(b, fl.TruncatedGaussian) for b in c.table.values())
    rng = np.random.default_rng(1)
    for f1, f2 in rng.normal(size=(50, 2)):
        for s in range(4):
            a = {"S": s, "F1": f1, "F2": f2}
            want = fl.evaluate(g, a) if quadrant_of(f1, f2) == s else 0.0
            assert fl.evaluate(c, a) == pytest.approx(want, abs=1e-9)
    masses = fl.sum_out(c, ["F1", "F2"])
    assert isinstance(masses, TableFactor)
    assert masses.table.sum() == pytest.approx(1.0, abs=1e-8)


# -- conditional factors ------------------------------------------------------


def two_branch(w0=0.5, w1=0.5, m0=-1.0, m1=1.0):
    return ConditionalFactor(
        [D],
        [X],
        [CanonicalGaussian.from_moments([X], [m0], [[1.0]], np.log(w0)), CanonicalGaussian.from_moments([X], [m1], [[1.0]], np.log(w1))],
    )


def test_conditional_requires_full_cover_and_common_scope():
    with pytest.raises(ValueError):
        ConditionalFactor([D], [X], [std_normal()])
    with pytest.raises(ValueError):
        ConditionalFactor([D], [X], [std_normal(), std_normal(Y)])


def test_pointwise_semantics_of_conditional():
    c = two_branch(0.3, 0.7)
    rng = np.random.default_rng(2)
    for x in rng.normal(size=20):
        for d in range(2):
            assert fl.log_evaluate(c, {"D": d, "X": x}) == pytest.approx(fl.log_evaluate(c.branch((d,)), {"X": x}), abs=1e-12)


def test_multiply_by_uniform_table_scales_every_branch():
    c = two_branch()
    out = fl.multiply(c, TableFactor([D], [0.5, 0.5]))
    for d in range(2):
        assert out.branch((d,)).g == pytest.approx(c.branch((d,)).g + np.log(0.5), abs=1e-14)
        np.testing.assert_array_equal(out.branch((d,)).K, c.branch((d,)).K)


def test_multiply_by_gaussian_shifts_each_branch():
    c = two_branch()
    g = CanonicalGaussian.from_moments([X], [0.5], [[2.0]])
    out = fl.multiply(c, g)
    for d in range(2):
        b, ob = c.branch((d,)), out.branch((d,))
        np.testing.assert_allclose(ob.K, b.K + g.K)
        np.testing.assert_allclose(ob.h, b.h + g.h)
        assert ob.g == pytest.approx(b.g + g.g)


def test_sum_out_discrete_gives_mixture():
    c = two_branch()
    mix = fl.sum_out(c, ["D"])
    assert isinstance(mix, fl.MixtureFactor)
    m = moment_match_mixture(mix)
    assert m.mean[0] == pytest.approx(0.0, abs=1e-14)
    assert m.cov[0, 0] == pytest.approx(2.0, rel=1e-12)
    same = ConditionalFactor([D], [X], [CanonicalGaussian.from_moments([X], [0], [[1]], np.log(0.5))] * 2)
    mm = moment_match_mixture(fl.sum_out(same, ["D"]))
    assert mm.log_weight == pytest.approx(0.0, abs=1e-14)
    assert mm.mean[0] == pytest.approx(0.0) and mm.cov[0, 0] == pytest.approx(1.0)
    assert fl.sum_out(c, []) is c


def test_sum_out_continuous_gives_branch_masses():
    c = two_branch(0.3, 0.7)
    t = fl.sum_out(c, ["X"])
    assert isinstance(t, TableFactor)
    np.testing.assert_allclose(t.table, [0.3, 0.7], atol=1e-14)


def test_per_branch_marginal_is_schur_complement():
    rng = np.random.default_rng(3)
    covs = []
    for _ in range(2):
        A = rng.normal(size=(2, 2))
        covs.append(A @ A.T + np.eye(2))
    c = ConditionalFactor([D], [X, Y], [CanonicalGaussian.from_moments([X, Y], [0, 1], cv) for cv in covs])
    marg = fl.sum_out(c, ["Y"])
    for d in range(2):
        assert fl.to_moment(marg.branch((d,))).cov[0, 0] == pytest.approx(covs[d][0, 0], rel=1e-12)


def test_not_integrable_reports_branch():
    bad = CanonicalGaussian([X], [[-1.0]], [0.0], 0.0)
    c = ConditionalFactor([D], [X], [std_normal(), bad])
    with pytest.raises(NotIntegrable) as info:
        fl.sum_out(c, ["X"])
    assert info.value.context["branch"] == {"D": 1}


def test_conditional_projection_collapses_each_branch():
    F1, F2 = continuous("F1"), continuous("F2")
    g = CanonicalGaussian.from_moments([F1, F2], [0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    p = fl.project(fl.multiply(g, quadrant_indicator(S, F1, F2)))
    assert isinstance(p, ConditionalFactor)
    b = p.branch((0,))
    assert isinstance(b, CanonicalGaussian)
    m = fl.to_moment(b)
    mass, mu, Sg = truncated_2d_grid([0, 0], [[1, 0.5], [0.5, 1]], [0, 0], [INF, INF])
    assert np.exp(m.log_weight) == pytest.approx(mass, abs=1e-8)
    np.testing.assert_allclose(m.mean, mu, atol=1e-6)
    np.testing.assert_allclose(m.cov, Sg, atol=1e-6)
