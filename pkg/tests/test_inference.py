import ast
import itertools
from pathlib import Path

import numpy as np
import pytest

import factorlab as fl
from factorlab import FactorGraphModel, TableFactor, discrete, to_moment
from factorlab.errors import DivisionByZero, EmptyQuery, MissingVariable, StepError, ZeroMass
from factorlab.inference import elimination_order, filter_step, smooth, variable_elimination
from factorlab.models import burglary_model, discrete_hmm, linear_gaussian_ssm, quadrant_model, simulate
from factorlab.sample import sample_prior
from oracles import (
    enumerate_posterior,
    hmm_forward_backward,
    hmm_path_enumeration,
    kalman_filter,
    rts_smoother,
    simulate_lgssm,
)


def gaussian_moments(f, names):
    m = to_moment(f)
    order = [m.names.index(n) for n in names]
    return m.mean[order], m.cov[np.ix_(order, order)]


# -- linear-Gaussian ------------------------------------------------------------


def test_single_step_example():
    model = linear_gaussian_ssm([[1.0]], [[1.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])
    step = filter_step(fl.multiply(*model.prior), model, {"y1": 1.0})
    mean, cov = gaussian_moments(step.posterior, ["x1"])
    assert mean[0] == pytest.approx(2 / 3, abs=1e-12)
    assert cov[0, 0] == pytest.approx(2 / 3, abs=1e-12)
    res = fl.filter(model, [{"y1": 1.0}])
    assert res.posteriors[0] == step.posterior
    assert res.loglik[0] == step.loglik


LG_CASES = {
    "1d": dict(A=[[1.0]], Q=[[1.0]], C=[[1.0]], R=[[1.0]], m0=[0.0], P0=[[1.0]]),
    "2d": dict(
        A=[[1.0, 0.1], [0.0, 0.95]],
        Q=[[0.02, 0.005], [0.005, 0.05]],
        C=[[1.0, 0.0], [0.5, 1.0]],
        R=[[0.3, 0.05], [0.05, 0.2]],
        m0=[0.5, -1.0],
        P0=[[1.0, 0.2], [0.2, 0.5]],
    ),
}


@pytest.mark.parametrize("case", sorted(LG_CASES))
def test_gaussian_filter_and_smoother_match_kalman_rts(case):
    p = LG_CASES[case]
    rng = np.random.default_rng(20)
    _, ys = simulate_lgssm(p["A"], p["Q"], p["C"], p["R"], p["m0"], p["P0"], 20, rng)
    model = linear_gaussian_ssm(**p)
    obs = [{f"y{i + 1}": float(v) for i, v in enumerate(y)} for y in ys]
    res = fl.filter(model, obs)
    kf = kalman_filter(p["A"], p["Q"], p["C"], p["R"], p["m0"], p["P0"], ys)
    names = [v.name for v in model.state]
    for t, post in enumerate(res.posteriors):
        mean, cov = gaussian_moments(post, names)
        np.testing.assert_allclose(mean, kf["m"][t], atol=1e-9)
        np.testing.assert_allclose(cov, kf["P"][t], atol=1e-9)
        assert fl.log_scalar(fl.sum_out(post, post.names)) == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(res.loglik, kf["ll"], atol=1e-9)
    assert res.total_loglik == pytest.approx(kf["ll"].sum(), abs=1e-9)
    sm = smooth(model, obs, filtered=res)
    ms, Ps = rts_smoother(p["A"], kf)
    for t, f in enumerate(sm):
        mean, cov = gaussian_moments(f, names)
        np.testing.assert_allclose(mean, ms[t], atol=1e-8)
        np.testing.assert_allclose(cov, Ps[t], atol=1e-8)
        assert fl.log_scalar(fl.sum_out(f, f.names)) == pytest.approx(0.0, abs=1e-9)


def test_smoothing_one_step_equals_filtering():
    model = linear_gaussian_ssm(**LG_CASES["1d"])
    obs = [{"y1": 0.4}]
    assert smooth(model, obs)[0] == fl.filter(model, obs).posteriors[0]


# -- discrete HMM -------------------------------------------------------------

HMM = dict(
    initial=[0.6, 0.4],
    transition=[[0.7, 0.3], [0.2, 0.8]],
    emission=[[0.9, 0.1], [0.25, 0.75]],
)


def test_hmm_identity_transition_with_one_hot_likelihood():
    model = discrete_hmm([0.5, 0.5], np.eye(2), np.eye(2))
    res = fl.filter(model, [{"y": 1}])
    np.testing.assert_allclose(res.posteriors[0].table, [0.0, 1.0])


def test_hmm_impossible_observation():
    model = discrete_hmm([1.0, 0.0], np.eye(2), [[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ZeroMass):
        filter_step(fl.multiply(*model.prior), model, {"y": 1})
    with pytest.raises(StepError) as info:
        fl.filter(model, [{"y": 0}, {"y": 0}, {"y": 1}])
    assert info.value.step == 3
    assert info.value.code == "ZeroMass"


def test_hmm_filter_and_smoother_match_enumeration():
    ys = [0, 1, 1, 0, 1]
    model = discrete_hmm(**HMM)
    obs = [{"y": y} for y in ys]
    res = fl.filter(model, obs)
    sm = smooth(model, obs, filtered=res)
    filt, smo, ll = hmm_forward_backward(HMM["initial"], HMM["transition"], HMM["emission"], ys)
    log_total, marg = hmm_path_enumeration(HMM["initial"], HMM["transition"], HMM["emission"], ys)
    assert res.total_loglik == pytest.approx(log_total, abs=1e-10)
    np.testing.assert_allclose(res.loglik, ll, atol=1e-12)
    for t in range(len(ys)):
        np.testing.assert_allclose(res.posteriors[t].table, filt[t], atol=1e-12)
        np.testing.assert_allclose(sm[t].table, marg[t], atol=1e-10)
        np.testing.assert_allclose(sm[t].table, smo[t], atol=1e-12)
        assert sm[t].table.sum() == pytest.approx(1.0, abs=1e-9)


def test_hmm_random_models_match_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n, k = 3, 3
        init = rng.dirichlet(np.ones(n))
        trans = rng.dirichlet(np.ones(n), size=n)
        emis = rng.dirichlet(np.ones(k), size=n)
        ys = list(rng.integers(k, size=4))
        model = discrete_hmm(init, trans, emis)
        obs = [{"y": int(y)} for y in ys]
        res = fl.filter(model, obs)
        log_total, marg = hmm_path_enumeration(init, trans, emis, ys)
        assert res.total_loglik == pytest.approx(log_total, abs=1e-10)
        for t, f in enumerate(smooth(model, obs, filtered=res)):
            np.testing.assert_allclose(f.table, marg[t], atol=1e-10)


def test_smoother_reports_division_by_zero_with_step():
    # deterministic swap: from x=0 the prediction rules out x_next=0, where the
    # (hand-made) later posterior puts all its mass
    model = discrete_hmm([0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]], [[0.5, 0.5], [0.5, 0.5]])
    res = fl.filter(model, [{"y": 0}, {"y": 0}])
    bad = fl.FilterResult(
        posteriors=[TableFactor(model.state, [1.0, 0.0]), TableFactor(model.state, [1.0, 0.0])],
        predicted=res.predicted,
        loglik=res.loglik,
    )
    with pytest.raises(StepError) as info:
        smooth(model, None, filtered=bad)
    assert info.value.code == "DivisionByZero"
    assert info.value.step == 1
    assert isinstance(info.value.cause, DivisionByZero)


# -- the same filter on other representations ---------------------------------


def test_sample_smoothing_is_unsupported():
    model = linear_gaussian_ssm(**LG_CASES["1d"])
    obs = simulate(model, 4, seed=0).observation_list()
    with pytest.raises(StepError) as info:
        smooth(model, obs, initial=sample_prior(model.prior, 200, seed=0))
    assert info.value.code == "UnsupportedPair"


def test_sample_filter_tracks_kalman():
    p = LG_CASES["1d"]
    model = linear_gaussian_ssm(**p)
    sim = simulate(model, 10, seed=3)
    obs = sim.observation_list()
    kf = kalman_filter(p["A"], p["Q"], p["C"], p["R"], p["m0"], p["P0"], sim.observations["y1"][:, None])
    means = []
    for k in range(10):
        res = fl.filter(model, obs, initial=sample_prior(model.prior, 2000, seed=k))
        means.append([fl.summarize(f).mean["x1"] for f in res.posteriors])
    means = np.array(means)
    se = means.std(axis=0, ddof=1) / np.sqrt(len(means))
    assert np.all(np.abs(means.mean(axis=0) - kf["m"][:, 0]) < 4 * se)


def test_hybrid_filter_and_smoother_are_normalised():
    model = quadrant_model()
    sim = simulate(model, 25, seed=1)
    obs = sim.observation_list()
    res = fl.filter(model, obs)
    sm = smooth(model, obs, filtered=res)
    for f in res.posteriors + sm:
        probs = fl.summarize(f).probs["S"]
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert fl.log_scalar(fl.sum_out(f, f.names)) == pytest.approx(0.0, abs=1e-9)
    assert np.isfinite(res.loglik).all()


def test_inference_module_is_representation_agnostic():
    src = Path(fl.inference.__file__).read_text()
    tree = ast.parse(src)
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add(("." * node.level) + (node.module or ""))
        elif isinstance(node, ast.Import):
            imported.update(a.name for a in node.names)
    local = {m for m in imported if m.startswith(".")}
    assert local == {".core", ".errors"}
    for name in ("TableFactor", "CanonicalGaussian", "SampleFactor", "ConditionalFactor", ".rep"):
        assert name not in src


# -- variable elimination -------------------------------------------------------


def burglary_tables():
    model = burglary_model()
    cards = {v.name: v.cardinality for v in model.variables}
    return model, cards, [(f.names, f.table) for f in model.factors]


def test_burglary_posterior():
    model, cards, tables = burglary_tables()
    post = variable_elimination(model, ["B"], {"J": "true", "M": "true"})
    want = enumerate_posterior(cards, tables, ["B"], {"J": 1, "M": 1})
    np.testing.assert_allclose(post.table, want, atol=1e-12)
    assert post.table[1] == pytest.approx(0.2842, abs=5e-5)
    assert post.table[1] == pytest.approx(0.28417183536439294, abs=1e-12)


def test_single_factor_model():
    A = discrete("A", 3)
    model = FactorGraphModel([A], [TableFactor([A], [1.0, 2.0, 1.0])])
    np.testing.assert_allclose(variable_elimination(model, ["A"]).table, [0.25, 0.5, 0.25])


def random_network(rng, n):
    vars_ = [discrete(f"V{i}", 2) for i in range(n)]
    factors = []
    for i, v in enumerate(vars_):
        k = int(rng.integers(0, min(i, 2) + 1))
        parents = list(rng.choice(vars_[:i], size=k, replace=False)) if k else []
        cpt = rng.dirichlet(np.ones(2), size=2**k).reshape([2] * k + [2])
        factors.append(TableFactor(parents + [v], cpt))
    return FactorGraphModel(vars_, factors)


def test_ve_matches_enumeration_for_every_order():
    rng = np.random.default_rng(12)
    for _ in range(15):
        n = int(rng.integers(3, 7))
        model = random_network(rng, n)
        names = [v.name for v in model.variables]
        cards = {n_: 2 for n_ in names}
        tables = [(f.names, f.table) for f in model.factors]
        q = str(rng.choice(names))
        rest = [x for x in names if x != q]
        ev = {x: int(rng.integers(2)) for x in rest if rng.random() < 0.3}
        want = enumerate_posterior(cards, tables, [q], ev)
        hidden = [x for x in rest if x not in ev]
        orders = list(itertools.permutations(hidden))
        if len(orders) > 120:
            orders = [orders[i] for i in rng.choice(len(orders), 120, replace=False)]
        for order in orders:
            got = variable_elimination(model, [q], ev, order=order)
            np.testing.assert_allclose(got.table, want, atol=1e-12)


def test_chain_query_matches_enumeration():
    rng = np.random.default_rng(13)
    A, B, C = discrete("A", 2), discrete("B", 3), discrete("C", 2)
    pa = rng.dirichlet(np.ones(2))
    pb = rng.dirichlet(np.ones(3), size=2)
    pc = rng.dirichlet(np.ones(2), size=3)
    model = FactorGraphModel([A, B, C], [TableFactor([A], pa), TableFactor([A, B], pb), TableFactor([B, C], pc)])
    want = enumerate_posterior({"A": 2, "B": 3, "C": 2}, [(("A",), pa), (("A", "B"), pb), (("B", "C"), pc)], ["C"], {})
    np.testing.assert_allclose(variable_elimination(model, ["C"]).table, want, atol=1e-12)


def test_ve_errors():
    model = burglary_model()
    with pytest.raises(EmptyQuery):
        variable_elimination(model, [])
    with pytest.raises(EmptyQuery):
        variable_elimination(model, ["B"], {"B": 1})
    with pytest.raises(MissingVariable):
        variable_elimination(model, ["Nope"])


def test_elimination_order_examples():
    names = "ABCD"
    vs = [discrete(n, 2) for n in names]
    chain = FactorGraphModel(vs, [TableFactor([a, b], np.ones((2, 2))) for a, b in zip(vs, vs[1:])])
    assert elimination_order(chain, ["A"]) == ["D", "C", "B"]
    loose = FactorGraphModel(vs, [TableFactor([v], [1.0, 1.0]) for v in reversed(vs)])
    assert elimination_order(loose, ["A"]) == ["B", "C", "D"]
    order = elimination_order(burglary_model(), ["B"], {"J": 1, "M": 1})
    assert sorted(order) == ["A", "E"]
    order = elimination_order(burglary_model(), ["B"])
    assert sorted(order) == ["A", "E", "J", "M"]
    assert fill_in(burglary_model(), order) == 0


def fill_in(model, order):
    adj = {v.name: set() for v in model.variables}
    for f in model.factors:
        for a in f.names:
            adj[a].update(b for b in f.names if b != a)
    added = 0
    for n in order:
        nb = adj.pop(n)
        for a in nb:
            adj[a].discard(n)
            new = nb - adj[a] - {a}
            added += len(new)
            adj[a] |= new
    return added // 2
