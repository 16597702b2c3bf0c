import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ernm.estimands import (
    EstimandReport,
    Estimate,
    PotentialOutcomeDraws,
    credible_interval,
    do_main_effect,
    estimand_report,
    impute_missing_outcomes,
    k_peer_outcome_effect,
    k_peer_treatment_effect,
    main_effect,
)
from ernm.network import Network
from ernm.sampler import SamplerConfig
from ernm.terms import ModelError, ModelSpec, TermSpec, study_model

from conftest import random_network

QUICK = SamplerConfig(200, 10, 1)


def synthetic_draws(rng, M=4, S=6, n=9, closed=False):
    z = rng.integers(0, 2, n)
    y = rng.integers(0, 2, (M, S, n))
    t = rng.integers(0, 4, (M, S, n))
    o = rng.integers(0, 4, (M, S, n))
    if closed:
        return PotentialOutcomeDraws(rng.normal(size=(M, 4)), z, y, t, o, "logistic",
                                     rng.normal(size=(M, S, n)), rng.normal(size=(M, 3)))
    return PotentialOutcomeDraws(rng.normal(size=(M, 4)), z, y, t, o, "ernm")


def main_loops(d, j):
    cells = {}
    for s in range(d.y.shape[1]):
        for i in range(d.y.shape[2]):
            key = (int(d.treated_nb[j, s, i]), int(d.positive_nb[j, s, i]))
            cells.setdefault(key, {0: [], 1: []})[int(d.z[i])].append(int(d.y[j, s, i]))
    num = den = 0.0
    for grp in cells.values():
        if grp[0] and grp[1]:
            w = len(grp[0]) + len(grp[1])
            num += w * (np.mean(grp[1]) - np.mean(grp[0]))
            den += w
    return num / den if den else np.nan


def peer_loops(d, j, k, which):
    cnt = d.treated_nb if which == "treat" else d.positive_nb
    at_k, at_0 = [], []
    for s in range(d.y.shape[1]):
        for i in range(d.y.shape[2]):
            if d.z[i]:
                continue
            if cnt[j, s, i] == k:
                at_k.append(d.y[j, s, i])
            if cnt[j, s, i] == 0:
                at_0.append(d.y[j, s, i])
    return np.mean(at_k) - np.mean(at_0) if at_k and at_0 else np.nan


def test_main_effect_matches_loops(rng):
    d = synthetic_draws(rng, M=6, S=8, n=12)
    got = main_effect(d).values
    want = [main_loops(d, j) for j in range(6)]
    assert np.allclose(got, want, equal_nan=True)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_peer_effects_match_loops(rng, k):
    d = synthetic_draws(rng, M=6, S=8, n=12)
    assert np.allclose(k_peer_treatment_effect(d, k).values, [peer_loops(d, j, k, "treat") for j in range(6)],
                       equal_nan=True)
    assert np.allclose(k_peer_outcome_effect(d, k).values, [peer_loops(d, j, k, "out") for j in range(6)],
                       equal_nan=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_zero_peer_effect_is_exactly_zero(seed, closed):
    d = synthetic_draws(np.random.default_rng(seed), closed=closed)
    for est in (k_peer_treatment_effect(d, 0), k_peer_outcome_effect(d, 0)):
        assert np.all(est.samples == 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_relabeling_invariance_exact(seed, closed):
    rng = np.random.default_rng(seed)
    d = synthetic_draws(rng, closed=closed)
    perm = rng.permutation(d.y.shape[2])
    a = estimand_report(d, K=3)
    b = estimand_report(d.permuted(perm), K=3)
    for x, y in zip(a.estimates, b.estimates):
        assert np.array_equal(x.values, y.values, equal_nan=True)


def test_unrealized_level_omitted():
    z = np.array([1, 0, 0, 0])
    shape = (2, 3, 4)
    t = np.zeros(shape, int)
    t[..., 1] = 1
    d = PotentialOutcomeDraws(np.zeros((2, 1)), z, np.ones(shape, int), t, np.zeros(shape, int), "mrf")
    assert k_peer_treatment_effect(d, 1).available == 2
    e = k_peer_treatment_effect(d, 2)
    assert e.missing and e.available == 0
    assert np.isnan(e.mean())
    rows = EstimandReport([e]).rows()
    assert rows[0]["mean"] is None


def test_closed_form_contrasts():
    n = 5
    shape = (1, 2, n)
    off = np.full(shape, -0.5)
    coef = np.array([[1.0, 0.0, 0.3]])
    d = PotentialOutcomeDraws(np.zeros((1, 4)), np.array([1, 0, 1, 0, 0]), np.zeros(shape, int),
                              np.zeros(shape, int), np.zeros(shape, int), "logistic", off, coef)
    expit = lambda x: 1 / (1 + np.exp(-x))
    assert main_effect(d).values[0] == pytest.approx(expit(0.5) - expit(-0.5))
    assert k_peer_treatment_effect(d, 3).values[0] == 0.0
    assert k_peer_outcome_effect(d, 2).values[0] == pytest.approx(expit(0.1) - expit(-0.5))


def test_negative_k_rejected(rng):
    with pytest.raises(ValueError):
        k_peer_outcome_effect(synthetic_draws(rng), -1)


def test_credible_interval():
    lo, hi = credible_interval(np.arange(1001.0), 0.9)
    assert (lo, hi) == pytest.approx((50.0, 950.0))
    with pytest.raises(ValueError):
        credible_interval([1.0], 0.9)
    with pytest.raises(ValueError):
        credible_interval([1.0, 2.0], 1.0)


def test_report_roundtrip(tmp_path, rng):
    rep = estimand_report(synthetic_draws(rng, M=10), K=2, level=0.8)
    rep.estimates.append(Estimate("empty", np.full(10, np.nan)))
    rep.to_json(tmp_path / "r.json")
    back = EstimandReport.from_json(tmp_path / "r.json")
    assert back.names == rep.names and back.level == 0.8
    for a, b in zip(rep.estimates, back.estimates):
        assert np.array_equal(a.values, b.values, equal_nan=True)
    rep.to_csv(tmp_path / "r.csv")
    last = (tmp_path / "r.csv").read_text().strip().splitlines()[-1]
    assert last == "empty,NA,NA,NA,0"


def test_report_order():
    names = estimand_report(synthetic_draws(np.random.default_rng(0)), K=2).names
    assert names == ["main", "1-peer-out", "2-peer-out", "1-peer-treat", "2-peer-treat"]


def test_impute_ernm_shapes_and_consistency(rng):
    net = random_network(10, 0.3, rng)
    m = study_model("ernm")
    draws = np.tile([-1.5, 0.3, 0.3, 0.5, 0.0, 0.5, 0.1, 0.1], (5, 1))
    d = impute_missing_outcomes(draws, m, net, M=3, sims_per_draw=4, rng=rng, sampler=QUICK, keep_networks=True)
    assert d.y.shape == (3, 4, 10)
    for k, s in enumerate(d.networks):
        a = s.adjacency_matrix().astype(int)
        j, r = divmod(k, 4)
        assert np.array_equal(d.treated_nb[j, r], a @ s.treatment)
        assert np.array_equal(d.positive_nb[j, r], a @ s.outcomes)
        assert np.array_equal(d.y[j, r], s.outcomes)


def test_impute_mrf_keeps_network(rng):
    net = random_network(10, 0.3, rng)
    m = study_model("mrf")
    d = impute_missing_outcomes(np.zeros((2, m.p)), m, net, 2, 5, rng, QUICK)
    t_obs = net.adjacency_matrix().astype(int) @ net.treatment
    assert np.all(d.treated_nb == t_obs)


@pytest.mark.parametrize("cls", ["logistic", "ergm_logistic"])
def test_impute_closed_form_classes(cls, rng):
    net = random_network(10, 0.3, rng)
    m = study_model(cls)
    d = impute_missing_outcomes(np.full((3, m.p), 0.1), m, net, 3, 4, rng, QUICK)
    assert d.closed_form
    assert d.coef.shape == (3, 3)
    assert np.allclose(d.coef, 0.1)


def test_impute_checks(rng):
    net = random_network(6, 0.3, rng)
    m = study_model("ernm")
    with pytest.raises(ModelError):
        impute_missing_outcomes(np.zeros((2, 3)), m, net, 2, 2, rng, QUICK)
    with pytest.raises(ValueError):
        impute_missing_outcomes(np.zeros((2, m.p)), m, net, 0, 2, rng, QUICK)


def test_logistic_relabeling_end_to_end(rng):
    # closed-form estimands do not use the random outcome draws
    net = random_network(9, 0.4, rng)
    m = ModelSpec.for_class("logistic", [TermSpec.intercept(), TermSpec.main_covariate("treatment"),
                                         TermSpec.neighbor_count("treatment"), TermSpec.neighbor_count("outcome")])
    draws = rng.normal(size=(6, 4))
    perm = rng.permutation(9)
    relabeled = Network(9, [(int(np.flatnonzero(perm == i)[0]), int(np.flatnonzero(perm == j)[0]))
                              for i, j in net.edge_list()],
                          net.outcomes[perm], net.treatment[perm])
    a = estimand_report(impute_missing_outcomes(draws, m, net, 6, 3, np.random.default_rng(1), QUICK, replace=False))
    b = estimand_report(impute_missing_outcomes(draws, m, relabeled, 6, 3, np.random.default_rng(1), QUICK,
                                                replace=False))
    for x, y in zip(a.estimates, b.estimates):
        assert np.array_equal(x.values, y.values, equal_nan=True)


def test_do_main_effect_named(rng):
    net = random_network(8, 0.3, rng)
    m = study_model("ernm")
    e = do_main_effect(np.zeros((2, m.p)), m, net, M=2, rng=rng, sampler=SamplerConfig(100, 10, 2))
    assert e.name == "main-do" and e.values.shape == (2,)
