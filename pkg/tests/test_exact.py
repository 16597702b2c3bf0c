import numpy as np
import pytest
from scipy.special import expit, logit

from ernm.exact import enumerate_exact, exact_grid_posterior, state_table
from ernm.network import Network
from ernm.priors import PriorSpec
from ernm.terms import ModelError, ModelSpec, TermSpec, eval_statistics

from conftest import all_states

FULL = ModelSpec((
    TermSpec.edges(),
    TermSpec.gwesp(0.5),
    TermSpec.homophily("outcome"),
    TermSpec.intercept(),
    TermSpec.neighbor_count("outcome"),
))
ETA = np.array([-0.3, 0.4, 0.2, -0.1, 0.25])
EDGES = ModelSpec.for_class("ergm", [TermSpec.edges()])


def test_probabilities_normalized():
    ex = enumerate_exact(FULL, ETA, n=3)
    assert ex.n_states == 2 ** (3 + 3)
    assert ex.probs.sum() == pytest.approx(1.0)
    assert np.all(ex.probs > 0)


def test_against_brute_force_sum():
    n = 3
    logw = []
    for edges, y in all_states(n):
        g = eval_statistics(Network(n, edges, outcomes=y), FULL)
        logw.append(ETA @ g)
    logw = np.array(logw)
    ex = enumerate_exact(FULL, ETA, n=n)
    assert ex.log_norm == pytest.approx(np.log(np.exp(logw).sum()), rel=1e-12)


def test_edges_only_binomial():
    ex = enumerate_exact(EDGES, np.array([0.7]), n=4)
    assert ex.mean()[0] == pytest.approx(6 * expit(0.7))
    assert ex.cov()[0, 0] == pytest.approx(6 * expit(0.7) * (1 - expit(0.7)))


def test_mean_is_gradient_of_log_norm():
    ex = enumerate_exact(FULL, ETA, n=3)
    h = 1e-6
    grad = []
    for k in range(FULL.p):
        e = np.zeros(FULL.p)
        e[k] = h
        up = enumerate_exact(FULL, ETA + e, n=3).log_norm
        dn = enumerate_exact(FULL, ETA - e, n=3).log_norm
        grad.append((up - dn) / (2 * h))
    assert np.allclose(grad, ex.mean(), atol=1e-6)


def test_network_roundtrip():
    ex = enumerate_exact(FULL, ETA, n=3)
    for s in (0, 17, ex.n_states - 1):
        assert np.allclose(eval_statistics(ex.network(s), FULL), ex.stats[s])


def test_mrf_enumerates_outcomes_only():
    m = ModelSpec.for_class("mrf", [TermSpec.intercept(), TermSpec.neighbor_count("outcome")])
    tmpl = Network(4, [(0, 1), (1, 2)])
    ex = enumerate_exact(m, np.array([0.2, 0.3]), template=tmpl)
    assert ex.n_states == 2**4


def test_size_cap():
    with pytest.raises(ModelError, match="n <= 5"):
        enumerate_exact(EDGES, np.zeros(1), n=6)


@pytest.mark.parametrize("cls", ["logistic", "ergm_logistic"])
def test_tractable_classes_rejected(cls):
    terms = [TermSpec.intercept()] if cls == "logistic" else [TermSpec.edges(), TermSpec.intercept()]
    m = ModelSpec.for_class(cls, terms)
    with pytest.raises(ModelError):
        state_table(m, Network(3))


def test_state_table_cached():
    a = state_table(FULL, Network(3))
    b = state_table(FULL, Network(3))
    assert a is b


def test_grid_posterior_mode_at_logit_density():
    net = Network(4, [(0, 1), (1, 2)])
    grid = np.linspace(-6, 6, 1201)
    post = exact_grid_posterior(net, EDGES, PriorSpec.uniform(-6, 6), {0: grid})
    axis, w = post.marginal(0)
    assert axis[np.argmax(w)] == pytest.approx(logit(2 / 6), abs=0.01)
    assert w.sum() == pytest.approx(1.0)


def test_grid_posterior_symmetric():
    net = Network(4, [(0, 1), (1, 2), (2, 3)])
    grid = np.linspace(-5, 5, 201)
    post = exact_grid_posterior(net, EDGES, PriorSpec.uniform(-5, 5), [grid])
    _, w = post.marginal(0)
    assert np.allclose(w, w[::-1], atol=1e-12)


def test_grid_cdf_monotone():
    net = Network(4, [(0, 1)])
    post = exact_grid_posterior(net, EDGES, PriorSpec.uniform(-6, 6), [np.linspace(-6, 6, 50)])
    F = post.cdf(0)
    x = np.linspace(-7, 7, 300)
    assert np.all(np.diff(F(x)) >= 0)
    assert F(-7) == 0 and F(7) == pytest.approx(1.0)


def test_grid_two_free_coordinates():
    m = ModelSpec((TermSpec.edges(), TermSpec.intercept()))
    net = Network(3, [(0, 1)], outcomes=[1, 0, 0])
    post = exact_grid_posterior(net, m, PriorSpec.uniform(-4, 4), [np.linspace(-3, 3, 21), np.linspace(-3, 3, 31)])
    assert post.points.shape == (21 * 31, 2)
    assert post.probs.sum() == pytest.approx(1.0)


def test_grid_limits():
    net = Network(3)
    with pytest.raises(ValueError):
        exact_grid_posterior(net, FULL, PriorSpec(), {0: [0.0], 1: [0.0], 2: [0.0]})
