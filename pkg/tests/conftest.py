import itertools
import math

import numpy as np
import pytest

from ernm.network import Network
from ernm.terms import ModelSpec, TermSpec


def random_network(n, density, rng, n_grades=3):
    iu = [(i, j) for i in range(n) for j in range(i + 1, n)]
    keep = rng.random(len(iu)) < density
    edges = [d for d, k in zip(iu, keep) if k]
    return Network(
        n,
        edges,
        outcomes=rng.integers(0, 2, n),
        treatment=rng.integers(0, 2, n),
        covariates={
            "grade": rng.integers(7, 7 + n_grades, n).astype(float),
            "sex": rng.integers(0, 2, n).astype(float),
            "age": rng.normal(15, 1, n),
        },
    )


def all_kinds_model():
    """Every term kind and variant, usable on networks from random_network."""
    terms = [
        TermSpec.edges(),
        TermSpec.gwesp(0.5),
        TermSpec.gwesp(0.0),
        TermSpec.gwesp(1.3, homogeneity_attr="grade"),
        TermSpec.gwdeg(0.5),
        TermSpec.gwdeg(0.0),
        TermSpec.homophily("outcome"),
        TermSpec.homophily("grade"),
        TermSpec.homophily("outcome", variant="sqrt"),
        TermSpec.homophily("grade", variant="sqrt"),
        TermSpec.intercept(),
        TermSpec.main_covariate("treatment"),
        TermSpec.main_covariate("age"),
        TermSpec.neighbor_count("treatment"),
        TermSpec.neighbor_count("outcome"),
        TermSpec.neighbor_count("sex"),
    ]
    return ModelSpec(tuple(terms))


def brute_statistics(net, model):
    """Loop-by-loop statistic definitions; shares no code with the package."""
    n = net.n
    adj = [[bool(net.adj[i, j]) for j in range(n)] for i in range(n)]
    y = [int(v) for v in net.outcomes]

    def attr(name, i):
        if name == model.outcome_attr:
            return y[i]
        if name == model.treatment_attr and name not in net.covariates:
            return int(net.treatment[i])
        return net.covariates[name][i]

    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if adj[i][j]]
    deg = [sum(adj[i]) for i in range(n)]
    out = []
    for t in model.terms:
        if t.kind == "edges":
            v = len(edges)
        elif t.kind == "gwesp":
            r = 1 - math.exp(-t.decay)
            v = 0.0
            for i, j in edges:
                if t.attr and attr(t.attr, i) != attr(t.attr, j):
                    continue
                k = sum(
                    1
                    for w in range(n)
                    if adj[i][w] and adj[j][w] and (not t.attr or attr(t.attr, w) == attr(t.attr, i))
                )
                v += math.exp(t.decay) * (1 - r**k)
        elif t.kind == "gwdeg":
            r = 1 - math.exp(-t.decay)
            v = sum(math.exp(t.decay) * (1 - r**d) for d in deg)
        elif t.kind == "homophily":
            conc = [(i, j) for i, j in edges if attr(t.attr, i) == attr(t.attr, j)]
            if t.variant == "match_count":
                v = len(conc)
            else:
                cats = {attr(t.attr, i) for i in range(n)}
                v = sum(math.sqrt(sum(1 for i, _ in conc if attr(t.attr, i) == c)) for c in cats)
        elif t.kind == "intercept":
            v = sum(y)
        elif t.kind == "main_covariate":
            v = sum(y[i] * float(attr(t.attr, i)) for i in range(n))
        else:
            v = sum(y[i] * sum(float(attr(t.attr, j)) for j in range(n) if adj[i][j]) for i in range(n))
        out.append(float(v))
    return np.array(out)


def all_states(n):
    """Every (edge subset, outcome vector) on n nodes."""
    dyads = list(itertools.combinations(range(n), 2))
    for mask in itertools.product([0, 1], repeat=len(dyads)):
        edges = [d for d, m in zip(dyads, mask) if m]
        for y in itertools.product([0, 1], repeat=n):
            yield edges, y


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
