import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ernm.network import (
    UNREACHABLE,
    Network,
    NetworkError,
    degree_distribution,
    esp_distribution,
    geodesic_distribution,
    load_network,
    read_network,
    subgroup_stats,
    write_network,
    outcome_group,
)

from conftest import random_network


def triangle(y=(0, 0, 0)):
    return Network(3, [(0, 1), (1, 2), (0, 2)], outcomes=y)


def nodes(*ids, **cols):
    recs = []
    for k, i in enumerate(ids):
        rec = {"id": str(i)}
        for name, vals in cols.items():
            rec[name] = str(vals[k])
        recs.append(rec)
    return recs


def test_load_path_graph():
    net = load_network(nodes(1, 2, 3), [{"from": "1", "to": "2"}, {"from": "2", "to": "3"}],
                       outcome=None, treatment=None)
    assert net.n_edges == 2
    assert list(net.degrees()) == [1, 2, 1]
    assert net.labels == ["1", "2", "3"]


def test_load_deduplicates_reversed_rows():
    net = load_network(nodes(1, 2), [{"from": "1", "to": "2"}, {"from": "2", "to": "1"}],
                       outcome=None, treatment=None)
    assert net.n_edges == 1


@pytest.mark.parametrize(
    "node_recs, edge_recs, kwargs, match",
    [
        (nodes(1, 2, 3, 4), [{"from": "4", "to": "4"}], {"outcome": None, "treatment": None}, "self-loop"),
        (nodes(1, 2), [{"from": "1", "to": "9"}], {"outcome": None, "treatment": None}, "not in node table"),
        (nodes(1, 2), [], {"outcome": "outcome", "treatment": None}, "missing required column"),
        (nodes(1, 2, outcome=[0, 2]), [], {"outcome": "outcome", "treatment": None}, "non-binary"),
        (nodes(1, 1), [], {"outcome": None, "treatment": None}, "duplicate"),
    ],
)
def test_load_errors(node_recs, edge_recs, kwargs, match):
    with pytest.raises(NetworkError, match=match):
        load_network(node_recs, edge_recs, **kwargs)


def test_csv_round_trip(tmp_path, rng):
    net = random_network(12, 0.3, rng)
    write_network(net, tmp_path / "n.csv", tmp_path / "e.csv")
    back = read_network(tmp_path / "n.csv", tmp_path / "e.csv")
    assert back == net


def test_toggle_edge_basic():
    net = Network(3)
    net.toggle_edge(0, 1)
    assert net.n_edges == 1 and net.has_edge(1, 0)
    net.toggle_edge(1, 0)
    assert net == Network(3)


@pytest.mark.parametrize("i, j", [(1, 1), (0, 3), (-1, 0)])
def test_toggle_edge_errors(i, j):
    with pytest.raises(NetworkError):
        Network(3).toggle_edge(i, j)


def test_triangle_toggle_gives_two_path():
    net = triangle().toggle_edge(0, 1)
    assert net.n_edges == 2
    assert esp_distribution(net) == {0: 2}


def test_toggle_node_outcome():
    net = Network(3)
    net.toggle_node_outcome(1)
    assert list(net.outcomes) == [0, 1, 0]
    net.toggle_node_outcome(1)
    assert net == Network(3)


@pytest.mark.parametrize(
    "net, deg, esp, geo",
    [
        (triangle(), {2: 3}, {1: 3}, {1: 3}),
        (Network(4), {0: 4}, {}, {UNREACHABLE: 6}),
        (Network(3, [(0, 1), (1, 2)]), {1: 2, 2: 1}, {0: 2}, {1: 2, 2: 1}),
    ],
)
def test_distributions(net, deg, esp, geo):
    assert degree_distribution(net) == deg
    assert esp_distribution(net) == esp
    assert geodesic_distribution(net) == geo


def test_subgroup_stats_examples():
    s = subgroup_stats(triangle((1, 1, 1)), outcome_group(1))
    assert s.edge_proportion == 1.0 and s.triad_proportion == 1.0
    s = subgroup_stats(triangle((1, 1, 0)), outcome_group(1))
    assert s.edge_proportion == pytest.approx(1 / 3) and s.triad_proportion == 0
    assert s.degree == {2: 2}
    s = subgroup_stats(Network(4, outcomes=[1, 1, 0, 0]), outcome_group(1))
    assert s.edge_proportion is None and s.triad_proportion is None


def reachability_geodesics(net):
    """Path-length histogram from successive boolean matrix powers."""
    a = net.adjacency_matrix().astype(bool)
    n = net.n
    reach = np.eye(n, dtype=bool)
    dist = np.full((n, n), -1)
    np.fill_diagonal(dist, 0)
    power = np.eye(n, dtype=bool)
    for d in range(1, n):
        power = (power.astype(int) @ a.astype(int)) > 0
        new = power & ~reach
        dist[new] = d
        reach |= power
    hist = {}
    for i, j in itertools.combinations(range(n), 2):
        key = dist[i, j] if dist[i, j] > 0 else UNREACHABLE
        hist[key] = hist.get(key, 0) + 1
    return hist


toggle_seq = st.lists(
    st.tuples(st.booleans(), st.integers(0, 7), st.integers(0, 7)), max_size=60
)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 8), ops=toggle_seq, seed=st.integers(0, 2**16))
def test_incremental_structure_matches_recompute(n, ops, seed):
    rng = np.random.default_rng(seed)
    net = random_network(n, 0.4, rng)
    before = net.copy()
    for is_edge, i, j in ops:
        i, j = i % n, j % n
        if is_edge and i != j:
            net.toggle_edge(i, j)
        else:
            net.toggle_node_outcome(i)
    a = net.adjacency_matrix()
    assert np.array_equal(net.degrees(), a.sum(axis=1))
    for i in range(n):
        assert np.array_equal(net.neighbors(i), np.nonzero(a[i])[0])
    assert sum(esp_distribution(net).values()) == net.n_edges
    assert sum(geodesic_distribution(net).values()) == n * (n - 1) // 2
    assert geodesic_distribution(net) == reachability_geodesics(net)
    # undo in reverse order restores everything
    for is_edge, i, j in reversed(ops):
        i, j = i % n, j % n
        if is_edge and i != j:
            net.toggle_edge(i, j)
        else:
            net.toggle_node_outcome(i)
    assert net == before
