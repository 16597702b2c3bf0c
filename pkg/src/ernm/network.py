"""Undirected binary networks with binary nodal outcomes and treatments."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import _kernels

#: Histogram key used for node pairs with no connecting path.
UNREACHABLE = -1


class NetworkError(ValueError):
    pass


class Histogram(Counter):
    """Integer-keyed counts (degree, shared partners or path length)."""

    def as_dict(self) -> dict[int, int]:
        return {int(k): int(v) for k, v in sorted(self.items(), key=_bin_order)}


def _bin_order(item):
    k = item[0]
    return (k == UNREACHABLE, k)


class Network:
    """Node set with undirected adjacency, outcomes, treatment and covariates.

    Adjacency is held twice: a dense membership matrix for O(1) dyad queries
    and per-node neighbour arrays for fast iteration.  Both are updated by
    every toggle.  Node labels from the input files are kept in ``labels``;
    all methods work on dense indices ``0..n-1``.
    """

    def __init__(
        self,
        n: int,
        edges: Iterable[tuple[int, int]] = (),
        outcomes: Sequence[int] | None = None,
        treatment: Sequence[int] | None = None,
        covariates: Mapping[str, Sequence] | None = None,
        labels: Sequence | None = None,
    ):
        if n < 1:
            raise NetworkError("a network needs at least one node")
        self.n = int(n)
        self.adj = np.zeros((n, n), dtype=np.uint8)
        self.nbr = np.zeros((n, n), dtype=np.int32)
        self.pos = np.zeros((n, n), dtype=np.int32)
        self.deg = np.zeros(n, dtype=np.int32)
        self.outcomes = _binary_vector(outcomes, n, "outcomes")
        self.treatment = _binary_vector(treatment, n, "treatment")
        self.covariates = {}
        for name, values in (covariates or {}).items():
            arr = np.asarray(values)
            if arr.shape != (n,):
                raise NetworkError(f"covariate {name!r} must have length {n}")
            self.covariates[name] = arr
        self.labels = list(labels) if labels is not None else list(range(n))
        for i, j in edges:
            self._check_dyad(i, j)
            if not self.adj[i, j]:
                _kernels.toggle_edge(self.adj, self.nbr, self.pos, self.deg, i, j)

    # -- queries ---------------------------------------------------------
    @property
    def n_edges(self) -> int:
        return int(self.deg.sum()) // 2

    @property
    def n_dyads(self) -> int:
        return self.n * (self.n - 1) // 2

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.adj[i, j])

    def neighbors(self, i: int) -> np.ndarray:
        return np.sort(self.nbr[i, : self.deg[i]])

    def degrees(self) -> np.ndarray:
        return self.deg.astype(np.int64)

    def edge_list(self) -> np.ndarray:
        """Edges as an ``(m, 2)`` array with ``i < j``, lexicographically sorted."""
        i, j = np.nonzero(np.triu(self.adj, 1))
        return np.column_stack([i, j]).astype(np.int64)

    def adjacency_matrix(self) -> np.ndarray:
        return self.adj.astype(np.int64)

    def attribute(self, name: str) -> np.ndarray:
        if name in self.covariates:
            return self.covariates[name]
        raise NetworkError(f"unknown node attribute {name!r}")

    # -- mutation --------------------------------------------------------
    def _check_dyad(self, i, j):
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise NetworkError(f"dyad ({i}, {j}) out of range for n={self.n}")
        if i == j:
            raise NetworkError(f"self-loop at node {i}")

    def toggle_edge(self, i: int, j: int) -> "Network":
        self._check_dyad(i, j)
        _kernels.toggle_edge(self.adj, self.nbr, self.pos, self.deg, i, j)
        return self

    def toggle_node_outcome(self, i: int) -> "Network":
        if not 0 <= i < self.n:
            raise NetworkError(f"node {i} out of range for n={self.n}")
        self.outcomes[i] = 1 - self.outcomes[i]
        return self

    def copy(self) -> "Network":
        other = Network.__new__(Network)
        other.n = self.n
        other.adj = self.adj.copy()
        other.nbr = self.nbr.copy()
        other.pos = self.pos.copy()
        other.deg = self.deg.copy()
        other.outcomes = self.outcomes.copy()
        other.treatment = self.treatment.copy()
        other.covariates = {k: v.copy() for k, v in self.covariates.items()}
        other.labels = list(self.labels)
        return other

    def with_state(self, adj: np.ndarray | None = None, outcomes=None) -> "Network":
        """Copy with a replaced adjacency matrix and/or outcome vector."""
        edges = self.edge_list() if adj is None else np.argwhere(np.triu(adj, 1))
        return Network(
            self.n,
            edges=map(tuple, edges),
            outcomes=self.outcomes if outcomes is None else outcomes,
            treatment=self.treatment,
            covariates=self.covariates,
            labels=self.labels,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.adj, other.adj)
            and np.array_equal(self.outcomes, other.outcomes)
            and np.array_equal(self.treatment, other.treatment)
            and self.covariates.keys() == other.covariates.keys()
            and all(np.array_equal(v, other.covariates[k]) for k, v in self.covariates.items())
        )

    def __repr__(self) -> str:
        return f"Network(n={self.n}, edges={self.n_edges}, outcome_sum={int(self.outcomes.sum())})"


def _binary_vector(values, n, what):
    if values is None:
        return np.zeros(n, dtype=np.int64)
    arr = np.asarray(values)
    if arr.shape != (n,):
        raise NetworkError(f"{what} must have length {n}, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise NetworkError(f"{what} must be binary (0/1)")
    return arr.astype(np.int64)


# -- loading ---------------------------------------------------------------

def load_network(
    node_table: Sequence[Mapping[str, str]],
    edge_list: Sequence[Mapping[str, str]],
    outcome: str | None = "outcome",
    treatment: str | None = "treatment",
    covariates: Sequence[str] | None = None,
) -> Network:
    """Build a :class:`Network` from node and edge records.

    Parameters
    ----------
    node_table : sequence of mappings
        One record per node with an ``id`` field plus declared columns.
    edge_list : sequence of mappings
        Records with ``from`` and ``to`` node ids.  Duplicate and reversed
        rows collapse to one edge.
    outcome, treatment : str or None
        Column names of the binary outcome and treatment.  ``None`` means
        the column is absent and defaults to zeros.
    covariates : sequence of str, optional
        Extra columns to keep.  Defaults to every column not otherwise used.
        Columns whose values all parse as numbers are stored as floats.
    """
    ids = [str(rec["id"]) if "id" in rec else None for rec in node_table]
    if any(i is None for i in ids):
        raise NetworkError("node table requires an 'id' column")
    index = {}
    for k, node_id in enumerate(ids):
        if node_id in index:
            raise NetworkError(f"duplicate node id {node_id!r}")
        index[node_id] = k
    n = len(ids)
    columns = list(node_table[0].keys()) if node_table else []

    def column(name):
        if name not in columns:
            raise NetworkError(f"missing required column {name!r}")
        return [rec[name] for rec in node_table]

    def binary_column(name):
        out = []
        for v in column(name):
            s = str(v).strip()
            if s not in ("0", "1", "0.0", "1.0"):
                raise NetworkError(f"column {name!r} has non-binary value {v!r}")
            out.append(int(float(s)))
        return out

    y = binary_column(outcome) if outcome else None
    z = binary_column(treatment) if treatment else None
    if covariates is None:
        covariates = [c for c in columns if c not in ("id", outcome, treatment)]
    cov = {name: _parse_column(column(name)) for name in covariates}

    edges = []
    for rec in edge_list:
        a, b = str(rec["from"]), str(rec["to"])
        for node_id in (a, b):
            if node_id not in index:
                raise NetworkError(f"edge endpoint {node_id!r} not in node table")
        if a == b:
            raise NetworkError(f"self-loop at node {a!r}")
        edges.append((index[a], index[b]))
    return Network(n, edges, outcomes=y, treatment=z, covariates=cov, labels=ids)


def _parse_column(values):
    try:
        return np.array([float(v) for v in values])
    except ValueError:
        return np.array([str(v) for v in values], dtype=object)


def read_network(nodes_csv, edges_csv, **kwargs) -> Network:
    with open(nodes_csv, newline="", encoding="utf-8") as fh:
        nodes = list(csv.DictReader(fh))
    with open(edges_csv, newline="", encoding="utf-8") as fh:
        edges = list(csv.DictReader(fh))
    return load_network(nodes, edges, **kwargs)


def write_network(net: Network, nodes_csv, edges_csv, outcome="outcome", treatment="treatment"):
    names = list(net.covariates)
    Path(nodes_csv).parent.mkdir(parents=True, exist_ok=True)
    with open(nodes_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", outcome, treatment, *names])
        for i in range(net.n):
            w.writerow(
                [net.labels[i], int(net.outcomes[i]), int(net.treatment[i])]
                + [_fmt(net.covariates[c][i]) for c in names]
            )
    with open(edges_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to"])
        for i, j in net.edge_list():
            w.writerow([net.labels[i], net.labels[j]])


def _fmt(v):
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return int(v)
    return v


# -- structural summaries --------------------------------------------------

def degree_distribution(net: Network) -> Histogram:
    return Histogram(int(d) for d in net.deg)


def esp_distribution(net: Network) -> Histogram:
    """For each edge, the number of common neighbours of its endpoints."""
    a = net.adjacency_matrix()
    common = a @ a
    i, j = np.nonzero(np.triu(a, 1))
    return Histogram(int(c) for c in common[i, j])


def geodesic_distribution(net: Network) -> Histogram:
    counts = _kernels.geodesic_counts(net.nbr, net.deg)
    hist = Histogram({d: int(c) for d, c in enumerate(counts) if d > 0 and c > 0})
    if counts[0]:
        hist[UNREACHABLE] = int(counts[0])
    return hist


def triangle_count(adj: np.ndarray) -> int:
    a = np.asarray(adj, dtype=np.int64)
    return int(np.einsum("ij,jk,ki->", a, a, a)) // 6


@dataclass(frozen=True)
class SubgroupStats:
    """Summaries restricted to a node group.

    A proportion is ``None`` when its denominator (edges or triangles in the
    whole network) is zero.
    """

    degree: Histogram
    edge_proportion: float | None
    triad_proportion: float | None
    group_size: int


def subgroup_stats(net: Network, group: np.ndarray | Callable[[Network, int], bool]) -> SubgroupStats:
    if callable(group):
        mask = np.array([bool(group(net, i)) for i in range(net.n)])
    else:
        mask = np.asarray(group, dtype=bool)
    a = net.adjacency_matrix()
    degree = Histogram(int(d) for d in net.deg[mask])
    m = net.n_edges
    inner = a[np.ix_(mask, mask)]
    edge_prop = int(inner.sum()) // 2 / m if m else None
    tri = triangle_count(a)
    triad_prop = triangle_count(inner) / tri if tri else None
    return SubgroupStats(degree, edge_prop, triad_prop, int(mask.sum()))


def outcome_group(value: int = 1, attr: str | None = None):
    """Group predicate matching nodes whose outcome (or covariate) equals ``value``."""

    def predicate(net: Network, i: int) -> bool:
        v = net.outcomes[i] if attr is None else net.covariates[attr][i]
        return v == value

    return predicate
