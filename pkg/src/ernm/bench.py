"""Toggle-proposal throughput benchmark.

Runs the sampler on a synthetic school-sized network (869 nodes, grade and
sex covariates, mean degree about 4.5) with a nine-term model mixing edge,
dyadic-covariate and nodal terms.  Run as ``python -m ernm.bench``.
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .network import Network
from .sampler import ChainState, edge_probability
from .terms import ModelSpec, TermSpec

BENCH_ETA = (-5.86, 1.55, 2.11, 1.57, 0.55, 0.34, 0.82, -0.11, -0.36)


def school_model() -> ModelSpec:
    return ModelSpec((
        TermSpec.edges(),
        TermSpec.gwesp(0.5, "grade"),
        TermSpec.gwdeg(0.5),
        TermSpec.homophily("grade", "sqrt"),
        TermSpec.homophily("sex", "sqrt"),
        TermSpec.homophily("outcome", "sqrt"),
        TermSpec.intercept(),
        TermSpec.main_covariate("sex"),
        TermSpec.neighbor_count("outcome"),
    ))


def school_network(n: int = 869, mean_degree: float = 4.5, seed: int = 1) -> Network:
    rng = np.random.default_rng(seed)
    grade = rng.integers(7, 13, n).astype(float)
    sex = rng.integers(0, 2, n).astype(float)
    m = int(n * mean_degree / 2)
    edges: set[tuple[int, int]] = set()
    while len(edges) < m:
        i, j = rng.integers(0, n, 2)
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return Network(n, sorted(edges), outcomes=rng.integers(0, 2, n), covariates={"grade": grade, "sex": sex})


@dataclass
class BenchResult:
    n_nodes: int
    n_terms: int
    proposals: int
    seconds: float
    proposals_per_second: float
    edges_after: int


def throughput(n_proposals: int = 2_000_000, n: int = 869, seed: int = 1, warmup: int = 10_000) -> BenchResult:
    """Time ``n_proposals`` single-toggle proposals after a warm-up that
    also triggers compilation."""
    model = school_model()
    net = school_network(n, seed=seed)
    rng = np.random.default_rng(seed)
    state = ChainState(model, net)
    p_edge = edge_probability(model, n)
    eta = np.asarray(BENCH_ETA)
    state.steps(eta, warmup, p_edge, rng)
    t0 = time.perf_counter()
    state.steps(eta, n_proposals, p_edge, rng)
    dt = time.perf_counter() - t0
    return BenchResult(n, model.p, n_proposals, dt, n_proposals / dt, state.net.n_edges)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--proposals", type=int, default=2_000_000)
    ap.add_argument("--nodes", type=int, default=869)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    print(json.dumps(asdict(throughput(args.proposals, args.nodes, args.seed)), indent=2))


if __name__ == "__main__":
    main()
