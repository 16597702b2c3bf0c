"""Brute-force enumeration of tiny networks.

Every configuration of the random parts of the network is listed, so the
normalizing constant, moments of g and grid posteriors are exact.  This is
the reference the samplers and the exchange fit are tested against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .network import Network
from .priors import PriorSpec, log_prior
from .terms import ModelError, ModelSpec, eval_statistics

MAX_NODES = 5
MAX_GRID = 10**6


@dataclass
class ExactModel:
    """Full state table of a model on ``n`` nodes at one eta.

    ``edges[s]`` is a boolean mask over ``dyads`` and ``outcomes[s]`` the
    outcome vector of state ``s``; ``stats[s]`` is g at that state.
    """

    n: int
    eta: np.ndarray
    dyads: list[tuple[int, int]]
    edges: np.ndarray
    outcomes: np.ndarray
    stats: np.ndarray
    log_norm: float
    probs: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.probs)

    def mean(self) -> np.ndarray:
        return self.probs @ self.stats

    def cov(self) -> np.ndarray:
        d = self.stats - self.mean()
        return (d * self.probs[:, None]).T @ d

    def network(self, s: int, template: Network | None = None) -> Network:
        base = template if template is not None else Network(self.n)
        edges = [d for d, on in zip(self.dyads, self.edges[s]) if on]
        return Network(self.n, edges, self.outcomes[s], base.treatment, base.covariates)


def _check_size(model: ModelSpec, n: int):
    if n > MAX_NODES:
        raise ModelError(f"exact enumeration is capped at n <= {MAX_NODES} (got n={n})")
    if model.separable or model.model_class == "logistic":
        raise ModelError(f"{model.model_class} likelihood is tractable; enumeration covers joint models only")


def state_table(model: ModelSpec, template: Network):
    """(dyads, edge masks, outcomes, statistics) over every reachable state.

    Parts of the network the model holds fixed are copied from ``template``.
    """
    _check_size(model, template.n)
    return _state_table(model, _freeze(template))


def _freeze(net: Network):
    cov = tuple(sorted((k, tuple(v.tolist())) for k, v in net.covariates.items()))
    return (net.n, net.adj.tobytes(), tuple(net.outcomes.tolist()), tuple(net.treatment.tolist()), cov)


@lru_cache(maxsize=32)
def _state_table(model: ModelSpec, frozen):
    n, adj_bytes, y0, z, cov = frozen
    adj0 = np.frombuffer(adj_bytes, dtype=np.uint8).reshape(n, n)
    covariates = {k: np.array(v) for k, v in cov}
    dyads = list(itertools.combinations(range(n), 2))
    if model.edges_stochastic:
        masks = np.array(list(itertools.product([0, 1], repeat=len(dyads))), dtype=bool).reshape(-1, len(dyads))
    else:
        masks = np.array([[adj0[i, j] for i, j in dyads]], dtype=bool).reshape(1, len(dyads))
    if model.outcomes_stochastic:
        ys = np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.int64).reshape(-1, n)
    else:
        ys = np.array([y0], dtype=np.int64).reshape(1, n)
    n_states = len(masks) * len(ys)
    edges = np.repeat(masks, len(ys), axis=0)
    outcomes = np.tile(ys, (len(masks), 1))
    stats = np.empty((n_states, model.p))
    for s in range(n_states):
        net = Network(n, [d for d, on in zip(dyads, edges[s]) if on], outcomes[s], z, covariates)
        stats[s] = eval_statistics(net, model)
    for a in (edges, outcomes, stats):
        a.flags.writeable = False
    return dyads, edges, outcomes, stats


def enumerate_exact(model: ModelSpec, eta, n: int | None = None, template: Network | None = None) -> ExactModel:
    """Exact distribution proportional to exp(eta . g) on ``n`` nodes.

    ``template`` supplies treatment, covariates and any part of the network
    the model holds fixed; by default an empty network with no treated nodes.
    """
    if template is None:
        if n is None:
            raise ValueError("give n or a template network")
        template = Network(n)
    elif n is not None and n != template.n:
        raise ValueError("n disagrees with template size")
    eta = np.asarray(eta, float)
    if eta.shape != (model.p,):
        raise ValueError(f"eta has shape {eta.shape}, model has {model.p} terms")
    dyads, edges, outcomes, stats = state_table(model, template)
    logits = stats @ eta
    log_norm = float(logsumexp(logits))
    probs = np.exp(logits - log_norm)
    return ExactModel(template.n, eta, dyads, edges, outcomes, stats, log_norm, probs)


@dataclass
class GridPosterior:
    free: list[int]
    points: np.ndarray
    probs: np.ndarray
    axes: list[np.ndarray]

    def marginal(self, k: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Grid values and marginal probabilities of free coordinate ``k``."""
        axis = self.axes[k]
        idx = np.searchsorted(axis, self.points[:, k])
        return axis, np.bincount(idx, weights=self.probs, minlength=len(axis))

    def cdf(self, k: int = 0):
        """Continuous CDF of a free coordinate.

        Each grid point owns the cell between the midpoints to its
        neighbours and its mass is spread uniformly over that cell.
        """
        axis, w = self.marginal(k)
        mid = (axis[1:] + axis[:-1]) / 2
        edges = np.concatenate([[axis[0] - (mid[0] - axis[0])], mid, [axis[-1] + (axis[-1] - mid[-1])]])
        c = np.concatenate([[0.0], np.cumsum(w)])
        return lambda x: np.interp(x, edges, c)


def exact_grid_posterior(
    net_obs: Network,
    model: ModelSpec,
    prior: PriorSpec,
    grid,
    base_eta=None,
) -> GridPosterior:
    """Posterior over a grid of at most two free coordinates.

    ``grid`` maps coordinate index to candidate values (a sequence of value
    lists is read as coordinates 0, 1).  Remaining coordinates are held at
    ``base_eta``.  The posterior is exp(eta . g_obs - log c(eta)) * prior,
    normalized over the grid.
    """
    if not isinstance(grid, dict):
        grid = dict(enumerate(grid))
    if not 1 <= len(grid) <= 2:
        raise ValueError("grid posterior supports one or two free coordinates")
    free = sorted(grid)
    axes = [np.sort(np.asarray(grid[k], float)) for k in free]
    size = int(np.prod([len(a) for a in axes]))
    if size > MAX_GRID:
        raise ValueError(f"grid has {size} points (max {MAX_GRID})")
    base = np.zeros(model.p) if base_eta is None else np.asarray(base_eta, float).copy()
    points = np.array(list(itertools.product(*axes))).reshape(size, len(free))
    etas = np.repeat(base[None, :], size, axis=0)
    etas[:, free] = points
    _, _, _, stats = state_table(model, net_obs)
    g_obs = eval_statistics(net_obs, model)
    logc = logsumexp(stats @ etas.T, axis=0)
    logp = etas @ g_obs - logc + np.array([log_prior(prior, e) for e in etas])
    logp -= logsumexp(logp)
    return GridPosterior(free, points, np.exp(logp), axes)
