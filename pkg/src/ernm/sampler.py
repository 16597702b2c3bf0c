"""Single-toggle Metropolis sampling and the temporal DAG simulator."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import _kernels
from .network import Network
from .terms import CompiledModel, ModelError, ModelSpec, compile_model, eval_statistics, node_design

log = logging.getLogger(__name__)


class DegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    """Proposal counts for one chain.

    ``edge_proposal_prob=None`` picks dyads with probability
    ``n_dyads / (n_dyads + n)`` so every toggleable coordinate is equally
    likely to be proposed.
    """

    burn_in: int = 10_000
    thin: int = 100
    n_samples: int = 100
    edge_proposal_prob: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        p = self.edge_proposal_prob
        if p is not None and not 0.0 <= p <= 1.0:
            raise ValueError("edge_proposal_prob must lie in [0, 1]")


@dataclass(frozen=True)
class EdgeToggle:
    i: int
    j: int


@dataclass(frozen=True)
class NodeToggle:
    i: int


ToggleProposal = Union[EdgeToggle, NodeToggle]


def edge_probability(model: ModelSpec, n: int, requested: float | None = None) -> float:
    if not (model.edges_stochastic or model.outcomes_stochastic):
        raise ModelError("model has no stochastic component to propose")
    if not model.outcomes_stochastic:
        return 1.0
    if not model.edges_stochastic:
        return 0.0
    if requested is not None:
        return float(requested)
    dyads = n * (n - 1) / 2
    return dyads / (dyads + n)


def propose(net: Network, model: ModelSpec, rng: np.random.Generator, edge_proposal_prob=None) -> ToggleProposal:
    """Draw a toggle: a uniform dyad or a uniform node, respecting model flags."""
    p = edge_probability(model, net.n, edge_proposal_prob)
    if p >= 1.0 or (p > 0.0 and rng.random() < p):
        i = int(rng.integers(0, net.n))
        j = int(rng.integers(0, net.n - 1))
        return EdgeToggle(i, j + 1 if j >= i else j)
    return NodeToggle(int(rng.integers(0, net.n)))


def acceptance_logit(eta, delta) -> float:
    """Log acceptance ratio ``eta . delta``; accept with probability min(1, exp(.))."""
    eta = np.asarray(eta, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if eta.shape != delta.shape:
        raise ValueError(f"length mismatch: eta {eta.shape} vs delta {delta.shape}")
    return float(eta @ delta)


class ChainState:
    """A privately owned network plus everything the kernels need to move it.

    The statistics vector ``g`` is kept in sync incrementally; call
    :meth:`recompute` to resynchronise from scratch.
    """

    def __init__(self, model: ModelSpec, net: Network, compiled: CompiledModel | None = None):
        self.model = model
        self.net = net.copy()
        self.cm = compiled if compiled is not None else compile_model(model, self.net)
        self.aux = self.cm.initial_aux(self.net)
        self.g = eval_statistics(self.net, model)

    def recompute(self):
        self.aux = self.cm.initial_aux(self.net)
        self.g = eval_statistics(self.net, self.model)

    def reset(self, net: Network):
        """Load the adjacency and outcomes of ``net`` without recompiling."""
        self.net.adj[:] = net.adj
        self.net.nbr[:] = net.nbr
        self.net.pos[:] = net.pos
        self.net.deg[:] = net.deg
        self.net.outcomes[:] = net.outcomes
        self.recompute()

    def snapshot(self) -> tuple:
        net = self.net
        return tuple(a.copy() for a in (net.adj, net.nbr, net.pos, net.deg, net.outcomes, self.aux, self.g))

    def restore(self, snap: tuple):
        """Return to a :meth:`snapshot` without recomputing statistics."""
        net = self.net
        for dst, src in zip((net.adj, net.nbr, net.pos, net.deg, net.outcomes, self.aux, self.g), snap):
            dst[...] = src

    def _arrays(self):
        net, cm = self.net, self.cm
        return (net.adj, net.nbr, net.pos, net.deg, net.outcomes, cm.xcat, cm.xnum,
                cm.kinds, cm.attrs, cm.params, self.aux)

    def steps(self, eta, n_steps: int, p_edge: float, rng) -> int:
        delta = np.zeros(self.model.p)
        return _kernels.mh_steps(n_steps, p_edge, *self._arrays(), np.asarray(eta, float), self.g, delta, rng)

    def sample(self, eta, burn_in: int, thin: int, n_samples: int, p_edge: float, rng):
        stats = np.empty((n_samples, self.model.p))
        edges = np.empty(n_samples, dtype=np.int64)
        acc = _kernels.mh_sample(
            burn_in, thin, n_samples, p_edge, *self._arrays(),
            np.asarray(eta, float), self.g, rng, stats, edges,
        )
        return stats, edges, acc

    def dag(self, eta, T: int, node_steps: int, edge_steps: int, rng) -> int:
        return _kernels.dag_steps(T, node_steps, edge_steps, *self._arrays(), np.asarray(eta, float), self.g, rng)

    def configurations(self, eta, burn_in: int, thin: int, n_sims: int, p_edge: float, rng):
        n = self.net.n
        ys = np.empty((n_sims, n), dtype=np.int64)
        ts = np.empty((n_sims, n), dtype=np.int64)
        os_ = np.empty((n_sims, n), dtype=np.int64)
        _kernels.sample_configurations(
            burn_in, thin, n_sims, p_edge, *self._arrays(), np.asarray(eta, float), self.g, rng,
            self.net.treatment.astype(float), ys, ts, os_,
        )
        return ys, ts, os_


@dataclass
class McmcResult:
    stats: np.ndarray
    edge_counts: np.ndarray
    acceptance_rate: float
    final: Network
    networks: list[Network] | None = None


def _check_eta(model, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (model.p,):
        raise ValueError(f"eta has shape {eta.shape}, model has {model.p} terms")
    return eta


def mcmc_run(
    model: ModelSpec,
    eta,
    net_init: Network,
    cfg: SamplerConfig,
    rng: np.random.Generator | None = None,
    keep_networks: bool = False,
) -> McmcResult:
    """Metropolis chain targeting exp(eta . g) over the model's random parts.

    Returns ``cfg.n_samples`` statistic vectors spaced ``cfg.thin`` proposals
    apart after ``cfg.burn_in`` proposals.  With ``keep_networks`` a copy of
    the network is kept with each sample.  Separable models are sampled
    block by block: edges from the edge block with outcomes fixed, then
    outcomes from the logistic block given the sampled network.
    """
    eta = _check_eta(model, eta)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if model.separable:
        return _separable_run(model, eta, net_init, cfg, rng, keep_networks)
    p_edge = edge_probability(model, net_init.n, cfg.edge_proposal_prob)
    if model.model_class == "logistic":
        return _logistic_run(model, eta, net_init, cfg, rng, keep_networks)
    state = ChainState(model, net_init)
    total = cfg.burn_in + cfg.thin * cfg.n_samples
    if keep_networks:
        stats = np.empty((cfg.n_samples, model.p))
        edges = np.empty(cfg.n_samples, dtype=np.int64)
        nets = []
        acc = state.steps(eta, cfg.burn_in, p_edge, rng)
        for s in range(cfg.n_samples):
            acc += state.steps(eta, cfg.thin, p_edge, rng)
            stats[s] = state.g
            edges[s] = state.net.n_edges
            nets.append(state.net.copy())
    else:
        stats, edges, acc = state.sample(eta, cfg.burn_in, cfg.thin, cfg.n_samples, p_edge, rng)
        nets = None
    if model.edges_stochastic:
        _watch_degeneracy(edges, net_init.n_dyads)
    return McmcResult(stats, edges, acc / max(total, 1), state.net, nets)


def _logistic_run(model, eta, net_init, cfg, rng, keep_networks):
    # outcomes are independent given frozen neighbour counts: draw them exactly
    x = node_design(net_init, model)
    prob = 1.0 / (1.0 + np.exp(-(x @ eta)))
    stats = np.empty((cfg.n_samples, model.p))
    nets = [] if keep_networks else None
    net = net_init.copy()
    for s in range(cfg.n_samples):
        net.outcomes[:] = (rng.random(net.n) < prob).astype(np.int64)
        stats[s] = net.outcomes @ x
        if keep_networks:
            nets.append(net.copy())
    edges = np.full(cfg.n_samples, net_init.n_edges, dtype=np.int64)
    return McmcResult(stats, edges, 1.0, net, nets)


def _separable_run(model, eta, net_init, cfg, rng, keep_networks):
    (e_idx, ergm), (n_idx, logit) = model.blocks()
    res = mcmc_run(ergm, eta[e_idx], net_init, cfg, rng, keep_networks=True)
    stats = np.empty((cfg.n_samples, model.p))
    nets = []
    for s, net in enumerate(res.networks):
        x = node_design(net, logit)
        prob = 1.0 / (1.0 + np.exp(-(x @ eta[n_idx])))
        net.outcomes[:] = (rng.random(net.n) < prob).astype(np.int64)
        stats[s, e_idx] = res.stats[s]
        stats[s, n_idx] = net.outcomes @ x
        nets.append(net)
    return McmcResult(stats, res.edge_counts, res.acceptance_rate, nets[-1], nets if keep_networks else None)


def _watch_degeneracy(edge_counts, n_dyads, window=100, threshold=0.99):
    if len(edge_counts) < 10:
        return
    window = min(window, len(edge_counts))
    extreme = (edge_counts == 0) | (edge_counts == n_dyads)
    frac = np.convolve(extreme, np.ones(window) / window, mode="valid")
    if frac.max() > threshold:
        warnings.warn(
            "degeneracy: chain sat at the empty or complete graph for "
            f"{frac.max():.1%} of a {window}-sample window",
            DegeneracyWarning,
            stacklevel=3,
        )


def initial_network(template: Network, model: ModelSpec, eta, rng) -> Network:
    """Random starting state: Bernoulli edges at density ``expit(eta_edges)``
    and Bernoulli outcomes at ``expit(eta_intercept)``; fixed parts copied."""
    eta = _check_eta(model, eta)
    net = template.copy()
    n = net.n
    if model.edges_stochastic:
        k = model.index("edges")
        density = 1.0 / (1.0 + np.exp(-eta[k])) if k is not None else 0.5
        density = float(np.clip(density, 0.0, 1.0))
        iu = np.triu_indices(n, 1)
        keep = rng.random(len(iu[0])) < density
        net = net.with_state(adj=_adjacency(n, iu[0][keep], iu[1][keep]))
    if model.outcomes_stochastic:
        k = model.index("intercept")
        prob = 1.0 / (1.0 + np.exp(-eta[k])) if k is not None else 0.5
        net.outcomes[:] = (rng.random(n) < prob).astype(np.int64)
    return net


def _adjacency(n, i, j):
    a = np.zeros((n, n), dtype=np.uint8)
    a[i, j] = 1
    a[j, i] = 1
    return a


def dag_simulate(
    model: ModelSpec,
    eta,
    z,
    T: int,
    rng: np.random.Generator,
    covariates=None,
    node_steps: int = 1,
    edge_steps: int = 1,
) -> Network:
    """Simulate the temporal process from the empty, all-zero network.

    Each of the ``T`` time steps proposes ``node_steps`` single outcome
    toggles and then ``edge_steps`` single dyad toggles, each accepted with
    its Metropolis probability under ``eta``.  Phases for parts of the
    network the model treats as fixed are skipped.
    """
    eta = _check_eta(model, eta)
    z = np.asarray(z, dtype=np.int64)
    if T < 0:
        raise ValueError("T must be >= 0")
    net = Network(len(z), treatment=z, covariates=covariates)
    if T == 0:
        return net
    state = ChainState(model, net)
    state.dag(
        eta, T,
        node_steps if model.outcomes_stochastic else 0,
        edge_steps if model.edges_stochastic else 0,
        rng,
    )
    return state.net


def write_snapshots(networks, outdir) -> None:
    """Write each retained network as ``edges_<k>.csv`` and ``nodes_<k>.csv``."""
    from pathlib import Path

    from .network import write_network

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for k, net in enumerate(networks):
        write_network(net, out / f"nodes_{k:05d}.csv", out / f"edges_{k:05d}.csv")
