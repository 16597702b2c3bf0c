"""Causal estimands from imputed equilibrium potential outcomes.

For each posterior draw a batch of networks is simulated, and for every
node the realized one-step neighbourhood is recorded: own treatment z,
number of treated neighbours t and number of positive-outcome neighbours
o.  Effects are then contrasts between simulated nodes whose recorded
configurations differ in one coordinate:

main effect
    treated minus untreated nodes with the same (t, o), averaged over the
    (t, o) cells where both groups occur, weighted by cell frequency
k-peer treatment effect
    untreated nodes with t = k minus untreated nodes with t = 0
k-peer outcome effect
    untreated nodes with o = k minus untreated nodes with o = 0

A draw where a contrast has an empty side is omitted, and the number of
contributing draws is reported.  When outcomes follow a logistic
regression on neighbourhood counts (the logistic and ERGM+logistic
classes) the potential outcomes are available in closed form and the
same contrasts are computed from the fitted probabilities instead.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import Network
from .sampler import ChainState, SamplerConfig, edge_probability
from .terms import ModelError, ModelSpec, node_design


@dataclass
class PotentialOutcomeDraws:
    """Simulated outcomes and neighbourhood configurations.

    Arrays ``y``, ``treated_nb`` and ``positive_nb`` have shape
    (M draws, S simulations, n nodes).  For closed-form classes ``offset``
    holds each node's linear predictor excluding the treatment and the two
    neighbour-count terms, and ``coef`` the (treatment, treated-neighbour,
    positive-neighbour) coefficients per draw.
    """

    eta: np.ndarray
    z: np.ndarray
    y: np.ndarray
    treated_nb: np.ndarray
    positive_nb: np.ndarray
    model_class: str
    offset: np.ndarray | None = None
    coef: np.ndarray | None = None
    networks: list | None = None

    @property
    def closed_form(self) -> bool:
        return self.offset is not None

    @property
    def n_draws(self) -> int:
        return len(self.eta)

    def permuted(self, order) -> "PotentialOutcomeDraws":
        """Same draws with nodes relabeled so new node k is old node order[k]."""
        order = np.asarray(order)
        pick = (lambda a: None if a is None else a[..., order])
        return PotentialOutcomeDraws(
            self.eta, self.z[order], self.y[..., order], self.treated_nb[..., order],
            self.positive_nb[..., order], self.model_class, pick(self.offset), self.coef,
        )


def _node_coefficients(model: ModelSpec):
    """Indices of the treatment, treated-neighbour and positive-neighbour terms."""
    def find(kind, attr):
        return model.index(kind, attr)

    return (
        find("main_covariate", model.treatment_attr),
        find("neighbor_count", model.treatment_attr),
        find("neighbor_count", model.outcome_attr),
    )


def impute_missing_outcomes(
    draws,
    model: ModelSpec,
    net_obs: Network,
    M: int = 100,
    sims_per_draw: int = 100,
    rng: np.random.Generator | None = None,
    sampler: SamplerConfig = SamplerConfig(burn_in=10_000, thin=100, n_samples=1),
    keep_networks: bool = False,
    replace: bool = True,
) -> PotentialOutcomeDraws:
    """Simulate potential-outcome configurations from posterior draws.

    Parameters
    ----------
    draws : array_like, shape (T, p)
        Posterior sample of eta (e.g. pooled frozen-phase chain draws).
    M : int
        Number of parameter vectors, resampled from ``draws``.
    sims_per_draw : int
        Networks retained per parameter vector.  They come from one chain
        started at the observed network: ``sampler.burn_in`` proposals, then
        ``sampler.thin`` proposals between retained networks.
    replace : bool
        Resample draws with replacement; with ``replace=False`` the first
        ``M`` draws are used in order.
    """
    rng = np.random.default_rng() if rng is None else rng
    draws = np.atleast_2d(np.asarray(draws, float))
    if len(draws) == 0:
        raise ValueError("no posterior draws")
    if draws.shape[1] != model.p:
        raise ModelError(f"draws have {draws.shape[1]} columns, model has {model.p} terms")
    if M < 1 or sims_per_draw < 1:
        raise ValueError("M and sims_per_draw must be >= 1")
    pick = rng.integers(0, len(draws), M) if replace else np.arange(M) % len(draws)
    etas = draws[pick]
    n = net_obs.n
    shape = (M, sims_per_draw, n)
    ys = np.empty(shape, dtype=np.int64)
    ts = np.empty(shape, dtype=np.int64)
    os_ = np.empty(shape, dtype=np.int64)
    nets = [] if keep_networks else None
    z = net_obs.treatment.copy()

    if model.model_class == "logistic" or model.separable:
        return _impute_closed_form(model, net_obs, etas, shape, rng, sampler, keep_networks)

    state = ChainState(model, net_obs)
    start = state.snapshot()
    p_edge = edge_probability(model, n, sampler.edge_proposal_prob)
    for j, eta in enumerate(etas):
        state.restore(start)
        if keep_networks:
            state.steps(eta, sampler.burn_in, p_edge, rng)
            for s in range(sims_per_draw):
                if s:
                    state.steps(eta, sampler.thin, p_edge, rng)
                ys[j, s], ts[j, s], os_[j, s] = _config(state.net)
                nets.append(state.net.copy())
        else:
            ys[j], ts[j], os_[j] = state.configurations(eta, sampler.burn_in, sampler.thin, sims_per_draw, p_edge, rng)
    return PotentialOutcomeDraws(etas, z, ys, ts, os_, model.model_class, networks=nets)


def _config(net: Network):
    a = net.adjacency_matrix().astype(np.int64)
    return net.outcomes.copy(), a @ net.treatment, a @ net.outcomes


def _impute_closed_form(model, net_obs, etas, shape, rng, sampler, keep_networks):
    M, S, n = shape
    if model.separable:
        (e_idx, ergm), (n_idx, logit) = model.blocks()
    else:
        e_idx, ergm, n_idx, logit = None, None, np.arange(model.p), model
    kz, kt, ko = _node_coefficients(logit)
    special = {k for k in (kz, kt, ko) if k is not None}
    coef = np.zeros((M, 3))
    ys = np.empty(shape, dtype=np.int64)
    ts = np.empty(shape, dtype=np.int64)
    os_ = np.empty(shape, dtype=np.int64)
    offset = np.empty(shape)
    nets = [] if keep_networks else None
    if ergm is not None:
        state = ChainState(ergm, net_obs)
        start = state.snapshot()
        p_edge = edge_probability(ergm, n, sampler.edge_proposal_prob)
    for j, eta in enumerate(etas):
        b = eta[n_idx]
        coef[j] = [0.0 if k is None else b[k] for k in (kz, kt, ko)]
        if ergm is not None:
            state.restore(start)
            state.steps(eta[e_idx], sampler.burn_in, p_edge, rng)
        for s in range(S):
            if ergm is not None:
                if s:
                    state.steps(eta[e_idx], sampler.thin, p_edge, rng)
                net = state.net
            else:
                net = net_obs
            x = node_design(net, logit)
            rest = [k for k in range(logit.p) if k not in special]
            offset[j, s] = x[:, rest] @ b[rest]
            _, ts[j, s], os_[j, s] = _config(net)
            lp = x @ b
            ys[j, s] = rng.random(n) < 1.0 / (1.0 + np.exp(-lp))
            if keep_networks:
                snap = net.copy()
                snap.outcomes[:] = ys[j, s]
                nets.append(snap)
    return PotentialOutcomeDraws(etas, net_obs.treatment.copy(), ys, ts, os_, model.model_class, offset, coef, nets)


# -- estimators ---------------------------------------------------------------

@dataclass
class Estimate:
    """Per-draw values of one estimand; NaN marks an omitted draw."""

    name: str
    values: np.ndarray

    @property
    def available(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.values)))

    @property
    def missing(self) -> bool:
        return self.available == 0

    @property
    def samples(self) -> np.ndarray:
        return self.values[~np.isnan(self.values)]

    def mean(self) -> float:
        return math.fsum(self.samples) / self.available if self.available else float("nan")

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        if self.available < 2:
            return float("nan"), float("nan")
        return credible_interval(self.samples, level)


def credible_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Central empirical quantile interval."""
    x = np.asarray(samples, float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    lo, hi = np.quantile(x, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def _expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def _fmean(x) -> float:
    # exactly rounded, so the result does not depend on node order
    x = np.ravel(x)
    return math.fsum(x.tolist()) / len(x) if len(x) else float("nan")


def main_effect(draws: PotentialOutcomeDraws) -> Estimate:
    vals = np.full(draws.n_draws, np.nan)
    if draws.closed_form:
        for j in range(draws.n_draws):
            bz, bt, bo = draws.coef[j]
            lp = draws.offset[j] + bt * draws.treated_nb[j] + bo * draws.positive_nb[j]
            vals[j] = _fmean(_expit(lp + bz) - _expit(lp))
        return Estimate("main", vals)
    n = draws.y.shape[2]
    z = np.broadcast_to(draws.z.astype(bool), draws.y.shape[1:])
    for j in range(draws.n_draws):
        key = (draws.treated_nb[j] * (n + 1) + draws.positive_nb[j]).ravel()
        y = draws.y[j].ravel()
        zz = z.ravel()
        size = (n + 1) ** 2
        n1 = np.bincount(key[zz], minlength=size)
        s1 = np.bincount(key[zz], weights=y[zz], minlength=size)
        n0 = np.bincount(key[~zz], minlength=size)
        s0 = np.bincount(key[~zz], weights=y[~zz], minlength=size)
        cells = np.flatnonzero((n1 > 0) & (n0 > 0))
        if len(cells) == 0:
            continue
        w = n1[cells] + n0[cells]
        diff = s1[cells] / n1[cells] - s0[cells] / n0[cells]
        vals[j] = math.fsum((w * diff).tolist()) / int(w.sum())
    return Estimate("main", vals)


def _k_peer(draws: PotentialOutcomeDraws, k: int, which: str) -> Estimate:
    if k < 0:
        raise ValueError("k must be >= 0")
    name = f"{k}-peer-{'treat' if which == 'treated' else 'out'}"
    vals = np.full(draws.n_draws, np.nan)
    count = draws.treated_nb if which == "treated" else draws.positive_nb
    untreated = draws.z == 0
    for j in range(draws.n_draws):
        c = count[j][:, untreated]
        if draws.closed_form:
            bz, bt, bo = draws.coef[j]
            off = draws.offset[j][:, untreated]
            other = bo * draws.positive_nb[j][:, untreated] if which == "treated" else bt * draws.treated_nb[j][:, untreated]
            slope = bt if which == "treated" else bo
            if c.size == 0:
                continue
            vals[j] = _fmean(_expit(off + other + slope * k) - _expit(off + other))
            continue
        y = draws.y[j][:, untreated]
        at_k, at_0 = c == k, c == 0
        nk, n0 = int(at_k.sum()), int(at_0.sum())
        if nk == 0 or n0 == 0:
            continue
        if k == 0:
            vals[j] = 0.0
            continue
        vals[j] = int(y[at_k].sum()) / nk - int(y[at_0].sum()) / n0
    return Estimate(name, vals)


def k_peer_treatment_effect(draws: PotentialOutcomeDraws, k: int) -> Estimate:
    return _k_peer(draws, k, "treated")


def k_peer_outcome_effect(draws: PotentialOutcomeDraws, k: int) -> Estimate:
    return _k_peer(draws, k, "positive")


# -- reports ------------------------------------------------------------------

@dataclass
class EstimandReport:
    estimates: list[Estimate]
    level: float = 0.95
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Estimate:
        for e in self.estimates:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.estimates]

    def rows(self) -> list[dict]:
        out = []
        for e in self.estimates:
            lo, hi = e.interval(self.level)
            out.append({
                "estimand": e.name,
                "mean": None if e.missing else e.mean(),
                "lower": None if np.isnan(lo) else lo,
                "upper": None if np.isnan(hi) else hi,
                "available": e.available,
                "missing": e.missing,
            })
        return out

    def to_json(self, path) -> None:
        doc = {
            "level": self.level,
            "meta": self.meta,
            "estimands": [
                {**r, "samples": [None if np.isnan(v) else float(v) for v in e.values]}
                for r, e in zip(self.rows(), self.estimates)
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=2))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["estimand", "mean", "lower", "upper", "available"])
            for r in self.rows():
                w.writerow([r["estimand"], *(_fmt(r[k]) for k in ("mean", "lower", "upper")), r["available"]])

    @classmethod
    def from_json(cls, path) -> "EstimandReport":
        doc = json.loads(Path(path).read_text())
        est = [Estimate(r["estimand"], np.array([np.nan if v is None else v for v in r["samples"]], float))
               for r in doc["estimands"]]
        return cls(est, doc["level"], doc.get("meta", {}))


def _fmt(v) -> str:
    return "NA" if v is None else f"{v:.6g}"


def estimand_report(draws: PotentialOutcomeDraws, K: int = 5, level: float = 0.95) -> EstimandReport:
    """Main effect plus k-peer outcome and treatment effects for k = 1..K."""
    est = [main_effect(draws)]
    est += [k_peer_outcome_effect(draws, k) for k in range(1, K + 1)]
    est += [k_peer_treatment_effect(draws, k) for k in range(1, K + 1)]
    return EstimandReport(est, level, {"model_class": draws.model_class, "M": draws.n_draws,
                                       "sims_per_draw": int(draws.y.shape[1])})


def do_main_effect(
    draws,
    model: ModelSpec,
    net_obs: Network,
    M: int = 100,
    rng: np.random.Generator | None = None,
    sampler: SamplerConfig = SamplerConfig(burn_in=10_000, thin=100, n_samples=10),
) -> Estimate:
    """Global-intervention contrast (sensitivity analysis, not the matched
    estimator): mean equilibrium outcome with every node treated minus with
    no node treated, per posterior draw."""
    rng = np.random.default_rng() if rng is None else rng
    draws = np.atleast_2d(np.asarray(draws, float))
    vals = np.empty(M)
    arms = []
    for z in (1, 0):
        net = Network(net_obs.n, net_obs.edge_list(), net_obs.outcomes, np.full(net_obs.n, z), net_obs.covariates)
        arms.append(net)
    pick = rng.integers(0, len(draws), M)
    for j, eta in enumerate(draws[pick]):
        means = []
        for net in arms:
            d = impute_missing_outcomes(eta[None], model, net, 1, sampler.n_samples, rng,
                                        sampler, replace=False)
            means.append(d.y.mean())
        vals[j] = means[0] - means[1]
    return Estimate("main-do", vals)
