"""Convergence checks, posterior-predictive goodness of fit and
relative-rank divergences between posterior samples."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats as sps

from .network import (
    Network,
    degree_distribution,
    esp_distribution,
    geodesic_distribution,
    subgroup_stats,
)
from .sampler import SamplerConfig, mcmc_run
from .terms import ModelSpec


# -- Gelman-Rubin -------------------------------------------------------------

def geometric_windows(length: int, n_windows: int = 20, first: int = 10) -> np.ndarray:
    """Cumulative window end points spaced geometrically up to ``length``."""
    if length < first:
        raise ValueError(f"chains must have at least {first} draws")
    return np.unique(np.geomspace(first, length, n_windows).round().astype(int))


def _psrf(x: np.ndarray) -> np.ndarray:
    # x: (m chains, t draws, p)
    m, t, _ = x.shape
    means = x.mean(axis=1)
    b = t * means.var(axis=0, ddof=1)
    w = x.var(axis=1, ddof=1).mean(axis=0)
    var_plus = (t - 1) / t * w + b / t
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(var_plus / w)
    r = np.where(w > 0, r, np.inf)
    return np.where(b == 0, 1.0, r)


def gelman_rubin(chains, windows=None) -> tuple[np.ndarray, np.ndarray]:
    """Potential scale reduction over cumulative windows.

    Parameters
    ----------
    chains : array_like, shape (m, t) or (m, t, p)
        ``m >= 2`` equal-length chains.
    windows : sequence of int, optional
        Window end points; defaults to :func:`geometric_windows`.

    Returns
    -------
    ends : ndarray
        Window end points.
    ratio : ndarray, shape (len(ends), p)
        Classic between/within estimate per window and parameter.  When the
        between-chain variance is exactly zero the ratio is 1.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[0] < 2:
        raise ValueError("need at least two chains")
    if x.shape[1] < 10:
        raise ValueError("chains must have at least 10 draws")
    ends = geometric_windows(x.shape[1]) if windows is None else np.asarray(windows, int)
    return ends, np.array([_psrf(x[:, :e]) for e in ends])


# -- relative ranks -----------------------------------------------------------

@dataclass(frozen=True)
class RankKdeConfig:
    bandwidth_min: float = 0.02
    bandwidth_max: float = 0.2
    grid_points: int = 512
    floor: float = 1e-12
    min_samples: int = 50


def relative_ranks(a, b) -> np.ndarray:
    """Midrank of each value of ``a`` within the sample ``b``, scaled to [0, 1]."""
    b = np.sort(np.asarray(b, float))
    a = np.asarray(a, float)
    lo = np.searchsorted(b, a, side="left")
    hi = np.searchsorted(b, a, side="right")
    return (lo + hi) / (2.0 * len(b))


def reflected_kde(r, grid, bandwidth) -> np.ndarray:
    """Gaussian KDE on [0, 1] with reflection at both boundaries."""
    r = np.asarray(r, float)
    dens = np.zeros_like(grid)
    for centres in (r, -r, 2.0 - r):
        dens += sps.norm.pdf((grid[:, None] - centres[None, :]) / bandwidth).sum(axis=1)
    return dens / (len(r) * bandwidth)


def silverman_bandwidth(r, lo: float, hi: float) -> float:
    r = np.asarray(r, float)
    sd = r.std(ddof=1)
    iqr = np.subtract(*np.percentile(r, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(np.clip(0.9 * spread * len(r) ** -0.2, lo, hi))


def relative_rank_kl(sample_a, reference_b, cfg: RankKdeConfig = RankKdeConfig()) -> float:
    """KL divergence of the relative rank density of ``sample_a`` within
    ``reference_b`` from Uniform[0, 1].

    Zero when the two samples come from the same distribution (up to
    estimation noise); large when the supports separate.  The density is
    discretized on a trapezoid grid, so the result is the KL between two
    probability vectors and is never negative.
    """
    a = np.asarray(sample_a, float)
    b = np.asarray(reference_b, float)
    if len(a) < cfg.min_samples or len(b) < cfg.min_samples:
        raise ValueError(f"both samples need at least {cfg.min_samples} values")
    if np.ptp(b) == 0:
        raise ValueError("reference sample is degenerate (all values equal)")
    r = relative_ranks(a, b)
    grid = np.linspace(0.0, 1.0, cfg.grid_points)
    if np.ptp(r) == 0:
        # every rank identical: density is a spike of the narrowest kernel
        h = cfg.bandwidth_min
    else:
        h = silverman_bandwidth(r, cfg.bandwidth_min, cfg.bandwidth_max)
    f = np.maximum(reflected_kde(r, grid, h), cfg.floor)
    w = np.full(cfg.grid_points, 1.0 / (cfg.grid_points - 1))
    w[[0, -1]] /= 2
    p = w * f
    p /= p.sum()
    return float(np.sum(p * np.log(p / w)))


# -- goodness of fit ----------------------------------------------------------

EDGE_FAMILIES = ("degree", "esp", "geodesic")
SUBGROUP_FAMILIES = ("subgroup_degree", "subgroup_edge_proportion", "subgroup_triad_proportion")
QUANTILES = (0.05, 0.5, 0.95)


@dataclass
class FamilyBand:
    bins: list
    observed: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray

    def coverage(self, occupied_only: bool = True) -> float:
        ok = ~np.isnan(self.observed)
        if occupied_only:
            ok &= self.observed > 0
        if not ok.any():
            return float("nan")
        inside = (self.observed >= self.lower) & (self.observed <= self.upper)
        return float(inside[ok].mean())


@dataclass
class GofReport:
    families: dict[str, FamilyBand]
    n_sim: int
    skipped: list[str] = field(default_factory=list)

    def rows(self):
        for name, band in self.families.items():
            for k, key in enumerate(band.bins):
                yield {
                    "family": name,
                    "bin": int(key),
                    "observed": _num(band.observed[k]),
                    "q05": _num(band.lower[k]),
                    "q50": _num(band.median[k]),
                    "q95": _num(band.upper[k]),
                }

    def to_json(self, path) -> None:
        doc = {"n_sim": self.n_sim, "skipped": self.skipped, "bands": list(self.rows())}
        Path(path).write_text(json.dumps(doc, indent=2))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, ["family", "bin", "observed", "q05", "q50", "q95"])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: "NA" if v is None else v for k, v in row.items()})


def _num(v):
    return None if np.isnan(v) else float(v)


def network_summaries(net: Network, families, group=None) -> dict:
    out = {}
    if "degree" in families:
        out["degree"] = dict(degree_distribution(net))
    if "esp" in families:
        out["esp"] = dict(esp_distribution(net))
    if "geodesic" in families:
        out["geodesic"] = dict(geodesic_distribution(net))
    if group is not None:
        s = subgroup_stats(net, group)
        out["subgroup_degree"] = dict(s.degree)
        out["subgroup_edge_proportion"] = {0: np.nan if s.edge_proportion is None else s.edge_proportion}
        out["subgroup_triad_proportion"] = {0: np.nan if s.triad_proportion is None else s.triad_proportion}
    return out


def _bin_key(k):
    # put the unreachable bucket last
    return (k < 0, k)


def posterior_predictive_gof(
    draws,
    model: ModelSpec,
    net_obs: Network,
    n_sim: int = 200,
    rng: np.random.Generator | None = None,
    sampler: SamplerConfig = SamplerConfig(burn_in=10_000, thin=1, n_samples=1),
    group: Callable | np.ndarray | None = None,
) -> GofReport:
    """Posterior-predictive bands for network summaries.

    For each simulation a parameter vector is drawn from ``draws`` and a
    network is simulated from the observed one for ``sampler.burn_in``
    proposals.  Edge-only families are skipped when the model holds edges
    fixed.  Histogram bins missing from a simulation count as zero; the
    subgroup proportions ignore simulations where they are undefined.
    """
    rng = np.random.default_rng() if rng is None else rng
    draws = np.atleast_2d(np.asarray(draws, float))
    if len(draws) == 0:
        raise ValueError("no posterior draws")
    families = list(EDGE_FAMILIES) if model.edges_stochastic else []
    skipped = [] if model.edges_stochastic else list(EDGE_FAMILIES)
    if group is not None:
        families += list(SUBGROUP_FAMILIES)
    obs = network_summaries(net_obs, families, group)
    cfg = SamplerConfig(sampler.burn_in, 1, 1, sampler.edge_proposal_prob)
    sims = []
    for _ in range(n_sim):
        eta = draws[rng.integers(len(draws))]
        res = mcmc_run(model, eta, net_obs, cfg, rng, keep_networks=True)
        sims.append(network_summaries(res.networks[-1], families, group))
    bands = {}
    for fam in families:
        keys = set(obs[fam])
        for s in sims:
            keys |= set(s[fam])
        keys = sorted(keys, key=_bin_key)
        sim_mat = np.array([[s[fam].get(k, 0.0) for k in keys] for s in sims], dtype=float)
        observed = np.array([obs[fam].get(k, 0.0) for k in keys], dtype=float)
        with warnings.catch_warnings():
            # all-NaN columns (proportion undefined everywhere) give NaN bands
            warnings.simplefilter("ignore", RuntimeWarning)
            q = np.nanquantile(sim_mat, QUANTILES, axis=0).reshape(3, len(keys))
        bands[fam] = FamilyBand(keys, observed, q[0], q[1], q[2])
    return GofReport(bands, n_sim, skipped)


# -- traces -------------------------------------------------------------------

@dataclass
class Trace:
    names: list[str]
    iteration: np.ndarray
    accepted: np.ndarray
    values: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "accepted", *self.names])
            for it, acc, row in zip(self.iteration, self.accepted, self.values):
                w.writerow([int(it), int(acc), *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[:2] != ["iteration", "accepted"]:
            raise ValueError(f"{path}: not a chain file")
        data = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls(header[2:], data[:, 0].astype(int), data[:, 1].astype(bool), data[:, 2:])


def trace_export(chain) -> Trace:
    """Retained draws of a chain with their iteration index, in term order."""
    if len(chain.draws) == 0:
        raise ValueError("chain has no retained draws")
    return Trace(list(chain.names), np.asarray(chain.iterations), np.asarray(chain.accept_flags), np.asarray(chain.draws))
