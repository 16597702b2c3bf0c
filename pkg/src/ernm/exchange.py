"""Bayesian fitting by the exchange algorithm.

The likelihood exp(eta . g(y)) / c(eta) has an intractable normalizer.  The
exchange algorithm proposes eta' from a Gaussian random walk, simulates an
auxiliary network y' at eta' and accepts with probability

    min(1, exp[(eta' - eta) . (g_obs - g(y'))] * prior(eta') / prior(eta)),

in which c(eta) and c(eta') cancel.  The proposal covariance is
alpha * Cov_eta[g]^{-1}, the inverse Fisher information estimated from the
inner simulations.  It is re-estimated for ``adapt_iters`` iterations and
then frozen; only frozen-phase draws are retained, so the retained chain is
a plain symmetric random-walk Metropolis chain.

The logistic class has a closed-form likelihood and is sampled by direct
Metropolis with the same proposal scheme.  Separable models are fitted as
an ERGM exchange chain and an independent logistic chain.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .network import Network
from .priors import PriorSpec, in_support, log_prior, prior_precision
from .sampler import ChainState, SamplerConfig, edge_probability
from .terms import ModelSpec, eval_statistics, node_design

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    pass


class AdaptationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExchangeConfig:
    """Settings for one or more exchange chains.

    ``inner`` controls the auxiliary simulations: every inner run makes
    ``inner.burn_in`` proposals from the observed network.  During
    adaptation a further ``inner.thin * inner.n_samples`` proposals supply
    the statistic sample for the Fisher estimate.
    """

    alpha: float = 0.25
    n_outer: int = 2000
    adapt_iters: int = 500
    inner: SamplerConfig = SamplerConfig(burn_in=10_000, thin=50, n_samples=100)
    init_eta: tuple | None = None
    n_chains: int = 8
    seed: int = 0
    thin: int = 1
    oscillation_tol: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.n_outer < 1 or self.n_chains < 1 or self.thin < 1:
            raise ValueError("n_outer, n_chains and thin must be >= 1")
        if not 0 <= self.adapt_iters < self.n_outer:
            raise ValueError("adapt_iters must satisfy 0 <= adapt_iters < n_outer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init_eta"] = None if self.init_eta is None else list(self.init_eta)
        return d


@dataclass
class Chain:
    """Retained (frozen-phase) draws of one chain.

    ``metadata`` carries what is needed to resume: the generator state,
    the current eta and the iteration count.
    """

    names: list[str]
    draws: np.ndarray
    accept_flags: np.ndarray
    iterations: np.ndarray
    proposal_cov: np.ndarray
    inner_stat_samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept_flags)) if len(self.accept_flags) else 0.0

    def posterior_mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)


# -- proposal covariance ------------------------------------------------------

def estimate_fisher_cov(stat_samples, names=None) -> np.ndarray:
    """Sample covariance of g with a small ridge so it can be inverted.

    The ridge is ``1e-8 * trace / p`` (``1e-8`` when every coordinate is
    constant).  Constant coordinates are reported by name in a warning.
    """
    x = np.asarray(stat_samples, float)
    if x.ndim != 2:
        raise ValueError("stat_samples must be a 2-d array")
    n, p = x.shape
    if n < p + 1:
        raise ValueError(f"need at least p + 1 = {p + 1} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite statistic samples")
    c = np.atleast_2d(np.cov(x, rowvar=False))
    const = np.flatnonzero(np.diag(c) <= 0)
    if len(const):
        which = [names[k] if names else str(k) for k in const]
        warnings.warn(f"no variation in simulated statistics: {', '.join(which)}", AdaptationWarning, stacklevel=2)
    tr = np.trace(c)
    ridge = 1e-8 * tr / p if tr > 0 else 1e-8
    c = (c + c.T) / 2 + ridge * np.eye(p)
    if np.any(np.diag(c) <= 0):
        raise ValueError("zero-variance coordinate after jitter")
    return c


def proposal_cov(fisher, alpha: float) -> np.ndarray:
    """Sigma = alpha * fisher^{-1}."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    f = np.atleast_2d(np.asarray(fisher, float))
    try:
        np.linalg.cholesky(f)
        inv = np.linalg.inv(f)
    except np.linalg.LinAlgError:
        raise FitError("Fisher information is singular after jitter") from None
    return alpha * (inv + inv.T) / 2


def exchange_log_ratio(eta, eta_prop, g_obs, g_prop, prior: PriorSpec) -> float:
    """Log acceptance ratio of the exchange move eta -> eta_prop.

    ``g_prop`` is the statistic of the auxiliary network simulated at
    ``eta_prop``.  No normalizing constant appears.
    """
    eta = np.asarray(eta, float)
    eta_prop = np.asarray(eta_prop, float)
    diff = np.asarray(g_obs, float) - np.asarray(g_prop, float)
    return float((eta_prop - eta) @ diff + log_prior(prior, eta_prop) - log_prior(prior, eta))


# -- inner simulation ---------------------------------------------------------

class InnerSimulator:
    """Simulates auxiliary networks, always restarting from the observed one."""

    def __init__(self, model: ModelSpec, net_obs: Network, edge_proposal_prob=None):
        self.model = model
        self.state = ChainState(model, net_obs)
        self.start = self.state.snapshot()
        self.p_edge = edge_probability(model, net_obs.n, edge_proposal_prob)

    def simulate(self, eta, burn_in: int, rng, thin: int = 1, n_samples: int = 1) -> np.ndarray:
        self.state.restore(self.start)
        stats, _, _ = self.state.sample(eta, burn_in, thin, n_samples, self.p_edge, rng)
        return stats


@dataclass
class StepResult:
    eta: np.ndarray
    accepted: bool
    g_prop: np.ndarray | None
    out_of_support: bool = False


def exchange_step(eta, sigma, g_obs, sim: InnerSimulator, prior: PriorSpec, inner: SamplerConfig, rng,
                  fisher_samples: bool = False) -> tuple[StepResult, np.ndarray | None]:
    """One exchange update.

    Returns the step result and, when ``fisher_samples`` is set, the
    statistic sample simulated at the proposed eta (its last row is y').
    """
    eta = np.asarray(eta, float)
    prop = rng.multivariate_normal(eta, sigma, method="cholesky")
    if not in_support(prior, prop):
        return StepResult(eta, False, None, out_of_support=True), None
    if fisher_samples:
        stats = sim.simulate(prop, inner.burn_in, rng, inner.thin, inner.n_samples)
    else:
        stats = sim.simulate(prop, inner.burn_in, rng)
    g_prop = stats[-1]
    logr = exchange_log_ratio(eta, prop, g_obs, g_prop, prior)
    if logr >= 0 or rng.random() < np.exp(logr):
        return StepResult(prop, True, g_prop), stats
    return StepResult(eta, False, g_prop), stats


# -- chains -------------------------------------------------------------------

def initial_eta(model: ModelSpec, net_obs: Network) -> np.ndarray:
    """Zeros, except the edges coefficient at the logit of observed density."""
    eta = np.zeros(model.p)
    k = model.index("edges")
    if k is not None:
        dens = np.clip(net_obs.n_edges / max(net_obs.n_dyads, 1), 0.5 / max(net_obs.n_dyads, 1), 1 - 1e-6)
        eta[k] = np.log(dens / (1 - dens))
    return eta


class _Runner:
    """Shared adapt-then-freeze Metropolis loop.

    Subclasses provide ``step``, ``fisher`` and ``refresh``.
    """

    def __init__(self, model, prior, cfg: ExchangeConfig):
        self.model, self.prior, self.cfg = model, prior, cfg
        self.prior_info = np.diag(prior_precision(prior, model.p))

    def sigma(self, fisher) -> np.ndarray:
        # adding the prior precision keeps the proposal inside the prior's
        # scale when the data carry no information about a direction
        return proposal_cov(fisher + self.prior_info, self.cfg.alpha)

    def run(self, eta0, rng, resume: Chain | None = None) -> Chain:
        cfg = self.cfg
        p = self.model.p
        n_support_reject = 0
        if resume is None:
            eta = np.asarray(eta0, float)
            fisher, samples = self.fisher(eta, rng)
            sigma = self.sigma(fisher)
            logdets = []
            n_acc = 0
            for it in range(cfg.adapt_iters):
                step, samples_new = self.step(eta, sigma, rng, adapt=True)
                n_support_reject += step.out_of_support
                if step.accepted:
                    n_acc += 1
                    eta = step.eta
                    fisher, samples = self.refresh(eta, samples_new)
                    sigma = self.sigma(fisher)
                logdets.append(np.linalg.slogdet(sigma)[1])
            if cfg.adapt_iters and n_acc == 0:
                raise FitError(
                    f"no proposal accepted in {cfg.adapt_iters} adaptation iterations; "
                    "lower alpha or start closer to the posterior"
                )
            self._check_oscillation(logdets, p)
            start_iter, draws, flags, iters = cfg.adapt_iters, [], [], []
        else:
            rng.bit_generator.state = resume.metadata["rng_state"]
            eta = np.asarray(resume.metadata["eta"], float)
            sigma = resume.proposal_cov
            samples = resume.inner_stat_samples
            start_iter = int(resume.metadata["iteration"])
            n_support_reject = int(resume.metadata.get("support_rejections", 0))
            draws, flags, iters = list(resume.draws), list(resume.accept_flags), list(resume.iterations)
        n_frozen = cfg.n_outer - cfg.adapt_iters if resume is None else cfg.n_outer
        for k in range(n_frozen):
            step, _ = self.step(eta, sigma, rng, adapt=False)
            n_support_reject += step.out_of_support
            eta = step.eta
            it = start_iter + k
            if (it - cfg.adapt_iters) % cfg.thin == 0:
                draws.append(eta.copy())
                flags.append(step.accepted)
                iters.append(it)
        meta = {
            "rng_state": rng.bit_generator.state,
            "eta": eta.tolist(),
            "iteration": start_iter + n_frozen,
            "support_rejections": n_support_reject,
            "model_class": self.model.model_class,
        }
        return Chain(
            self.model.names,
            np.array(draws).reshape(len(draws), p),
            np.array(flags, dtype=bool),
            np.array(iters, dtype=np.int64),
            sigma,
            np.asarray(samples),
            meta,
        )

    def _check_oscillation(self, logdets, p):
        if len(logdets) < 4:
            return
        tail = np.asarray(logdets[len(logdets) // 2:])
        spread = np.subtract(*np.percentile(tail, [75, 25])) / p
        if spread > self.cfg.oscillation_tol:
            warnings.warn(
                f"proposal covariance still moving at the end of adaptation "
                f"(log-det interquartile range {spread:.2f} per coordinate); freezing anyway",
                AdaptationWarning,
                stacklevel=3,
            )


class ExchangeRunner(_Runner):
    def __init__(self, model, prior, cfg, net_obs: Network):
        super().__init__(model, prior, cfg)
        self.sim = InnerSimulator(model, net_obs, cfg.inner.edge_proposal_prob)
        self.g_obs = eval_statistics(net_obs, model)

    def fisher(self, eta, rng):
        inner = self.cfg.inner
        samples = self.sim.simulate(eta, inner.burn_in, rng, inner.thin, inner.n_samples)
        return estimate_fisher_cov(samples, self.model.names), samples

    def refresh(self, eta, samples):
        return estimate_fisher_cov(samples, self.model.names), samples

    def step(self, eta, sigma, rng, adapt):
        return exchange_step(eta, sigma, self.g_obs, self.sim, self.prior, self.cfg.inner, rng, fisher_samples=adapt)


class LogisticRunner(_Runner):
    """Direct Metropolis on the Bernoulli likelihood with frozen neighbour
    counts; the Fisher information is X' W X at the current eta."""

    def __init__(self, model, prior, cfg, net_obs: Network):
        super().__init__(model, prior, cfg)
        self.x = node_design(net_obs, model)
        self.y = net_obs.outcomes.astype(float)

    def loglik(self, eta) -> float:
        xb = self.x @ eta
        return float(self.y @ xb - np.logaddexp(0.0, xb).sum())

    def fisher(self, eta, rng=None):
        prob = 1.0 / (1.0 + np.exp(-(self.x @ eta)))
        info = (self.x * (prob * (1 - prob))[:, None]).T @ self.x
        tr = np.trace(info)
        info += (1e-8 * tr / len(info) if tr > 0 else 1e-8) * np.eye(len(info))
        return info, np.zeros((0, self.model.p))

    def refresh(self, eta, samples):
        return self.fisher(eta)

    def step(self, eta, sigma, rng, adapt):
        prop = rng.multivariate_normal(eta, sigma, method="cholesky")
        if not in_support(self.prior, prop):
            return StepResult(eta, False, None, out_of_support=True), None
        logr = self.loglik(prop) - self.loglik(eta) + log_prior(self.prior, prop) - log_prior(self.prior, eta)
        if logr >= 0 or rng.random() < np.exp(logr):
            return StepResult(prop, True, None), None
        return StepResult(eta, False, None), None


def _sub_prior(prior: PriorSpec, idx) -> PriorSpec:
    def pick(v):
        return v if v is None or np.isscalar(v) else tuple(np.asarray(v)[idx])

    return replace(prior, lower=pick(prior.lower), upper=pick(prior.upper), mean=pick(prior.mean), sd=pick(prior.sd))


def fit_chain(
    net_obs: Network,
    model: ModelSpec,
    prior: PriorSpec,
    cfg: ExchangeConfig,
    rng: np.random.Generator,
    resume: Chain | None = None,
) -> Chain:
    """Fit one chain; see :func:`fit_posterior`."""
    eta0 = initial_eta(model, net_obs) if cfg.init_eta is None else np.asarray(cfg.init_eta, float)
    if eta0.shape != (model.p,):
        raise ValueError(f"init_eta has {eta0.size} entries, model has {model.p} terms")
    if resume is None and not in_support(prior, eta0):
        raise FitError("initial eta lies outside the prior support; set exchange.init_eta")
    if model.separable:
        return _fit_separable(net_obs, model, prior, cfg, rng, eta0, resume)
    if model.model_class == "logistic":
        runner = LogisticRunner(model, prior, cfg, net_obs)
    else:
        runner = ExchangeRunner(model, prior, cfg, net_obs)
    return runner.run(eta0, rng, resume)


def _fit_separable(net_obs, model, prior, cfg, rng, eta0, resume):
    (e_idx, ergm), (n_idx, logit) = model.blocks()
    parts = []
    for b, (idx, sub) in enumerate(((e_idx, ergm), (n_idx, logit))):
        sub_resume = None
        if resume is not None:
            m = resume.metadata["blocks"][b]
            sub_resume = Chain(
                sub.names, resume.draws[:, idx], np.asarray(m["accept_flags"], bool), resume.iterations,
                np.asarray(m["proposal_cov"]), np.asarray(m["inner_stat_samples"]), m["metadata"],
            )
        runner_cls = ExchangeRunner if sub.model_class == "ergm" else LogisticRunner
        runner = runner_cls(sub, _sub_prior(prior, idx), cfg, net_obs)
        parts.append(runner.run(eta0[idx], rng, sub_resume))
    ergm_chain, logit_chain = parts
    draws = np.empty((len(ergm_chain.draws), model.p))
    draws[:, e_idx] = ergm_chain.draws
    draws[:, n_idx] = logit_chain.draws
    sigma = np.zeros((model.p, model.p))
    sigma[np.ix_(e_idx, e_idx)] = ergm_chain.proposal_cov
    sigma[np.ix_(n_idx, n_idx)] = logit_chain.proposal_cov
    blocks = [
        {
            "accept_flags": c.accept_flags.tolist(),
            "proposal_cov": c.proposal_cov.tolist(),
            "inner_stat_samples": c.inner_stat_samples.tolist(),
            "metadata": c.metadata,
        }
        for c in parts
    ]
    meta = {
        "model_class": model.model_class,
        "eta": np.concatenate([ergm_chain.metadata["eta"], logit_chain.metadata["eta"]]).tolist(),
        "iteration": ergm_chain.metadata["iteration"],
        "support_rejections": ergm_chain.metadata["support_rejections"] + logit_chain.metadata["support_rejections"],
        "blocks": blocks,
    }
    return Chain(model.names, draws, ergm_chain.accept_flags | logit_chain.accept_flags, ergm_chain.iterations,
                 sigma, ergm_chain.inner_stat_samples, meta)


def chain_generators(seed: int, n_chains: int) -> list[np.random.Generator]:
    """Independent PCG64 streams, one per chain, spawned from ``seed``."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n_chains)]


def fit_posterior(
    net_obs: Network,
    model: ModelSpec,
    prior: PriorSpec = PriorSpec(),
    cfg: ExchangeConfig = ExchangeConfig(),
    resume: list[Chain] | None = None,
) -> list[Chain]:
    """Fit ``cfg.n_chains`` independent chains.

    Chains run on up to ``cfg.threads`` threads; the compiled sampler
    releases the GIL.  With ``resume`` each chain continues from its saved
    state for ``cfg.n_outer`` further frozen-phase iterations.
    """
    if resume is not None and len(resume) != cfg.n_chains:
        raise ValueError(f"resume has {len(resume)} chains, config asks for {cfg.n_chains}")
    rngs = chain_generators(cfg.seed, cfg.n_chains)
    jobs = [(rngs[c], None if resume is None else resume[c]) for c in range(cfg.n_chains)]

    def one(job):
        rng, res = job
        return fit_chain(net_obs, model, prior, cfg, rng, res)

    if cfg.threads > 1 and cfg.n_chains > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def pooled_draws(chains: list[Chain]) -> np.ndarray:
    return np.concatenate([c.draws for c in chains], axis=0)
