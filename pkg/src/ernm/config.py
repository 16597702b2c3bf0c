"""Run configuration: nested dataclasses read from YAML.

Unknown keys are rejected at every level.  ``--set section.key=value``
overrides on the command line are applied to the raw mapping before
validation, with values parsed as YAML scalars.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .exchange import ExchangeConfig
from .priors import PriorSpec
from .sampler import SamplerConfig
from .terms import ModelSpec, TermSpec, study_model

#: Table-1 coefficients with the edges term calibrated for mean degree about
#: 3 on 30 nodes.  Order: edges, gwesp, gwdeg, homophily, intercept,
#: treatment, treated neighbours, positive neighbours.
DESK_TRUE_ETA = (-4.05, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1, 0.1)


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    model_class: str = "ernm"
    terms: list | None = None
    decay: float = 0.5
    homophily_variant: str = "sqrt"
    outcome_attr: str = "outcome"
    treatment_attr: str = "treatment"

    def build(self, model_class: str | None = None) -> ModelSpec:
        cls = model_class or self.model_class
        if self.terms is None:
            m = study_model(cls, self.decay, self.homophily_variant)
            if (self.outcome_attr, self.treatment_attr) != ("outcome", "treatment"):
                raise ConfigError("custom attribute names need an explicit term list")
            return m
        terms = [_term(t) for t in self.terms]
        return ModelSpec.for_class(cls, terms, outcome_attr=self.outcome_attr, treatment_attr=self.treatment_attr)


def _term(d: dict) -> TermSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    allowed = {"decay", "attr", "variant"}
    extra = set(d) - allowed
    if kind is None or extra:
        raise ConfigError(f"bad term entry {d!r}: needs 'kind' and only {sorted(allowed)}")
    return TermSpec(kind, float(d.get("decay", 0.0)), d.get("attr"), d.get("variant", "match_count"))


@dataclass
class PriorSection:
    # Boxed by default: with separation in the data (e.g. every treated node
    # positive) a flat prior leaves the posterior improper.
    kind: str = "uniform"
    lower: Any = -10.0
    upper: Any = 10.0
    mean: Any = 0.0
    sd: Any = 1.0

    def build(self) -> PriorSpec:
        if self.kind == "uniform":
            return PriorSpec.uniform(self.lower, self.upper)
        return PriorSpec.gaussian(self.mean, self.sd)


@dataclass
class SamplerSection:
    burn_in: int = 10_000
    thin: int = 100
    n_samples: int = 100
    edge_proposal_prob: float | None = None

    def build(self, seed: int = 0) -> SamplerConfig:
        return SamplerConfig(self.burn_in, self.thin, self.n_samples, self.edge_proposal_prob, seed)


@dataclass
class ExchangeSection:
    alpha: float = 0.25
    n_outer: int = 2000
    adapt_iters: int = 500
    n_chains: int = 8
    thin: int = 1
    init_eta: list | None = None
    oscillation_tol: float = 1.0
    inner: SamplerSection = field(default_factory=lambda: SamplerSection(10_000, 50, 100))

    def build(self, seed: int = 0, threads: int = 1) -> ExchangeConfig:
        return ExchangeConfig(
            alpha=self.alpha,
            n_outer=self.n_outer,
            adapt_iters=self.adapt_iters,
            inner=self.inner.build(seed),
            init_eta=None if self.init_eta is None else tuple(self.init_eta),
            n_chains=self.n_chains,
            seed=seed,
            thin=self.thin,
            oscillation_tol=self.oscillation_tol,
            threads=threads,
        )


@dataclass
class EstimandsSection:
    K: int = 5
    M: int = 100
    sims_per_draw: int = 100
    level: float = 0.95
    burn_in: int = 10_000
    thin: int = 100
    do_mode: bool = False

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.burn_in, self.thin, 1)


@dataclass
class GofSection:
    n_sim: int = 200
    burn_in: int = 10_000
    group_attr: str | None = "outcome"
    group_value: float = 1


@dataclass
class SimulateSection:
    n_nodes: int = 100
    treated_fraction: float = 0.5
    eta: list | None = None
    T: int = 200_000
    node_steps: int = 1
    edge_steps: int = 1


@dataclass
class StudySection:
    n_nodes: int = 30
    n_replications: int = 10
    treated_fraction: float = 0.5
    true_eta: list | None = None
    classes: list = field(default_factory=lambda: ["ernm", "mrf", "ergm_logistic", "logistic"])
    T: int = 200_000
    truth_sims: int = 100_000
    truth_thin: int = 100
    truth_batches: int = 20


@dataclass
class IoSection:
    nodes: str = "nodes.csv"
    edges: str = "edges.csv"
    outcome: str = "outcome"
    treatment: str = "treatment"
    covariates: list | None = None
    chains: str = "chains"


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    model: ModelSection = field(default_factory=ModelSection)
    prior: PriorSection = field(default_factory=PriorSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    exchange: ExchangeSection = field(default_factory=ExchangeSection)
    estimands: EstimandsSection = field(default_factory=EstimandsSection)
    gof: GofSection = field(default_factory=GofSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    study: StudySection = field(default_factory=StudySection)
    io: IoSection = field(default_factory=IoSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def true_eta(self) -> tuple:
        eta = self.study.true_eta if self.study.true_eta is not None else self.simulate.eta
        return tuple(DESK_TRUE_ETA if eta is None else eta)


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def apply_overrides(raw: dict, overrides) -> dict:
    """Set dotted keys, e.g. ``exchange.alpha=0.3``, in a raw config mapping."""
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        node = raw
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {p} is not a section")
        node[parts[-1]] = yaml.safe_load(value)
    return raw


def config_from_dict(raw: dict | None) -> RunConfig:
    return _build(RunConfig, raw or {}, "")


def load_config(path=None, overrides=None) -> RunConfig:
    raw = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    return config_from_dict(apply_overrides(raw, overrides))


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
