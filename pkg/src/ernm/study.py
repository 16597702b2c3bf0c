"""Simulation study: simulate from a true ERNM, fit every model class,
compare causal-estimand posteriors with coverage and relative-rank KL.

Each replication simulates one network with the temporal simulator, fits
each configured class, and fits the ERNM a second time with an independent
seed.  That second ERNM posterior is the reference ("ground truth")
posterior every class is compared against, so the ERNM row of the KL table
measures Monte Carlo noise rather than being zero by construction.
Results are written per replication; :func:`aggregate` is a pure fold over
them and :func:`load_study` re-aggregates from disk.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .diagnostics import relative_rank_kl
from .estimands import (
    Estimate,
    EstimandReport,
    PotentialOutcomeDraws,
    estimand_report,
    impute_missing_outcomes,
)
from .exchange import fit_posterior, pooled_draws
from .network import Network, write_network
from .sampler import ChainState, dag_simulate, edge_probability

log = logging.getLogger(__name__)

REFERENCE = "reference"


def assign_treatment(n: int, fraction: float, rng) -> np.ndarray:
    """Exactly floor(fraction * n) treated nodes, chosen uniformly."""
    if not 0 <= fraction <= 1:
        raise ValueError("treated_fraction must lie in [0, 1]")
    z = np.zeros(n, dtype=np.int64)
    z[rng.permutation(n)[: int(math.floor(fraction * n))]] = 1
    return z


@dataclass
class TrueEffects:
    values: dict[str, float]
    mc_error: dict[str, float]


def true_effects(cfg: RunConfig, rng) -> TrueEffects:
    """Estimands at the true eta from one long simulation.

    The retained networks are split into ``truth_batches`` batches; each
    batch is treated as one draw, and the batch spread gives the Monte
    Carlo error.
    """
    st = cfg.study
    model = cfg.model.build("ernm")
    eta = np.asarray(cfg.true_eta(), float)
    z = assign_treatment(st.n_nodes, st.treated_fraction, rng)
    state = ChainState(model, Network(st.n_nodes, treatment=z))
    p_edge = edge_probability(model, st.n_nodes)
    ys, ts, os_ = state.configurations(eta, cfg.estimands.burn_in, st.truth_thin, st.truth_sims, p_edge, rng)
    B = st.truth_batches
    S = st.truth_sims // B
    shape = (B, S, st.n_nodes)
    draws = PotentialOutcomeDraws(
        np.repeat(eta[None], B, axis=0), z,
        ys[: B * S].reshape(shape), ts[: B * S].reshape(shape), os_[: B * S].reshape(shape), "ernm",
    )
    rep = estimand_report(draws, cfg.estimands.K)
    values, errors = {}, {}
    for e in rep.estimates:
        s = e.samples
        values[e.name] = float(s.mean()) if len(s) else float("nan")
        errors[e.name] = float(s.std(ddof=1) / np.sqrt(len(s))) if len(s) > 1 else float("nan")
    return TrueEffects(values, errors)


@dataclass
class ClassResult:
    report: EstimandReport | None
    acceptance_rate: float | None = None
    error: str | None = None
    seconds: float = 0.0


@dataclass
class Replication:
    index: int
    results: dict[str, ClassResult]
    kl: dict[str, dict[str, float | None]] = field(default_factory=dict)
    coverage: dict[str, dict[str, bool | None]] = field(default_factory=dict)
    max_treated_neighbors: int = 0


def _fit_and_estimate(net, model_class, cfg: RunConfig, seed: int) -> ClassResult:
    t0 = time.perf_counter()
    model = cfg.model.build(model_class)
    ex = cfg.exchange.build(seed, cfg.threads)
    chains = fit_posterior(net, model, cfg.prior.build(), ex)
    rng = np.random.default_rng(seed + 1)
    draws = impute_missing_outcomes(
        pooled_draws(chains), model, net, cfg.estimands.M, cfg.estimands.sims_per_draw, rng,
        cfg.estimands.sampler(),
    )
    rep = estimand_report(draws, cfg.estimands.K, cfg.estimands.level)
    acc = float(np.mean([c.acceptance_rate for c in chains]))
    return ClassResult(rep, acc, None, time.perf_counter() - t0)


def _kl_or_none(a: Estimate, b: Estimate) -> float | None:
    try:
        return relative_rank_kl(a.samples, b.samples)
    except ValueError:
        return None


def run_replication(index: int, cfg: RunConfig, truth: TrueEffects, seed_seq) -> Replication:
    st = cfg.study
    seeds = seed_seq.generate_state(len(st.classes) + 2)
    rng = np.random.default_rng(seeds[0])
    z = assign_treatment(st.n_nodes, st.treated_fraction, rng)
    net = dag_simulate(cfg.model.build("ernm"), cfg.true_eta(), z, st.T, rng)
    results = {}
    for k, cls in enumerate([REFERENCE, *st.classes]):
        try:
            results[cls] = _fit_and_estimate(net, "ernm" if cls == REFERENCE else cls, cfg, int(seeds[k + 1]))
        except Exception as exc:  # one failed fit must not stop the study
            log.warning("replication %d, %s: %s", index, cls, exc)
            results[cls] = ClassResult(None, error=f"{type(exc).__name__}: {exc}")
    a = net.adjacency_matrix()
    rep = Replication(index, results, max_treated_neighbors=int((a @ net.treatment).max(initial=0)))
    ref = results[REFERENCE].report
    for cls in st.classes:
        r = results[cls].report
        rep.kl[cls] = {}
        rep.coverage[cls] = {}
        if r is None:
            continue
        for e in r.estimates:
            rep.kl[cls][e.name] = None if ref is None else _kl_or_none(e, ref[e.name])
            tv = truth.values.get(e.name, float("nan"))
            lo, hi = e.interval(r.level)
            rep.coverage[cls][e.name] = None if (np.isnan(lo) or np.isnan(tv)) else bool(lo <= tv <= hi)
    rep.network = net
    return rep


# -- persistence --------------------------------------------------------------

def write_replication(rep: Replication, outdir) -> Path:
    d = Path(outdir) / f"rep_{rep.index:03d}"
    d.mkdir(parents=True, exist_ok=True)
    if getattr(rep, "network", None) is not None:
        write_network(rep.network, d / "nodes.csv", d / "edges.csv")
    summary = {"index": rep.index, "kl": rep.kl, "coverage": rep.coverage,
               "max_treated_neighbors": rep.max_treated_neighbors, "classes": {}}
    for cls, res in rep.results.items():
        summary["classes"][cls] = {"acceptance_rate": res.acceptance_rate, "error": res.error,
                                   "seconds": res.seconds}
        if res.report is not None:
            res.report.to_json(d / f"{cls}_estimands.json")
    (d / "summary.json").write_text(json.dumps(summary, indent=2))
    return d


def read_replication(d) -> Replication:
    d = Path(d)
    s = json.loads((d / "summary.json").read_text())
    results = {}
    for cls, info in s["classes"].items():
        path = d / f"{cls}_estimands.json"
        report = EstimandReport.from_json(path) if path.exists() else None
        results[cls] = ClassResult(report, info["acceptance_rate"], info["error"], info["seconds"])
    return Replication(s["index"], results, s["kl"], s["coverage"], s["max_treated_neighbors"])


# -- aggregation --------------------------------------------------------------

@dataclass
class StudyResult:
    truth: TrueEffects
    replications: list[Replication]
    estimands: list[str]
    classes: list[str]
    mean_posterior_mean: dict = field(default_factory=dict)
    coverage_rate: dict = field(default_factory=dict)
    mean_kl: dict = field(default_factory=dict)

    def tables(self) -> dict:
        return {
            "truth": self.truth.values,
            "truth_mc_error": self.truth.mc_error,
            "mean_posterior_mean": self.mean_posterior_mean,
            "coverage": self.coverage_rate,
            "mean_kl": self.mean_kl,
        }


def _mean(xs) -> float | None:
    xs = [x for x in xs if x is not None and not (isinstance(x, float) and math.isnan(x))]
    return math.fsum(xs) / len(xs) if xs else None


def aggregate(truth: TrueEffects, reps: list[Replication], classes: list[str]) -> StudyResult:
    names = list(truth.values)
    out = StudyResult(truth, reps, names, list(classes))
    for cls in classes:
        out.mean_posterior_mean[cls] = {}
        out.coverage_rate[cls] = {}
        out.mean_kl[cls] = {}
        for name in names:
            means = []
            for r in reps:
                res = r.results.get(cls)
                if res is not None and res.report is not None:
                    e = res.report[name]
                    means.append(None if e.missing else e.mean())
            out.mean_posterior_mean[cls][name] = _mean(means)
            cov = [r.coverage.get(cls, {}).get(name) for r in reps]
            cov = [float(c) for c in cov if c is not None]
            out.coverage_rate[cls][name] = _mean(cov)
            out.mean_kl[cls][name] = _mean([r.kl.get(cls, {}).get(name) for r in reps])
    return out


def _cell(v) -> str:
    return "NA" if v is None else f"{v:.4g}"


def write_tables(result: StudyResult, outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "study.json").write_text(json.dumps(result.tables(), indent=2))
    with open(out / "coverage.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimand", "true", "true_mc_error", *(f"{c}_mean" for c in result.classes),
                    *(f"{c}_coverage" for c in result.classes)])
        for name in result.estimands:
            w.writerow([name, _cell(result.truth.values[name]), _cell(result.truth.mc_error[name]),
                        *(_cell(result.mean_posterior_mean[c][name]) for c in result.classes),
                        *(_cell(result.coverage_rate[c][name]) for c in result.classes)])
    with open(out / "kl.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimand", *result.classes])
        for name in result.estimands:
            w.writerow([name, *(_cell(result.mean_kl[c][name]) for c in result.classes)])
    with open(out / "kl_per_replication.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "class", "estimand", "kl"])
        for r in result.replications:
            for c in result.classes:
                for name in result.estimands:
                    w.writerow([r.index, c, name, _cell(r.kl.get(c, {}).get(name))])


def run_study(cfg: RunConfig, outdir=None) -> StudyResult:
    st = cfg.study
    threads = cfg.threads
    root = np.random.SeedSequence(cfg.seed)
    truth_seq, *rep_seqs = root.spawn(st.n_replications + 1)
    truth = true_effects(cfg, np.random.default_rng(truth_seq))
    if outdir is not None:
        Path(outdir).mkdir(parents=True, exist_ok=True)
        (Path(outdir) / "truth.json").write_text(json.dumps({"values": truth.values, "mc_error": truth.mc_error}, indent=2))

    def one(job):
        r, seq = job
        t0 = time.perf_counter()
        rep = run_replication(r, cfg, truth, seq)
        log.info("replication %d done in %.1fs", r, time.perf_counter() - t0)
        if outdir is not None:
            write_replication(rep, outdir)
        return rep

    jobs = list(enumerate(rep_seqs))
    if threads > 1:
        # replications run side by side; chains inside each fit run serially
        cfg = dataclasses.replace(cfg, threads=1)
        with ThreadPoolExecutor(threads) as pool:
            reps = list(pool.map(one, jobs))
    else:
        reps = [one(j) for j in jobs]
    result = aggregate(truth, reps, st.classes)
    if outdir is not None:
        write_tables(result, outdir)
    return result


def load_study(outdir, classes) -> StudyResult:
    out = Path(outdir)
    t = json.loads((out / "truth.json").read_text())
    truth = TrueEffects(t["values"], t["mc_error"])
    reps = [read_replication(d) for d in sorted(out.glob("rep_*"))]
    return aggregate(truth, reps, classes)
