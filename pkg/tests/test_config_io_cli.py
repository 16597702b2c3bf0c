import csv
import json
import warnings

import numpy as np
import pytest

from ernm.cli import main
from ernm.config import ConfigError, apply_overrides, config_from_dict, dump_config, load_config
from ernm.exchange import AdaptationWarning, ExchangeConfig, fit_posterior
from ernm.io import provenance, read_chain, read_chains, write_chain
from ernm.network import Network, read_network
from ernm.priors import PriorSpec
from ernm.sampler import SamplerConfig
from ernm.study import assign_treatment, load_study, run_study
from ernm.terms import ModelSpec, TermSpec

TINY_FIT = [
    "--set", "exchange.n_chains=2", "--set", "exchange.n_outer=60", "--set", "exchange.adapt_iters=20",
    "--set", "exchange.inner.burn_in=300", "--set", "exchange.inner.n_samples=40", "--set", "exchange.inner.thin=5",
]


# -- config -------------------------------------------------------------------

def test_defaults():
    cfg = config_from_dict({})
    assert cfg.exchange.n_chains == 8
    assert cfg.estimands.level == 0.95
    assert cfg.gof.n_sim == 200
    assert cfg.study.treated_fraction == 0.5
    assert cfg.model.build().p == 8


@pytest.mark.parametrize("raw", [{"bogus": 1}, {"exchange": {"alpha": 0.2, "nope": 1}}, {"exchange": {"inner": {"x": 1}}}])
def test_unknown_keys_rejected(raw):
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict(raw)


def test_overrides_nested_and_typed():
    raw = apply_overrides({}, ["exchange.inner.burn_in=500", "prior.lower=-3", "study.classes=[ernm, mrf]"])
    cfg = config_from_dict(raw)
    assert cfg.exchange.inner.burn_in == 500
    assert cfg.prior.lower == -3
    assert cfg.study.classes == ["ernm", "mrf"]
    with pytest.raises(ConfigError):
        apply_overrides({}, ["no_equals_sign"])


def test_yaml_roundtrip(tmp_path):
    cfg = config_from_dict({"seed": 7, "exchange": {"alpha": 0.3}})
    dump_config(cfg, tmp_path / "c.yaml")
    again = load_config(tmp_path / "c.yaml")
    assert again == cfg
    assert load_config(tmp_path / "c.yaml", ["seed=8"]).seed == 8


def test_custom_terms():
    cfg = config_from_dict({"model": {"model_class": "ergm", "terms": [{"kind": "edges"}, {"kind": "gwesp", "decay": 0.3}]}})
    m = cfg.model.build()
    assert m.names == ["edges", "gwesp.0.3"]
    with pytest.raises(ConfigError):
        config_from_dict({"model": {"terms": [{"kind": "edges", "colour": "red"}]}}).model.build()


def test_exchange_section_builds():
    ex = config_from_dict({"exchange": {"init_eta": [0.1, 0.2]}}).exchange.build(seed=3, threads=2)
    assert isinstance(ex, ExchangeConfig)
    assert ex.init_eta == (0.1, 0.2) and ex.seed == 3 and ex.threads == 2


# -- chain files --------------------------------------------------------------

def small_chains(n_chains=2):
    m = ModelSpec.for_class("ergm", [TermSpec.edges()])
    cfg = ExchangeConfig(n_outer=50, adapt_iters=10, n_chains=n_chains, inner=SamplerConfig(100, 5, 30))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdaptationWarning)
        return fit_posterior(Network(4, [(0, 1)]), m, PriorSpec.uniform(-6, 6), cfg)


def test_chain_roundtrip(tmp_path):
    c = small_chains(1)[0]
    csv_path, _ = write_chain(c, tmp_path, 0)
    back = read_chain(csv_path)
    assert back.names == c.names
    assert np.array_equal(back.draws, c.draws)
    assert np.array_equal(back.proposal_cov, c.proposal_cov)
    assert back.metadata["rng_state"] == c.metadata["rng_state"]
    with open(csv_path) as fh:
        assert next(csv.reader(fh)) == ["iteration", "accepted", "edges"]


def test_read_chains_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_chains(tmp_path)
    c = small_chains(1)[0]
    _, json_path = write_chain(c, tmp_path, 0)
    doc = json.loads(json_path.read_text())
    doc["names"] = ["other"]
    json_path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="do not match"):
        read_chains(tmp_path)


def test_provenance_fields():
    p = provenance({"seed": 1}, command="fit")
    assert set(p["versions"]) >= {"python", "numpy", "scipy", "numba"}
    assert p["config"] == {"seed": 1} and p["command"] == "fit"


# -- command line -------------------------------------------------------------

def run(args, tmp_path, name):
    out = tmp_path / name
    assert main([*args, "--out", str(out)]) == 0
    return out


def test_simulate_treated_count_and_reproducible(tmp_path):
    base = ["simulate", "--seed", "5", "--set", "simulate.n_nodes=100", "--set", "simulate.T=3000"]
    a = run(base, tmp_path, "a")
    b = run(base, tmp_path, "b")
    net = read_network(a / "nodes.csv", a / "edges.csv")
    assert net.treatment.sum() == 50
    for f in ("nodes.csv", "edges.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    prov = json.loads((a / "provenance.json").read_text())
    assert prov["config"]["seed"] == 5


def test_simulate_no_treated(tmp_path):
    out = run(["simulate", "--set", "simulate.n_nodes=20", "--set", "simulate.treated_fraction=0",
               "--set", "simulate.T=100"], tmp_path, "s")
    assert read_network(out / "nodes.csv", out / "edges.csv").treatment.sum() == 0


def test_fit_estimate_gof_diag_pipeline(tmp_path):
    sim = run(["simulate", "--seed", "2", "--set", "simulate.n_nodes=20", "--set", "simulate.T=5000"], tmp_path, "sim")
    io = ["--nodes", str(sim / "nodes.csv"), "--edges", str(sim / "edges.csv")]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdaptationWarning)
        fit = run(["fit", *io, *TINY_FIT], tmp_path, "fit")
    assert sorted(p.name for p in fit.glob("chain_*.csv")) == ["chain_00.csv", "chain_01.csv"]
    est = run(["estimate", *io, "--chains", str(fit), "--set", "estimands.M=5", "--set", "estimands.sims_per_draw=5",
               "--set", "estimands.burn_in=200", "--set", "estimands.thin=10"], tmp_path, "est")
    rows = list(csv.DictReader(open(est / "estimands.csv")))
    assert rows[0]["estimand"] == "main" and len(rows) == 11
    gof = run(["gof", *io, "--chains", str(fit), "--set", "gof.n_sim=5", "--set", "gof.burn_in=200"], tmp_path, "gof")
    assert (gof / "gof.csv").exists() and (gof / "provenance.json").exists()
    diag = run(["diag", str(fit)], tmp_path, "diag")
    assert (diag / "gelman_rubin.csv").read_text().startswith("draws,edges")


def test_fit_resume_deterministic(tmp_path):
    sim = run(["simulate", "--set", "simulate.n_nodes=10", "--set", "simulate.T=500"], tmp_path, "sim")
    io = ["--nodes", str(sim / "nodes.csv"), "--edges", str(sim / "edges.csv")]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdaptationWarning)
        fit = run(["fit", *io, *TINY_FIT], tmp_path, "fit")
        a = run(["fit", *io, *TINY_FIT, "--resume", str(fit)], tmp_path, "a")
        b = run(["fit", *io, *TINY_FIT, "--resume", str(fit)], tmp_path, "b")
    assert (a / "chain_00.csv").read_bytes() == (b / "chain_00.csv").read_bytes()
    assert len(read_chain(a / "chain_00.csv").draws) == 40 + 60


def test_logistic_fit_warns_about_edge_terms(tmp_path):
    sim = run(["simulate", "--set", "simulate.n_nodes=10", "--set", "simulate.T=500"], tmp_path, "sim")
    io = ["--nodes", str(sim / "nodes.csv"), "--edges", str(sim / "edges.csv")]
    terms = "model.terms=[{kind: edges}, {kind: intercept}, {kind: neighbor_count, attr: treatment}]"
    with pytest.warns(UserWarning, match="ignores term 'edges'"):
        run(["fit", *io, *TINY_FIT, "--set", "model.model_class=logistic", "--set", terms], tmp_path, "fit")


def test_cli_errors(tmp_path, capsys):
    assert main(["fit", "--nodes", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--set", "bogus.key=1", "--out", str(tmp_path / "o")]) == 2
    c = small_chains(1)[0]
    write_chain(c, tmp_path / "one", 0)
    assert main(["diag", str(tmp_path / "one"), "--out", str(tmp_path / "o")]) == 2
    assert "at least 2 chains" in capsys.readouterr().err


# -- study --------------------------------------------------------------------

def test_assign_treatment(rng):
    assert assign_treatment(100, 0.5, rng).sum() == 50
    assert assign_treatment(7, 0.5, rng).sum() == 3
    with pytest.raises(ValueError):
        assign_treatment(5, 1.5, rng)


TINY_STUDY = {
    "seed": 4,
    "exchange": {"alpha": 0.1, "n_chains": 1, "n_outer": 250, "adapt_iters": 150, "inner": {"burn_in": 400, "thin": 5, "n_samples": 40}},
    "estimands": {"K": 2, "M": 60, "sims_per_draw": 5, "burn_in": 300, "thin": 10},
    "study": {"n_nodes": 12, "n_replications": 2, "T": 2000, "truth_sims": 2000, "truth_thin": 5, "truth_batches": 10,
              "classes": ["ernm", "logistic", "not_a_class"]},
}


def test_study_reaggregation_and_failures(tmp_path):
    cfg = config_from_dict(TINY_STUDY)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_study(cfg, tmp_path)
    for rep in res.replications:
        assert rep.results["not_a_class"].error is not None
        assert rep.results["reference"].report is not None
    again = load_study(tmp_path, cfg.study.classes)
    assert again.tables() == res.tables()
    rows = list(csv.DictReader(open(tmp_path / "kl.csv")))
    assert [r["estimand"] for r in rows][:2] == ["main", "1-peer-out"]
    assert all(r["not_a_class"] == "NA" for r in rows)
