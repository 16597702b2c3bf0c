"""``ernm`` command line: simulate, fit, estimate, gof, diag, study.

Every subcommand reads the YAML run configuration given by ``--config``
(defaults apply when omitted), applies ``--set key=value`` overrides, and
writes CSV/JSON results plus ``provenance.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, dump_config, load_config
from .diagnostics import gelman_rubin, geometric_windows, posterior_predictive_gof, trace_export
from .estimands import do_main_effect, estimand_report, impute_missing_outcomes
from .exchange import FitError, fit_posterior, pooled_draws
from .io import read_chain, read_chains, write_chains, write_provenance
from .network import Network, NetworkError, outcome_group, read_network, write_network
from .sampler import SamplerConfig, dag_simulate
from .study import assign_treatment, run_study
from .terms import ModelError

log = logging.getLogger("ernm")


def _network(cfg: RunConfig, args) -> Network:
    io = cfg.io
    return read_network(
        args.nodes or io.nodes,
        args.edges or io.edges,
        outcome=io.outcome,
        treatment=io.treatment,
        covariates=io.covariates,
    )


def _chains_dir(cfg: RunConfig, args) -> Path:
    return Path(args.chains or cfg.io.chains)


def _check_columns(chains, model):
    if chains[0].names != model.names:
        raise ConfigError(f"chain columns {chains[0].names} do not match model terms {model.names}")


# -- subcommands --------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args, out: Path) -> dict:
    sim = cfg.simulate
    model = cfg.model.build()
    eta = cfg.true_eta() if sim.eta is None else tuple(sim.eta)
    if len(eta) != model.p:
        raise ConfigError(f"simulate.eta has {len(eta)} values, model has {model.p} terms")
    rng = np.random.default_rng(cfg.seed)
    z = assign_treatment(sim.n_nodes, sim.treated_fraction, rng)
    net = dag_simulate(model, eta, z, sim.T, rng, node_steps=sim.node_steps, edge_steps=sim.edge_steps)
    write_network(net, out / "nodes.csv", out / "edges.csv")
    return {"eta": list(eta), "n_treated": int(z.sum()), "n_edges": net.n_edges,
            "mean_outcome": float(net.outcomes.mean())}


def cmd_fit(cfg: RunConfig, args, out: Path) -> dict:
    net = _network(cfg, args)
    model = cfg.model.build()
    resume = read_chains(args.resume) if args.resume else None
    chains = fit_posterior(net, model, cfg.prior.build(), cfg.exchange.build(cfg.seed, cfg.threads), resume)
    write_chains(chains, out, cfg.to_dict())
    return {"model_class": model.model_class, "names": model.names,
            "acceptance_rates": [c.acceptance_rate for c in chains],
            "posterior_mean": pooled_draws(chains).mean(axis=0).tolist(),
            "resumed_from": args.resume}


def cmd_estimate(cfg: RunConfig, args, out: Path) -> dict:
    net = _network(cfg, args)
    model = cfg.model.build()
    chains = read_chains(_chains_dir(cfg, args))
    _check_columns(chains, model)
    est = cfg.estimands
    rng = np.random.default_rng(cfg.seed)
    draws = impute_missing_outcomes(pooled_draws(chains), model, net, est.M, est.sims_per_draw, rng, est.sampler())
    report = estimand_report(draws, est.K, est.level)
    if est.do_mode:
        report.estimates.append(
            do_main_effect(pooled_draws(chains), model, net, est.M, rng, SamplerConfig(est.burn_in, est.thin, 10))
        )
    report.to_csv(out / "estimands.csv")
    report.to_json(out / "estimands.json")
    return {"estimands": report.names}


def cmd_gof(cfg: RunConfig, args, out: Path) -> dict:
    net = _network(cfg, args)
    model = cfg.model.build()
    chains = read_chains(_chains_dir(cfg, args))
    _check_columns(chains, model)
    g = cfg.gof
    group = None if g.group_attr is None else outcome_group(
        int(g.group_value), None if g.group_attr == cfg.io.outcome else g.group_attr)
    rep = posterior_predictive_gof(
        pooled_draws(chains), model, net, g.n_sim, np.random.default_rng(cfg.seed),
        SamplerConfig(g.burn_in, 1, 1, cfg.sampler.edge_proposal_prob), group,
    )
    rep.to_json(out / "gof.json")
    rep.to_csv(out / "gof.csv")
    return {"families": list(rep.families), "skipped": rep.skipped,
            "coverage": {f: b.coverage() for f, b in rep.families.items()}}


def cmd_diag(cfg: RunConfig, args, out: Path) -> dict:
    paths = args.chain_files or [_chains_dir(cfg, args)]
    chains = []
    for p in map(Path, paths):
        chains.extend(read_chains(p) if p.is_dir() else [read_chain(p)])
    if len(chains) < 2:
        raise ValueError("Gelman-Rubin needs at least 2 chains")
    length = min(len(c.draws) for c in chains)
    x = np.stack([c.draws[:length] for c in chains])
    ends, ratio = gelman_rubin(x, geometric_windows(length, args.windows))
    names = chains[0].names
    with open(out / "gelman_rubin.csv", "w") as fh:
        fh.write(",".join(["draws", *names]) + "\n")
        for e, row in zip(ends, ratio):
            fh.write(",".join([str(int(e)), *(repr(float(v)) for v in row)]) + "\n")
    for k, c in enumerate(chains):
        trace_export(c).to_csv(out / f"trace_{k:02d}.csv")
    final = dict(zip(names, ratio[-1].tolist()))
    return {"n_chains": len(chains), "draws_per_chain": length, "final_ratio": final,
            "acceptance_rates": [c.acceptance_rate for c in chains]}


def cmd_study(cfg: RunConfig, args, out: Path) -> dict:
    result = run_study(cfg, out)
    failures = {r.index: {c: res.error for c, res in r.results.items() if res.error}
                for r in result.replications}
    return {"replications": len(result.replications),
            "failures": {k: v for k, v in failures.items() if v}}


COMMANDS = {
    "simulate": (cmd_simulate, "simulate a network with the temporal process"),
    "fit": (cmd_fit, "fit posterior chains with the exchange algorithm"),
    "estimate": (cmd_estimate, "impute potential outcomes and summarise causal estimands"),
    "gof": (cmd_gof, "posterior-predictive goodness-of-fit bands"),
    "diag": (cmd_diag, "Gelman-Rubin ratios and trace files for saved chains"),
    "study": (cmd_study, "run the simulation study and write coverage/KL tables"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=int, help="worker threads (overrides config)")
    common.add_argument("--verbose", "-v", action="count", default=0)
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. exchange.alpha=0.3 (repeatable)")

    ap = argparse.ArgumentParser(prog="ernm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name, parents=[common], help=h) for name, (_, h) in COMMANDS.items()}
    for name in ("fit", "estimate", "gof"):
        parsers[name].add_argument("--nodes", help="node CSV (default: io.nodes)")
        parsers[name].add_argument("--edges", help="edge CSV (default: io.edges)")
    for name in ("estimate", "gof", "diag"):
        parsers[name].add_argument("--chains", help="directory of chain_XX.csv files (default: io.chains)")
    parsers["fit"].add_argument("--resume", metavar="DIR", help="continue the chains saved in DIR")
    parsers["diag"].add_argument("chain_files", nargs="*", help="chain CSV files or directories")
    parsers["diag"].add_argument("--windows", type=int, default=20, help="number of geometric windows")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    try:
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command][0](cfg, args, out)
    except (ConfigError, ModelError, NetworkError, FitError, ValueError, FileNotFoundError) as exc:
        print(f"ernm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    dump_config(cfg, out / "config.yaml")
    write_provenance(out, cfg.to_dict(), command=args.command, argv=list(sys.argv[1:] if argv is None else argv),
                     summary=summary)
    log.info("%s: wrote %s", args.command, out)
    print(json.dumps(summary, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
