"""Chain files and provenance records."""

from __future__ import annotations

import json
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .diagnostics import Trace, trace_export
from .exchange import Chain


def _version(pkg: str) -> str | None:
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return None


def provenance(config: dict | None = None, **extra) -> dict:
    import numba
    import scipy

    return {
        "config": config,
        "versions": {
            "python": sys.version.split()[0],
            "platform": platform.platform(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "ernm": _version("artifact"),
        },
        "rng": "numpy PCG64 via SeedSequence",
        **extra,
    }


def write_provenance(outdir, config: dict | None = None, **extra) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "provenance.json"
    path.write_text(json.dumps(provenance(config, **extra), indent=2, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def write_chain(chain: Chain, outdir, index: int, config: dict | None = None) -> tuple[Path, Path]:
    """Write ``chain_<index>.csv`` (iteration, accepted, one column per term)
    and ``chain_<index>.json`` (metadata, frozen proposal covariance, resume state)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"chain_{index:02d}.csv"
    json_path = out / f"chain_{index:02d}.json"
    trace_export(chain).to_csv(csv_path)
    doc = {
        "names": chain.names,
        "acceptance_rate": chain.acceptance_rate,
        "proposal_cov": chain.proposal_cov.tolist(),
        "inner_stat_samples": np.asarray(chain.inner_stat_samples).tolist(),
        "metadata": chain.metadata,
        "config": config,
    }
    json_path.write_text(json.dumps(doc, indent=2, default=_jsonable))
    return csv_path, json_path


def read_chain(csv_path, json_path=None) -> Chain:
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    tr = Trace.from_csv(csv_path)
    doc = json.loads(json_path.read_text())
    if doc["names"] != tr.names:
        raise ValueError(f"{csv_path}: columns do not match metadata term names")
    p = len(tr.names)
    return Chain(
        tr.names,
        tr.values,
        tr.accepted,
        tr.iteration,
        np.asarray(doc["proposal_cov"], float).reshape(p, p),
        np.asarray(doc["inner_stat_samples"], float).reshape(-1, p),
        doc["metadata"],
    )


def write_chains(chains, outdir, config: dict | None = None) -> None:
    for k, c in enumerate(chains):
        write_chain(c, outdir, k, config)


def read_chains(chain_dir) -> list[Chain]:
    paths = sorted(Path(chain_dir).glob("chain_*.csv"))
    if not paths:
        raise FileNotFoundError(f"no chain_*.csv files in {chain_dir}")
    return [read_chain(p) for p in paths]
