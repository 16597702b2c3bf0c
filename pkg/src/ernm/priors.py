"""Priors over the natural parameter vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PriorSpec:
    """Uniform (optionally boxed) or independent Gaussian prior.

    Bounds, means and sds may be scalars or per-coordinate sequences; they
    are broadcast against eta when the prior is evaluated.
    """

    kind: str = "uniform"
    lower: float | tuple | None = None
    upper: float | tuple | None = None
    mean: float | tuple = 0.0
    sd: float | tuple = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "uniform" and self.lower is not None and self.upper is not None:
            if np.any(np.asarray(self.lower, float) >= np.asarray(self.upper, float)):
                raise ValueError("prior bounds must satisfy lower < upper")
        if self.kind == "gaussian" and np.any(np.asarray(self.sd, float) <= 0):
            raise ValueError("prior sd must be positive")

    @classmethod
    def uniform(cls, lower=None, upper=None):
        return cls("uniform", _tup(lower), _tup(upper))

    @classmethod
    def gaussian(cls, mean=0.0, sd=1.0):
        return cls("gaussian", mean=_tup(mean), sd=_tup(sd))

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "lower": _plain(self.lower), "upper": _plain(self.upper)}
        return {"kind": "gaussian", "mean": _plain(self.mean), "sd": _plain(self.sd)}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        d = dict(d)
        kind = d.pop("kind", "uniform")
        if kind == "uniform":
            return cls.uniform(d.pop("lower", None), d.pop("upper", None))
        return cls.gaussian(d.pop("mean", 0.0), d.pop("sd", 1.0))


def _tup(v):
    if v is None or np.isscalar(v):
        return v
    return tuple(float(x) for x in v)


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def in_support(prior: PriorSpec, eta) -> bool:
    eta = np.asarray(eta, float)
    if prior.kind == "gaussian":
        return True
    if prior.lower is not None and np.any(eta < np.asarray(prior.lower, float)):
        return False
    if prior.upper is not None and np.any(eta > np.asarray(prior.upper, float)):
        return False
    return True


def log_prior(prior: PriorSpec, eta) -> float:
    """Log density up to a constant; ``-inf`` outside the support."""
    eta = np.asarray(eta, float)
    if prior.kind == "uniform":
        return 0.0 if in_support(prior, eta) else -np.inf
    z = (eta - np.asarray(prior.mean, float)) / np.asarray(prior.sd, float)
    return float(-0.5 * np.sum(z * z))


def prior_precision(prior: PriorSpec, p: int) -> np.ndarray:
    """Diagonal precision of the prior, used to regularize proposal scales.

    Gaussian: ``1 / sd**2``.  Boxed uniform: ``12 / width**2`` (the
    precision of a uniform on the box).  Unbounded directions get 0.
    """
    if prior.kind == "gaussian":
        return np.broadcast_to(1.0 / np.asarray(prior.sd, float) ** 2, (p,)).copy()
    if prior.lower is None or prior.upper is None:
        return np.zeros(p)
    width = np.asarray(prior.upper, float) - np.asarray(prior.lower, float)
    return np.broadcast_to(12.0 / width**2, (p,)).copy()
