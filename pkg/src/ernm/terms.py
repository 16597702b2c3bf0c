"""Sufficient statistics of the joint edge/outcome exponential family.

A :class:`ModelSpec` is an ordered list of :class:`TermSpec` plus flags that
say which parts of the network are random.  Four model classes are
predefined:

``ernm``           edges and outcomes random, one joint likelihood
``mrf``            outcomes random on a fixed network
``ergm_logistic``  edges from an ERGM, outcomes from a logistic regression,
                   fitted as two independent likelihoods
``logistic``       outcomes conditionally independent given frozen
                   neighbour counts

``ergm`` (edges random, outcomes fixed) is also available; it is the edge
block of ``ergm_logistic``.

Statistic definitions
---------------------
edges              number of edges
gwesp(theta, h)    exp(theta) * sum_k (1 - (1 - exp(-theta))**k) * EP_k, where
                   EP_k counts edges with exactly k shared partners.  With a
                   homogeneity attribute ``h`` an edge {i, j} only counts
                   partners w with h(w) == h(i) == h(j).
gwdeg(theta)       exp(theta) * sum_i (1 - (1 - exp(-theta))**d_i)
homophily(a)       edges whose endpoints share the value of ``a``
                   (``variant="sqrt"``: sum over categories c of
                   sqrt(concordant edges in c))
intercept          sum_i y_i
main_covariate(a)  sum_i y_i * a_i
neighbor_count(a)  sum_i y_i * sum_{j ~ i} a_j
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .network import Network

TERM_KINDS = (
    "edges",
    "gwesp",
    "gwdeg",
    "homophily",
    "intercept",
    "main_covariate",
    "neighbor_count",
)
EDGE_SIDE = {"edges", "gwesp", "gwdeg", "homophily"}
HOMOPHILY_VARIANTS = ("match_count", "sqrt")
MODEL_CLASSES = ("ernm", "ergm", "mrf", "ergm_logistic", "logistic")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TermSpec:
    kind: str
    decay: float = 0.0
    attr: str | None = None
    variant: str = "match_count"

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise ModelError(f"unknown term kind {self.kind!r}")
        if self.decay < 0 or not math.isfinite(self.decay):
            raise ModelError(f"decay must be a finite value >= 0, got {self.decay}")
        if self.kind in ("homophily", "main_covariate", "neighbor_count") and not self.attr:
            raise ModelError(f"{self.kind} term needs an attribute")
        if self.variant not in HOMOPHILY_VARIANTS:
            raise ModelError(f"unknown homophily variant {self.variant!r}")

    @classmethod
    def edges(cls):
        return cls("edges")

    @classmethod
    def gwesp(cls, decay=0.5, homogeneity_attr=None):
        return cls("gwesp", decay=decay, attr=homogeneity_attr)

    @classmethod
    def gwdeg(cls, decay=0.5):
        return cls("gwdeg", decay=decay)

    @classmethod
    def homophily(cls, attr, variant="match_count"):
        return cls("homophily", attr=attr, variant=variant)

    @classmethod
    def intercept(cls):
        return cls("intercept")

    @classmethod
    def main_covariate(cls, attr):
        return cls("main_covariate", attr=attr)

    @classmethod
    def neighbor_count(cls, attr):
        return cls("neighbor_count", attr=attr)

    @property
    def side(self) -> str:
        return "edge" if self.kind in EDGE_SIDE else "node"

    @property
    def name(self) -> str:
        if self.kind in ("gwesp", "gwdeg"):
            base = f"{self.kind}.{self.decay:g}"
            return f"{base}.{self.attr}" if self.attr else base
        if self.kind == "homophily":
            suffix = "" if self.variant == "match_count" else f".{self.variant}"
            return f"homophily.{self.attr}{suffix}"
        if self.attr:
            return f"{self.kind}.{self.attr}"
        return self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("gwesp", "gwdeg"):
            d["decay"] = self.decay
        if self.attr is not None:
            d["attr"] = self.attr
        if self.kind == "homophily":
            d["variant"] = self.variant
        return d


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple[TermSpec, ...]
    edges_stochastic: bool = True
    outcomes_stochastic: bool = True
    separable: bool = False
    model_class: str = "ernm"
    outcome_attr: str = "outcome"
    treatment_attr: str = "treatment"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ModelError("a model needs at least one term")
        if self.model_class not in MODEL_CLASSES:
            raise ModelError(f"unknown model class {self.model_class!r}")
        expected = _CLASS_FLAGS[self.model_class]
        got = (self.edges_stochastic, self.outcomes_stochastic, self.separable)
        if got != expected:
            raise ModelError(f"{self.model_class} requires flags {expected}, got {got}")
        for t in self.terms:
            if t.kind == "gwesp" and t.attr == self.outcome_attr:
                raise ModelError("gwesp homogeneity must use a fixed covariate")
            if t.kind == "main_covariate" and t.attr == self.outcome_attr:
                raise ModelError("main_covariate cannot reference the outcome")

    @classmethod
    def for_class(cls, model_class: str, terms: Sequence[TermSpec], **kwargs) -> "ModelSpec":
        """Build a model of the given class, dropping terms the class cannot use.

        Terms whose change statistic is identically zero under the class's
        toggles (for example edge terms in a logistic model) are removed with
        a warning.
        """
        if model_class not in MODEL_CLASSES:
            raise ModelError(f"unknown model class {model_class!r}")
        edges, outcomes, separable = _CLASS_FLAGS[model_class]
        outcome_attr = kwargs.get("outcome_attr", "outcome")
        kept = []
        for t in terms:
            if not _term_identified(t, model_class, outcome_attr):
                warnings.warn(
                    f"{model_class} model ignores term {t.name!r}", UserWarning, stacklevel=2
                )
                continue
            kept.append(t)
        return cls(
            tuple(kept),
            edges_stochastic=edges,
            outcomes_stochastic=outcomes,
            separable=separable,
            model_class=model_class,
            **kwargs,
        )

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def index(self, kind: str, attr: str | None = None) -> int | None:
        for k, t in enumerate(self.terms):
            if t.kind == kind and (attr is None or t.attr == attr):
                return k
        return None

    def blocks(self) -> list[tuple[np.ndarray, "ModelSpec"]]:
        """Independent likelihood blocks as ``(term indices, sub-model)`` pairs."""
        if not self.separable:
            return [(np.arange(self.p), self)]
        edge_idx = np.array([k for k, t in enumerate(self.terms) if t.side == "edge"], dtype=int)
        node_idx = np.array([k for k, t in enumerate(self.terms) if t.side == "node"], dtype=int)
        common = dict(outcome_attr=self.outcome_attr, treatment_attr=self.treatment_attr)
        out = []
        if edge_idx.size:
            out.append((edge_idx, ModelSpec.for_class("ergm", [self.terms[k] for k in edge_idx], **common)))
        if node_idx.size:
            out.append((node_idx, ModelSpec.for_class("logistic", [self.terms[k] for k in node_idx], **common)))
        return out

    def permuted(self, order: Sequence[int]) -> "ModelSpec":
        return replace(self, terms=tuple(self.terms[k] for k in order))

    def to_dict(self) -> dict:
        return {
            "class": self.model_class,
            "outcome_attr": self.outcome_attr,
            "treatment_attr": self.treatment_attr,
            "terms": [t.to_dict() for t in self.terms],
        }


_CLASS_FLAGS = {
    "ernm": (True, True, False),
    "ergm": (True, False, False),
    "mrf": (False, True, False),
    "ergm_logistic": (True, True, True),
    "logistic": (False, True, False),
}


def _term_identified(t: TermSpec, model_class: str, outcome_attr: str) -> bool:
    on_outcome = t.attr == outcome_attr
    if model_class in ("ernm", "ergm_logistic"):
        return True
    if model_class == "ergm":
        return t.side == "edge" or t.kind == "neighbor_count"
    if model_class == "mrf":
        return t.side == "node" or (t.kind == "homophily" and on_outcome)
    # logistic: outcomes only, neighbour outcomes frozen
    return t.side == "node"


# -- standard models -----------------------------------------------------------

def ernm_terms(homophily_attr="outcome", treatment="treatment", decay=0.5,
               homophily_variant="match_count") -> list[TermSpec]:
    """The eight-term simulation-study model in its canonical order."""
    return [
        TermSpec.edges(),
        TermSpec.gwesp(decay),
        TermSpec.gwdeg(decay),
        TermSpec.homophily(homophily_attr, homophily_variant),
        TermSpec.intercept(),
        TermSpec.main_covariate(treatment),
        TermSpec.neighbor_count(treatment),
        TermSpec.neighbor_count("outcome"),
    ]


def study_model(model_class: str, decay: float = 0.5, homophily_variant: str = "sqrt") -> ModelSpec:
    """Simulation-study model for one of the four classes.

    The study uses the square-root homophily variant: with the plain
    concordant-edge count and unit coefficients almost every node ends up
    with outcome 1, which leaves no contrast to estimate.
    """
    terms = ernm_terms(decay=decay, homophily_variant=homophily_variant)
    if model_class in ("mrf", "logistic"):
        terms = [t for t in terms if t.side == "node"]
    return ModelSpec.for_class(model_class, terms)


# -- compilation for the kernels ----------------------------------------------

@dataclass
class CompiledModel:
    kinds: np.ndarray
    attrs: np.ndarray
    params: np.ndarray
    xcat: np.ndarray
    xnum: np.ndarray
    n_categories: int
    attr_rows: dict = field(default_factory=dict)

    def initial_aux(self, net: Network) -> np.ndarray:
        aux = np.zeros((len(self.kinds), self.n_categories))
        if not np.any(self.kinds == _kernels.HOMOPHILY_SQRT):
            return aux
        edges = net.edge_list()
        for t, kind in enumerate(self.kinds):
            if kind != _kernels.HOMOPHILY_SQRT:
                continue
            codes = net.outcomes if self.attrs[t] == _kernels.OUTCOME else self.xcat[self.attrs[t]]
            if len(edges):
                same = codes[edges[:, 0]] == codes[edges[:, 1]]
                aux[t] = np.bincount(codes[edges[same, 0]], minlength=self.n_categories)
        return aux


_KIND_CODES = {
    "edges": _kernels.EDGES,
    "gwesp": _kernels.GWESP,
    "gwdeg": _kernels.GWDEG,
    "intercept": _kernels.INTERCEPT,
    "main_covariate": _kernels.MAIN_COVARIATE,
    "neighbor_count": _kernels.NEIGHBOR_COUNT,
}


def _attribute_values(net: Network, model: ModelSpec, name: str) -> np.ndarray:
    if name == model.treatment_attr and name not in net.covariates:
        return net.treatment
    return net.attribute(name)


def compile_model(model: ModelSpec, net: Network) -> CompiledModel:
    """Resolve attribute names against ``net`` and encode the terms as arrays."""
    names = []
    for t in model.terms:
        if t.attr is not None and t.attr != model.outcome_attr and t.attr not in names:
            names.append(t.attr)
    xcat = np.zeros((len(names), net.n), dtype=np.int64)
    xnum = np.full((len(names), net.n), np.nan)
    n_cat = 2
    for row, name in enumerate(names):
        values = _attribute_values(net, model, name)
        uniq, codes = np.unique(np.asarray(values).astype(str), return_inverse=True)
        xcat[row] = codes
        n_cat = max(n_cat, len(uniq))
        try:
            xnum[row] = np.asarray(values, dtype=float)
        except (TypeError, ValueError):
            pass
    rows = {name: k for k, name in enumerate(names)}
    kinds = np.empty(model.p, dtype=np.int64)
    attrs = np.full(model.p, _kernels.NO_ATTR, dtype=np.int64)
    params = np.zeros(model.p)
    for k, t in enumerate(model.terms):
        if t.kind == "homophily":
            kinds[k] = _kernels.HOMOPHILY if t.variant == "match_count" else _kernels.HOMOPHILY_SQRT
        else:
            kinds[k] = _KIND_CODES[t.kind]
        params[k] = t.decay
        if t.attr is not None:
            attrs[k] = _kernels.OUTCOME if t.attr == model.outcome_attr else rows[t.attr]
            if t.kind in ("main_covariate", "neighbor_count") and attrs[k] >= 0:
                if np.isnan(xnum[attrs[k]]).any():
                    raise ModelError(f"term {t.name!r} needs a numeric attribute")
    return CompiledModel(kinds, attrs, params, xcat, xnum, n_cat, rows)


# -- evaluation -------------------------------------------------------------

def eval_statistics(net: Network, model: ModelSpec) -> np.ndarray:
    """Sufficient statistics g(y, x), computed from scratch with matrix algebra."""
    a = net.adjacency_matrix().astype(float)
    y = net.outcomes.astype(float)
    deg = a.sum(axis=1)
    out = np.empty(model.p)
    for k, t in enumerate(model.terms):
        if t.kind == "edges":
            v = a.sum() / 2
        elif t.kind == "gwesp":
            ah = a
            if t.attr is not None:
                codes = _codes(_attribute_values(net, model, t.attr))
                ah = a * (codes[:, None] == codes[None, :])
            sp = ah @ ah
            r = 1.0 - math.exp(-t.decay)
            iu = np.triu_indices(net.n, 1)
            on = ah[iu] > 0
            v = math.exp(t.decay) * np.sum(1.0 - r ** sp[iu][on])
        elif t.kind == "gwdeg":
            r = 1.0 - math.exp(-t.decay)
            v = math.exp(t.decay) * np.sum(1.0 - r**deg)
        elif t.kind == "homophily":
            codes = net.outcomes if t.attr == model.outcome_attr else _codes(_attribute_values(net, model, t.attr))
            same = codes[:, None] == codes[None, :]
            if t.variant == "match_count":
                v = (a * same).sum() / 2
            else:
                v = 0.0
                for c in np.unique(codes):
                    mask = codes == c
                    v += math.sqrt(a[np.ix_(mask, mask)].sum() / 2)
        elif t.kind == "intercept":
            v = y.sum()
        elif t.kind == "main_covariate":
            v = float(y @ _numeric(net, model, t))
        else:
            x = y if t.attr == model.outcome_attr else _numeric(net, model, t)
            v = float(y @ (a @ x))
        out[k] = v
    bad = ~np.isfinite(out)
    if bad.any():
        raise ModelError(f"non-finite statistic for term {model.terms[int(np.argmax(bad))].name!r}")
    return out


def _codes(values):
    return np.unique(np.asarray(values).astype(str), return_inverse=True)[1]


def _numeric(net, model, t):
    try:
        return np.asarray(_attribute_values(net, model, t.attr), dtype=float)
    except (TypeError, ValueError):
        raise ModelError(f"term {t.name!r} needs a numeric attribute") from None


def change_stat_edge(net: Network, model: ModelSpec, i: int, j: int) -> np.ndarray:
    """Change in g(y, x) from toggling dyad {i, j} (not applied)."""
    net._check_dyad(i, j)
    cm = compile_model(model, net)
    out = np.zeros(model.p)
    _kernels.edge_change(
        i, j, net.adj, net.nbr, net.deg, net.outcomes, cm.xcat, cm.xnum,
        cm.kinds, cm.attrs, cm.params, cm.initial_aux(net), out,
    )
    return out


def change_stat_node(net: Network, model: ModelSpec, i: int) -> np.ndarray:
    """Change in g(y, x) from flipping the outcome of node ``i`` (not applied)."""
    if not 0 <= i < net.n:
        raise ModelError(f"node {i} out of range")
    cm = compile_model(model, net)
    out = np.zeros(model.p)
    _kernels.node_change(
        i, net.nbr, net.deg, net.outcomes, cm.xcat, cm.xnum,
        cm.kinds, cm.attrs, cm.params, cm.initial_aux(net), out,
    )
    return out


def node_design(
    net: Network,
    model: ModelSpec,
    treatment: np.ndarray | None = None,
    treated_neighbors: np.ndarray | None = None,
    outcome_neighbors: np.ndarray | None = None,
) -> np.ndarray:
    """Per-node covariate rows for the node-side terms of ``model``.

    Row ``i`` is the change in the node-side statistics from setting
    ``y_i = 1`` with neighbour outcomes held fixed, i.e. the design matrix of
    the logistic outcome model.  The optional arrays override a node's own
    treatment, its treated-neighbour count and its positive-outcome neighbour
    count, which is how potential outcomes are evaluated.
    """
    a = net.adjacency_matrix().astype(float)
    z = net.treatment.astype(float) if treatment is None else np.asarray(treatment, float)
    t_nb = a @ net.treatment if treated_neighbors is None else np.asarray(treated_neighbors, float)
    o_nb = a @ net.outcomes if outcome_neighbors is None else np.asarray(outcome_neighbors, float)
    cols = []
    for t in model.terms:
        if t.kind == "intercept":
            cols.append(np.ones(net.n))
        elif t.kind == "main_covariate":
            cols.append(z if t.attr == model.treatment_attr else _numeric(net, model, t))
        elif t.kind == "neighbor_count":
            if t.attr == model.outcome_attr:
                cols.append(np.asarray(o_nb, float))
            elif t.attr == model.treatment_attr:
                cols.append(np.asarray(t_nb, float))
            else:
                cols.append(a @ _numeric(net, model, t))
        else:
            raise ModelError(f"term {t.name!r} is not a node-side logistic term")
    return np.column_stack(cols) if cols else np.zeros((net.n, 0))
