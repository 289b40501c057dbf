"""Identifying-functional catalog and trapdoor-strategy machinery.

The catalog is hard-coded: one entry per supported graph, with the
evaluation kind and the variable roles.  Binary evaluation uses exact
rational arithmetic so that functional independence at the true tables
is exact, not approximate.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Tuple

import numpy as np

from .fit import (
    BackdoorGaussianModel,
    FreqTable,
    GaussianObsModel,
    UndefinedCellError,
)


class StrategyError(ValueError):
    """Raised for invalid or unresolvable trapdoor strategies."""


@dataclass(frozen=True)
class FunctionalCatalogEntry:
    graph_key: str
    intervention: Tuple[str, ...]
    outcome: Tuple[str, ...]
    trapdoor: Tuple[str, ...]
    covariates: Tuple[str, ...]  # the B block of the weighted functional
    kind: str  # discrete-sum | gaussian-closed-form | monte-carlo-required | back-door


CATALOG: Dict[str, FunctionalCatalogEntry] = {
    "fig1": FunctionalCatalogEntry("fig1", ("X",), ("Y",), ("W",), (), "back-door"),
    "fig2a": FunctionalCatalogEntry("fig2a", ("X",), ("Y",), (), (), "back-door"),
    "fig2c": FunctionalCatalogEntry("fig2c", ("X",), ("Y",), ("Z",), (), "discrete-sum"),
    "fig3b": FunctionalCatalogEntry("fig3b", ("X",), ("Y",), ("Z",), ("S", "G"), "monte-carlo-required"),
}
CATALOG["fsd"] = CATALOG["fig3b"]


def get_catalog_entry(graph_key: str) -> FunctionalCatalogEntry:
    try:
        return CATALOG[graph_key]
    except KeyError:
        raise StrategyError(
            f"no identifying functional catalogued for graph {graph_key!r}"
        ) from None


# -- trapdoor strategies -----------------------------------------------------

_STRATEGY_KINDS = ("fixed", "marg-mean", "cond-mean", "marg-draw", "cond-draw", "constraint")


@dataclass(frozen=True)
class TrapdoorStrategy:
    """How the trapdoor value is chosen: a constant, a (conditional) mean,
    a (conditional) draw, or the zero-coefficient constraint fit."""

    kind: str
    value: Optional[float] = None
    given: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in _STRATEGY_KINDS:
            raise StrategyError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "fixed" and self.value is None:
            raise StrategyError("fixed strategy requires a value")
        if self.kind.startswith("cond") and not self.given:
            raise StrategyError(f"{self.kind} requires a conditioning set")
        if self.kind.startswith("marg") and self.given:
            raise StrategyError(f"{self.kind} takes no conditioning set")

    @property
    def is_draw(self) -> bool:
        return self.kind.endswith("draw")

    def spec_string(self) -> str:
        if self.kind == "fixed":
            v = self.value
            return f"fixed:{int(v) if float(v).is_integer() else v}"
        if self.given:
            return f"{self.kind}:{','.join(self.given)}"
        return self.kind

    @classmethod
    def parse(cls, spec: str) -> "TrapdoorStrategy":
        """Grammar: fixed:<v> | marg-mean | cond-mean:X | marg-draw
        | cond-draw:X,S,G | constraint."""
        head, _, rest = spec.partition(":")
        head = head.strip()
        if head == "fixed":
            try:
                return cls("fixed", value=float(rest))
            except ValueError:
                raise StrategyError(f"bad fixed value in {spec!r}") from None
        if head in ("marg-mean", "marg-draw", "constraint"):
            if rest:
                raise StrategyError(f"{head} takes no argument in {spec!r}")
            return cls(head)
        if head in ("cond-mean", "cond-draw"):
            given = tuple(v.strip() for v in rest.split(",") if v.strip())
            return cls(head, given=given)
        raise StrategyError(f"cannot parse strategy {spec!r}")


def resolve_trapdoor(
    strategy: TrapdoorStrategy,
    aux,
    context: Dict[str, float],
    rng: Optional[np.random.Generator] = None,
):
    """Produce a trapdoor value from a strategy and a fitted auxiliary
    model for Z (one with .mean(context) and .draw(context, rng))."""
    if strategy.kind == "fixed":
        return strategy.value
    if strategy.kind == "constraint":
        # the constrained model's functional has a zero z-coefficient
        return 0.0
    if aux is None:
        raise StrategyError(f"strategy {strategy.spec_string()!r} requires an auxiliary Z fit")
    ctx = {k: context[k] for k in strategy.given} if strategy.given else {}
    missing = [k for k in strategy.given if k not in context]
    if missing:
        raise StrategyError(f"context missing {missing} for {strategy.spec_string()!r}")
    if strategy.kind.endswith("mean"):
        return aux.mean(ctx)
    if rng is None:
        raise StrategyError("draw strategies need an RNG")
    return aux.draw(ctx, rng)


# -- binary plug-in functional (exact rational arithmetic) -------------------

def effect_binary_fixed_z(tables: Dict[str, FreqTable], x: float, z: float) -> Dict[float, Fraction]:
    """Ratio-of-sums functional over W at a fixed trapdoor value.

    ``tables`` must hold "W", "X|Z,W" and "Y|X,Z,W".  Cells with zero
    marginal probability of w contribute nothing and may be undefined;
    any other required undefined cell raises, carrying its index.
    """
    t_w = tables["W"]
    t_x = tables["X|Z,W"]
    t_y = tables["Y|X,Z,W"]
    y_support = t_y.support() or (0.0, 1.0)
    num = {y: Fraction(0) for y in y_support}
    den = Fraction(0)
    for w, pw in t_w.dist(()).items():
        if pw == 0:
            continue
        px = t_x.prob(x, (z, w))
        den += px * pw
        # every (x, z, w) cell with observable w is required; an empty one
        # invalidates the whole evaluation rather than dropping the term
        ydist = t_y.dist((x, z, w))
        for y in y_support:
            num[y] += ydist.get(y, Fraction(0)) * px * pw
    if den == 0:
        raise UndefinedCellError("Y", ("X", "Z"), (x, z))
    return {y: num[y] / den for y in y_support}


def effect_binary_weighted(
    tables: Dict[str, FreqTable], x: float, weight_table: FreqTable
) -> Dict[float, Fraction]:
    """Mixture of fixed-z functionals, weighted by an estimated P(Z) or
    P(Z | x).  Zero-weight z values are skipped even if their functional
    would be undefined."""
    cell = (x,) if weight_table.given else ()
    weights = weight_table.dist(cell)
    out: Dict[float, Fraction] = {}
    total = Fraction(0)
    for z, wgt in weights.items():
        if wgt == 0:
            continue
        dist = effect_binary_fixed_z(tables, x, z)
        for y, p in dist.items():
            out[y] = out.get(y, Fraction(0)) + wgt * p
        total += wgt
    if total == 0:
        raise UndefinedCellError("Z", weight_table.given, cell)
    return {y: p / total for y, p in out.items()}


# -- Gaussian closed forms ----------------------------------------------------

def _w_shrinkage(model: GaussianObsModel) -> float:
    return model.b_yw * model.b_xw * model.s2_w / (model.b_xw**2 * model.s2_w + model.s2_x)


def effect_gaussian_mean(model: GaussianObsModel, x: float, z: float) -> float:
    """Closed-form interventional mean for the four-variable trapdoor graph."""
    d = model.b_xw**2 * model.s2_w + model.s2_x
    k = _w_shrinkage(model)
    return (
        model.a_y
        + (model.b_yw * model.s2_x / d) * model.a_w
        - k * model.a_x
        + (model.b_yx + k) * x
        + (model.b_yz - k * model.b_xz) * z
    )


def gaussian_trapdoor_coefficient(model: GaussianObsModel) -> float:
    """Coefficient of the trapdoor variable in the closed-form mean; zero
    at the true parameters and under the constrained fit."""
    return model.b_yz - _w_shrinkage(model) * model.b_xz


def effect_gaussian_variance(model: GaussianObsModel) -> float:
    """Closed-form interventional variance (free of both x and z)."""
    d = model.b_xw**2 * model.s2_w + model.s2_x
    return (model.b_xw**2 * model.s2_y * model.s2_w + model.s2_x * (model.b_yw**2 * model.s2_w + model.s2_y)) / d


def effect_backdoor_gaussian(model: BackdoorGaussianModel, x: float) -> Tuple[float, float]:
    """Back-door adjusted Gaussian effect: returns (mean, variance)."""
    mean = model.a_y + model.b_yw * model.a_w + model.b_yx * x
    var = model.s2_y + model.b_yw**2 * model.s2_w
    return mean, var
