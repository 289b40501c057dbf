"""Structural causal models used for data generation and ground truth.

Each built-in model is a list of mechanisms in topological order, where a
mechanism draws one vertex from a distribution family given a linear
predictor over its parents (including unobserved confounders).  Ground
truth for interventions comes from simulating the mutilated model with
the confounders generated as usual.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit


class GenerationError(ValueError):
    """Raised when a mechanism produces invalid distribution parameters."""


class DegeneracyError(ValueError):
    """Raised when implied covariance structure is singular."""


# term = ("lin", var, coef)  linear contribution coef * value
#      = ("ind", var, level, coef)  indicator contribution coef * I(value == level)
Term = Tuple


@dataclass(frozen=True)
class Mechanism:
    vertex: str
    family: str  # normal | bernoulli | beta | gamma | seqlogit | cutpoints | constant
    intercept: float = 0.0
    terms: Tuple[Term, ...] = ()
    params: Dict = field(default_factory=dict)

    @property
    def parents(self) -> Tuple[str, ...]:
        out = []
        for t in self.terms:
            if t[1] not in out:
                out.append(t[1])
        for t in self.params.get("phi_terms", ()):
            if t[1] not in out:
                out.append(t[1])
        return tuple(out)


@dataclass(frozen=True)
class ScmSpec:
    name: str
    mechanisms: Tuple[Mechanism, ...]
    observed: Tuple[str, ...]
    column_types: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for m in self.mechanisms:
            for p in m.parents:
                if p not in seen:
                    raise GenerationError(
                        f"mechanism for {m.vertex!r} references {p!r} before it is defined"
                    )
            seen.add(m.vertex)
        if not set(self.observed) <= seen:
            raise GenerationError("observed variables must have mechanisms")

    @property
    def vertices(self) -> Tuple[str, ...]:
        return tuple(m.vertex for m in self.mechanisms)

    def mechanism(self, vertex: str) -> Mechanism:
        for m in self.mechanisms:
            if m.vertex == vertex:
                return m
        raise KeyError(vertex)

    def intervene(self, vertex: str, value: float) -> "ScmSpec":
        """Replace a mechanism by the constant ``value`` (do-operator)."""
        mechs = tuple(
            Mechanism(m.vertex, "constant", params={"value": value})
            if m.vertex == vertex
            else m
            for m in self.mechanisms
        )
        if vertex not in self.vertices:
            raise GenerationError(f"no mechanism for intervened vertex {vertex!r}")
        return ScmSpec(self.name + f"|do({vertex}={value})", mechs, self.observed, self.column_types)

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "observed": list(self.observed),
            "column_types": self.column_types,
            "mechanisms": [
                {
                    "vertex": m.vertex,
                    "family": m.family,
                    "intercept": m.intercept,
                    "terms": [list(t) for t in m.terms],
                    "params": {
                        k: ([list(t) for t in v] if k.endswith("_terms") else v)
                        for k, v in m.params.items()
                    },
                }
                for m in self.mechanisms
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "ScmSpec":
        doc = json.loads(text)
        mechs = tuple(
            Mechanism(
                d["vertex"],
                d["family"],
                d.get("intercept", 0.0),
                tuple(tuple(t) for t in d.get("terms", [])),
                {
                    k: (tuple(tuple(t) for t in v) if k.endswith("_terms") else v)
                    for k, v in d.get("params", {}).items()
                },
            )
            for d in doc["mechanisms"]
        )
        return cls(doc["name"], mechs, tuple(doc["observed"]), doc.get("column_types", {}))


@dataclass
class Dataset:
    """Simulated observations: a data frame plus semantic column types."""

    df: pd.DataFrame
    schema: Dict[str, str]

    def __post_init__(self):
        if self.df.isna().any().any():
            raise GenerationError("dataset contains missing values")

    @property
    def n(self) -> int:
        return len(self.df)

    def to_csv(self, path) -> None:
        self.df.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path, schema: Optional[Dict[str, str]] = None) -> "Dataset":
        df = pd.read_csv(path)
        if schema is None:
            schema = _infer_schema(df)
        return cls(df, schema)


def _infer_schema(df: pd.DataFrame) -> Dict[str, str]:
    schema = {}
    for c in df.columns:
        vals = df[c].to_numpy()
        uniq = np.unique(vals)
        if set(uniq) <= {0, 1}:
            schema[c] = "binary"
        elif np.all(vals == np.round(vals)) and len(uniq) <= 5:
            schema[c] = "ordinal"
        elif np.all((vals > 0) & (vals < 1)):
            schema[c] = "unit"
        elif np.all(vals > 0):
            schema[c] = "positive"
        else:
            schema[c] = "continuous"
    return schema


def _linear(intercept: float, terms: Sequence[Term], values: Dict[str, np.ndarray]):
    out = np.asarray(intercept, dtype=float)
    for t in terms:
        if t[0] == "lin":
            _, var, coef = t
            out = out + coef * values[var]
        elif t[0] == "ind":
            _, var, level, coef = t
            out = out + coef * (values[var] == level)
        else:
            raise GenerationError(f"unknown term kind {t[0]!r}")
    return out


def _draw(mech: Mechanism, values: Dict[str, np.ndarray], n: int, rng: np.random.Generator):
    fam = mech.family
    if fam == "constant":
        return np.full(n, float(mech.params["value"]))
    eta = _linear(mech.intercept, mech.terms, values)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (n,)).copy()
    if fam == "normal":
        return rng.normal(eta, mech.params["sd"], size=n)
    if fam == "bernoulli":
        if np.any((eta < 0) | (eta > 1)):
            raise GenerationError(f"Bernoulli mean outside [0,1] in mechanism {mech.vertex!r}")
        return (rng.random(n) < eta).astype(float)
    if fam == "beta":
        mu = expit(eta)
        phi = np.exp(
            _linear(mech.params.get("phi_intercept", 0.0), mech.params.get("phi_terms", ()), values)
        )
        a = mu * phi
        b = (1.0 - mu) * phi
        if np.any(a <= 0) or np.any(b <= 0):
            raise GenerationError(f"invalid Beta parameters in mechanism {mech.vertex!r}")
        return rng.beta(a, b, size=n)
    if fam == "gamma":
        shape = mech.params["shape"]
        mu = np.exp(eta)
        return rng.gamma(shape, mu / shape, size=n)
    if fam == "seqlogit":
        # continuation-ratio: pass threshold k with prob expit(eta - tau_k);
        # the value is the count of consecutive passes starting at level 0
        taus = mech.params["thresholds"]
        out = np.zeros(n)
        alive = np.ones(n, dtype=bool)
        for tau in taus:
            cont = rng.random(n) < expit(eta - tau)
            out += (alive & cont).astype(float)
            alive &= cont
        return out
    if fam == "cutpoints":
        # deterministic ordinal threshold on the linear predictor
        cuts = mech.params["cutpoints"]
        levels = mech.params.get("levels")
        idx = np.zeros(n, dtype=int)
        for c in cuts:
            idx += (eta > c).astype(int)
        if levels is not None:
            return np.asarray(levels, dtype=float)[idx]
        return idx.astype(float)
    raise GenerationError(f"unknown family {fam!r} in mechanism {mech.vertex!r}")


def simulate_full(spec: ScmSpec, n: int, seed: int) -> Dict[str, np.ndarray]:
    """All vertices, including unobserved confounders."""
    if n < 1:
        raise GenerationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    values: Dict[str, np.ndarray] = {}
    for mech in spec.mechanisms:
        values[mech.vertex] = _draw(mech, values, n, rng)
    return values


def simulate(spec: ScmSpec, n: int, seed: int) -> Dataset:
    values = simulate_full(spec, n, seed)
    df = pd.DataFrame({v: values[v] for v in spec.observed})
    schema = {v: spec.column_types.get(v, "continuous") for v in spec.observed}
    return Dataset(df, schema)


@dataclass(frozen=True)
class EffectSummary:
    mean: float
    median: float
    variance: float
    quantiles: Dict[float, float]
    mcse_mean: float
    n: int


def oracle_effect(
    spec: ScmSpec,
    vertex: str,
    value: float,
    n_mc: int,
    seed: int,
    outcome: str = "Y",
    quantile_probs: Sequence[float] = (0.025, 0.25, 0.5, 0.75, 0.975),
) -> EffectSummary:
    """Ground-truth interventional summary of the outcome.

    Simulates the mutilated model with all confounders intact; this is the
    oracle every estimator is judged against.
    """
    mutilated = spec.intervene(vertex, value)
    values = simulate_full(mutilated, n_mc, seed)
    y = values[outcome]
    qs = {p: float(np.quantile(y, p)) for p in quantile_probs}
    return EffectSummary(
        mean=float(np.mean(y)),
        median=float(np.median(y)),
        variance=float(np.var(y, ddof=1)),
        quantiles=qs,
        mcse_mean=float(np.std(y, ddof=1) / np.sqrt(n_mc)),
        n=n_mc,
    )


# -- linear-Gaussian algebra ---------------------------------------------

def is_linear_gaussian(spec: ScmSpec) -> bool:
    return all(
        m.family == "normal" and all(t[0] == "lin" for t in m.terms)
        for m in spec.mechanisms
    )


def gaussian_joint(spec: ScmSpec):
    """Exact joint mean vector and covariance matrix over all vertices.

    Propagates the affine noise representation of each vertex through the
    mechanism list.
    """
    if not is_linear_gaussian(spec):
        raise GenerationError("gaussian_joint requires an all-normal linear model")
    names = list(spec.vertices)
    idx = {v: i for i, v in enumerate(names)}
    k = len(names)
    means = np.zeros(k)
    # coef[i, j] = loading of vertex i on the noise term of vertex j
    coef = np.zeros((k, k))
    sds = np.zeros(k)
    for m in spec.mechanisms:
        i = idx[m.vertex]
        sds[i] = m.params["sd"]
        mu = m.intercept
        row = np.zeros(k)
        for _, var, c in m.terms:
            j = idx[var]
            mu += c * means[j]
            row += c * coef[j]
        row[i] = 1.0
        means[i] = mu
        coef[i] = row
    cov = coef @ np.diag(sds**2) @ coef.T
    return names, means, cov


def gaussian_conditional_mean(spec: ScmSpec, target: str, given: Dict[str, float]) -> float:
    """E(target | given) under the implied joint Gaussian."""
    names, means, cov = gaussian_joint(spec)
    ti = names.index(target)
    gi = [names.index(v) for v in given]
    if not gi:
        return float(means[ti])
    sub = cov[np.ix_(gi, gi)]
    cross = cov[ti, gi]
    resid = np.array([given[v] for v in given]) - means[gi]
    try:
        w = np.linalg.solve(sub, resid)
    except np.linalg.LinAlgError as e:
        raise DegeneracyError(str(e)) from e
    return float(means[ti] + cross @ w)


def gaussian_true_params(spec: ScmSpec):
    """Exact observational-regression parameters implied by the true model.

    Returns the same container the data-fitting route produces, so the two
    can be compared directly; requires the W/Z/X/Y linear-Gaussian family.
    """
    from .fit import GaussianObsModel

    names, means, cov = gaussian_joint(spec)
    need = ["W", "Z", "X", "Y"]
    if not set(need) <= set(names):
        raise GenerationError("gaussian_true_params requires vertices W, Z, X, Y")
    i = {v: names.index(v) for v in names}

    def regress(target, regressors):
        gi = [i[v] for v in regressors]
        sub = cov[np.ix_(gi, gi)]
        cross = cov[i[target], gi]
        try:
            b = np.linalg.solve(sub, cross)
        except np.linalg.LinAlgError as e:
            raise DegeneracyError(str(e)) from e
        a = means[i[target]] - b @ means[gi]
        s2 = cov[i[target], i[target]] - b @ sub @ b
        if s2 <= 0:
            raise DegeneracyError(f"nonpositive residual variance for {target}")
        return float(a), [float(x) for x in b], float(s2)

    a_x, (b_xz, b_xw), s2_x = regress("X", ["Z", "W"])
    a_y, (b_yx, b_yz, b_yw), s2_y = regress("Y", ["X", "Z", "W"])
    return GaussianObsModel(
        a_w=float(means[i["W"]]),
        s2_w=float(cov[i["W"], i["W"]]),
        a_x=a_x,
        b_xz=b_xz,
        b_xw=b_xw,
        s2_x=s2_x,
        a_y=a_y,
        b_yx=b_yx,
        b_yz=b_yz,
        b_yw=b_yw,
        s2_y=s2_y,
    )


def gaussian_true_z_model(spec: ScmSpec, given: Sequence[str] = ()):
    """Exact auxiliary model for the trapdoor variable: the regression of
    Z on ``given`` implied by the true joint Gaussian."""
    from .fit import LinearZModel

    names, means, cov = gaussian_joint(spec)
    i = {v: names.index(v) for v in names}
    gi = [i[v] for v in given]
    if gi:
        sub = cov[np.ix_(gi, gi)]
        cross = cov[i["Z"], gi]
        b = np.linalg.solve(sub, cross)
        a = means[i["Z"]] - b @ means[gi]
        s2 = cov[i["Z"], i["Z"]] - b @ sub @ b
        coef = np.concatenate([[a], b])
    else:
        coef = np.array([means[i["Z"]]])
        s2 = cov[i["Z"], i["Z"]]
    return LinearZModel(tuple(given), coef, float(s2))


# -- exact probability tables for the all-binary model --------------------

def binary_exact_joint(spec: ScmSpec) -> Dict[Tuple[int, ...], Fraction]:
    """Exact joint over all vertices of an all-Bernoulli model.

    Coefficients are converted through their decimal string form so 0.4
    becomes the rational 2/5 exactly.
    """
    for m in spec.mechanisms:
        if m.family != "bernoulli":
            raise GenerationError("binary_exact_joint requires all-Bernoulli mechanisms")
    names = list(spec.vertices)
    joint: Dict[Tuple[int, ...], Fraction] = {}
    for combo in itertools.product((0, 1), repeat=len(names)):
        vals = dict(zip(names, combo))
        p = Fraction(1)
        for m in spec.mechanisms:
            mean = Fraction(str(m.intercept))
            for t in m.terms:
                if t[0] == "lin":
                    mean += Fraction(str(t[2])) * vals[t[1]]
                else:
                    mean += Fraction(str(t[3])) * int(vals[t[1]] == t[2])
            if mean < 0 or mean > 1:
                raise GenerationError(f"Bernoulli mean outside [0,1] in mechanism {m.vertex!r}")
            p *= mean if vals[m.vertex] == 1 else (1 - mean)
        joint[combo] = p
    return joint


def binary_exact_tables(spec: ScmSpec):
    """Exact frequency tables for the observed binary variables.

    Gives the infinite-data versions of the tables the nonparametric
    estimators use; keyed like the data-fitted tables.
    """
    from .fit import FreqTable

    joint = binary_exact_joint(spec)
    names = list(spec.vertices)

    def marginal(targets: Sequence[str]) -> Dict[Tuple[int, ...], Fraction]:
        ti = [names.index(t) for t in targets]
        out: Dict[Tuple[int, ...], Fraction] = {}
        for combo, p in joint.items():
            key = tuple(combo[j] for j in ti)
            out[key] = out.get(key, Fraction(0)) + p
        return out

    def cond_table(target: str, given: Sequence[str]) -> FreqTable:
        m = marginal(list(given) + [target])
        cells: Dict[Tuple, Dict] = {}
        for key, p in m.items():
            g, t = key[:-1], key[-1]
            cells.setdefault(g, {})[t] = cells.setdefault(g, {}).get(t, Fraction(0)) + p
        probs = {}
        for g, dist in cells.items():
            tot = sum(dist.values())
            if tot == 0:
                probs[g] = None
            else:
                probs[g] = {t: p / tot for t, p in dist.items()}
        return FreqTable(target=target, given=tuple(given), probs=probs, counts=None)

    return {
        "W": cond_table("W", ()),
        "Z|W": cond_table("Z", ("W",)),
        "X|Z,W": cond_table("X", ("Z", "W")),
        "Y|X,Z,W": cond_table("Y", ("X", "Z", "W")),
        "Z": cond_table("Z", ()),
        "Z|X": cond_table("Z", ("X",)),
    }


# -- built-in model catalog ------------------------------------------------

def binary_scm() -> ScmSpec:
    mech = (
        Mechanism("V", "bernoulli", 0.5),
        Mechanism("U", "bernoulli", 0.5),
        Mechanism("W", "bernoulli", 0.0, (("lin", "U", 0.4), ("lin", "V", 0.4))),
        Mechanism("Z", "bernoulli", 0.4, (("lin", "W", 0.4),)),
        Mechanism("X", "bernoulli", 0.0, (("lin", "Z", 0.4), ("lin", "V", 0.4))),
        Mechanism("Y", "bernoulli", 0.0, (("lin", "X", 0.4), ("lin", "U", 0.4))),
    )
    types = {v: "binary" for v in "WZXY"}
    return ScmSpec("binary-eq9", mech, ("W", "Z", "X", "Y"), types)


def linear_gaussian_scm(
    mu_u=1.0, mu_v=1.0, sigma_u=1.0, sigma_v=1.0,
    alpha_w=1.0, beta_wu=1.0, beta_wv=1.0, sigma_w=1.0,
    alpha_z=1.0, beta_zw=1.0, sigma_z=1.0,
    alpha_x=1.0, beta_xz=1.0, beta_xv=1.0, sigma_x=1.0,
    alpha_y=1.0, beta_yx=1.0, beta_yu=1.0, sigma_y=0.1,
    name="gauss-eq10",
) -> ScmSpec:
    mech = (
        Mechanism("U", "normal", mu_u, (), {"sd": sigma_u}),
        Mechanism("V", "normal", mu_v, (), {"sd": sigma_v}),
        Mechanism("W", "normal", alpha_w, (("lin", "U", beta_wu), ("lin", "V", beta_wv)), {"sd": sigma_w}),
        Mechanism("Z", "normal", alpha_z, (("lin", "W", beta_zw),), {"sd": sigma_z}),
        Mechanism("X", "normal", alpha_x, (("lin", "Z", beta_xz), ("lin", "V", beta_xv)), {"sd": sigma_x}),
        Mechanism("Y", "normal", alpha_y, (("lin", "X", beta_yx), ("lin", "U", beta_yu)), {"sd": sigma_y}),
    )
    types = {v: "continuous" for v in "WZXY"}
    return ScmSpec(name, mech, ("W", "Z", "X", "Y"), types)


def nongaussian_scm() -> ScmSpec:
    # The GPA mean uses a logistic link: the printed exponential link would
    # exceed 1 at typical test-score values, which no Beta mean can.
    mech = (
        Mechanism("U1", "normal", 0.0, (), {"sd": 1.0}),
        Mechanism("U2", "normal", 0.0, (), {"sd": 1.0}),
        Mechanism("U3", "normal", 0.0, (), {"sd": 1.0}),
        Mechanism("G", "bernoulli", 0.5),
        Mechanism("S", "normal", 36.0, (("lin", "U3", 3.0),), {"sd": 5.0}),
        Mechanism(
            "W", "cutpoints", 0.0,
            (("lin", "U1", 1.0), ("lin", "U2", 1.0), ("lin", "U3", 1.0)),
            {"cutpoints": [-1.1, 1.9], "levels": [1, 2, 3]},
        ),
        Mechanism(
            "Z", "beta", -1.2,
            (("lin", "G", 0.4), ("lin", "S", 0.05), ("ind", "W", 2, 0.1), ("ind", "W", 3, 0.3)),
            {"phi_intercept": 2.2, "phi_terms": (("lin", "G", 0.2),)},
        ),
        Mechanism(
            "X", "seqlogit", 0.0,
            (("lin", "G", -0.5), ("lin", "S", 0.04), ("lin", "Z", 13.5), ("lin", "U2", 2.0)),
            {"thresholds": [12.5, 14.0]},
        ),
        Mechanism(
            "Y", "gamma", 9.3,
            (("lin", "S", 0.02), ("lin", "G", -0.5), ("ind", "X", 1, 0.2), ("ind", "X", 2, 0.5), ("lin", "U1", 0.4)),
            {"shape": 10000.0},
        ),
    )
    types = {"Y": "positive", "X": "ordinal", "Z": "unit", "W": "ordinal", "S": "continuous", "G": "binary"}
    return ScmSpec("nongauss-fsd", mech, ("Y", "X", "Z", "W", "S", "G"), types)


BUILTIN_SCMS = ("binary-eq9", "gauss-eq10", "gauss-eq10-smallsx", "nongauss-fsd")


def get_scm(key: str) -> ScmSpec:
    if key == "binary-eq9":
        return binary_scm()
    if key == "gauss-eq10":
        return linear_gaussian_scm()
    if key == "gauss-eq10-smallsx":
        return linear_gaussian_scm(sigma_x=0.1, name="gauss-eq10-smallsx")
    if key == "nongauss-fsd":
        return nongaussian_scm()
    raise GenerationError(f"unknown SCM key {key!r}; available: {', '.join(BUILTIN_SCMS)}")
