"""Estimation of the observational distributions used by the functionals.

Three routes, matching the three data-generating models:

* frequency tables with exact rational cell probabilities (binary data),
* least squares plus the flat-prior conjugate posterior (Gaussian data),
* per-component maximum likelihood plus adaptive random-walk Metropolis
  for the GLM family of the education/income model.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats
from scipy.special import expit, gammaln, logit


class FitError(RuntimeError):
    """Raised when a model component cannot be fitted."""

    def __init__(self, component: str, detail: str = ""):
        self.component = component
        super().__init__(f"fit failed for component {component!r}: {detail}")


class RankDeficiencyError(FitError):
    pass


class UndefinedCellError(KeyError):
    """A required frequency-table cell has no observations."""

    def __init__(self, target: str, given: Tuple[str, ...], cell: Tuple):
        self.target = target
        self.given = given
        self.cell = cell
        super().__init__(f"undefined cell {dict(zip(given, cell))} in table P({target}|{','.join(given)})")


# -- nonparametric frequency tables ---------------------------------------

@dataclass
class FreqTable:
    """Conditional probability table with exact rational probabilities.

    ``probs`` maps each conditioning-value tuple to either a dict of
    target-value -> Fraction, or None for a cell with no observations
    (undefined, never imputed).
    """

    target: str
    given: Tuple[str, ...]
    probs: Dict[Tuple, Optional[Dict]]
    counts: Optional[Dict[Tuple, Dict]] = None

    def defined(self, cell: Tuple = ()) -> bool:
        return self.probs.get(tuple(cell)) is not None

    def dist(self, cell: Tuple = ()) -> Dict:
        d = self.probs.get(tuple(cell))
        if d is None:
            raise UndefinedCellError(self.target, self.given, tuple(cell))
        return d

    def prob(self, value, cell: Tuple = ()) -> Fraction:
        return self.dist(cell).get(value, Fraction(0))

    def support(self) -> Tuple:
        vals = set()
        for d in self.probs.values():
            if d:
                vals.update(d)
        return tuple(sorted(vals))


def _domain(data, col: str) -> Tuple:
    if data.schema.get(col) == "binary":
        return (0.0, 1.0)
    return tuple(sorted(np.unique(data.df[col].to_numpy())))


def fit_freq(data, target: str, given: Sequence[str] = ()) -> FreqTable:
    """Empirical conditional table; zero-count conditioning cells are
    flagged undefined rather than imputed."""
    given = tuple(given)
    cols = [data.df[c].to_numpy() for c in given]
    tvals = data.df[target].to_numpy()
    domains = [_domain(data, c) for c in given]
    probs: Dict[Tuple, Optional[Dict]] = {}
    counts: Dict[Tuple, Dict] = {}
    for cell in itertools.product(*domains) if given else [()]:
        mask = np.ones(len(tvals), dtype=bool)
        for c, v in zip(cols, cell):
            mask &= c == v
        sub = tvals[mask]
        if sub.size == 0:
            probs[cell] = None
            counts[cell] = {}
            continue
        vals, cts = np.unique(sub, return_counts=True)
        counts[cell] = {float(v): int(c) for v, c in zip(vals, cts)}
        total = int(sub.size)
        probs[cell] = {float(v): Fraction(int(c), total) for v, c in zip(vals, cts)}
    return FreqTable(target=target, given=given, probs=probs, counts=counts)


# -- Gaussian observational model ------------------------------------------

@dataclass(frozen=True)
class GaussianObsModel:
    """Linear-Gaussian observational blocks: W marginal, X | Z, W and
    Y | X, Z, W regressions."""

    a_w: float
    s2_w: float
    a_x: float
    b_xz: float
    b_xw: float
    s2_x: float
    a_y: float
    b_yx: float
    b_yz: float
    b_yw: float
    s2_y: float

    FIELDS = ("a_w", "s2_w", "a_x", "b_xz", "b_xw", "s2_x", "a_y", "b_yx", "b_yz", "b_yw", "s2_y")

    def __post_init__(self):
        if min(self.s2_w, self.s2_x, self.s2_y) <= 0:
            raise FitError("gaussian", "nonpositive residual variance")

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in self.FIELDS])

    @classmethod
    def from_vector(cls, v) -> "GaussianObsModel":
        return cls(**dict(zip(cls.FIELDS, map(float, v))))

    def to_json(self) -> str:
        return json.dumps({f: getattr(self, f) for f in self.FIELDS})


@dataclass(frozen=True)
class LinearBlock:
    """One least-squares regression block with what the conjugate
    posterior needs."""

    names: Tuple[str, ...]  # intercept first
    coef: np.ndarray
    s2: float
    xtx_inv: np.ndarray
    dof: int
    sse: float


def _ols(X: np.ndarray, y: np.ndarray, names: Tuple[str, ...], component: str) -> LinearBlock:
    n, p = X.shape
    if n <= p + 2:
        raise FitError(component, f"need n > p + 2 (n={n}, p={p})")
    xtx = X.T @ X
    try:
        xtx_inv = np.linalg.inv(xtx)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(component, "rank-deficient design")
    if np.linalg.cond(xtx) > 1e12:
        raise RankDeficiencyError(component, "rank-deficient design")
    coef = xtx_inv @ (X.T @ y)
    resid = y - X @ coef
    sse = float(resid @ resid)
    dof = n - p
    return LinearBlock(names, coef, sse / dof, xtx_inv, dof, sse)


def _gaussian_blocks(data) -> Dict[str, LinearBlock]:
    df = data.df
    n = len(df)
    one = np.ones(n)
    w = df["W"].to_numpy()
    z = df["Z"].to_numpy()
    x = df["X"].to_numpy()
    y = df["Y"].to_numpy()
    return {
        "W": _ols(one[:, None], w, ("a_w",), "W"),
        "X": _ols(np.column_stack([one, z, w]), x, ("a_x", "b_xz", "b_xw"), "X|Z,W"),
        "Y": _ols(np.column_stack([one, x, z, w]), y, ("a_y", "b_yx", "b_yz", "b_yw"), "Y|X,Z,W"),
    }


def _model_from_blocks(blocks: Dict[str, LinearBlock]) -> GaussianObsModel:
    bw, bx, by = blocks["W"], blocks["X"], blocks["Y"]
    return GaussianObsModel(
        a_w=float(bw.coef[0]), s2_w=bw.s2,
        a_x=float(bx.coef[0]), b_xz=float(bx.coef[1]), b_xw=float(bx.coef[2]), s2_x=bx.s2,
        a_y=float(by.coef[0]), b_yx=float(by.coef[1]), b_yz=float(by.coef[2]), b_yw=float(by.coef[3]),
        s2_y=by.s2,
    )


def fit_gaussian(data) -> GaussianObsModel:
    return _model_from_blocks(_gaussian_blocks(data))


def fit_gaussian_constrained(data) -> GaussianObsModel:
    """Fit with b_yz tied so the trapdoor coefficient of the closed-form
    mean is exactly zero.

    The tie b_yz = c * b_yw with c = b_xz * b_xw * s2_w / (b_xw^2 s2_w + s2_x)
    turns the Y block into a regression on (x, w + c z).
    """
    blocks = _gaussian_blocks(data)
    base = _model_from_blocks(blocks)
    c = base.b_xz * base.b_xw * base.s2_w / (base.b_xw**2 * base.s2_w + base.s2_x)
    df = data.df
    one = np.ones(len(df))
    wz = df["W"].to_numpy() + c * df["Z"].to_numpy()
    yb = _ols(
        np.column_stack([one, df["X"].to_numpy(), wz]),
        df["Y"].to_numpy(),
        ("a_y", "b_yx", "b_yw"),
        "Y|X,Z,W (constrained)",
    )
    b_yw = float(yb.coef[2])
    return GaussianObsModel(
        a_w=base.a_w, s2_w=base.s2_w,
        a_x=base.a_x, b_xz=base.b_xz, b_xw=base.b_xw, s2_x=base.s2_x,
        a_y=float(yb.coef[0]), b_yx=float(yb.coef[1]),
        b_yz=c * b_yw, b_yw=b_yw, s2_y=yb.s2,
    )


@dataclass(frozen=True)
class BackdoorGaussianModel:
    """Fits of Y | X, W and the W marginal, for graphs where W is an
    admissible adjustment set."""

    a_w: float
    s2_w: float
    a_y: float
    b_yx: float
    b_yw: float
    s2_y: float


def fit_backdoor_gaussian(data) -> BackdoorGaussianModel:
    df = data.df
    one = np.ones(len(df))
    bw = _ols(one[:, None], df["W"].to_numpy(), ("a_w",), "W")
    by = _ols(
        np.column_stack([one, df["X"].to_numpy(), df["W"].to_numpy()]),
        df["Y"].to_numpy(),
        ("a_y", "b_yx", "b_yw"),
        "Y|X,W",
    )
    return BackdoorGaussianModel(
        a_w=float(bw.coef[0]), s2_w=bw.s2,
        a_y=float(by.coef[0]), b_yx=float(by.coef[1]), b_yw=float(by.coef[2]), s2_y=by.s2,
    )


# -- posterior draws ---------------------------------------------------------

@dataclass
class PosteriorDraws:
    names: Tuple[str, ...]
    matrix: np.ndarray  # draws x parameters
    diagnostics: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 1:
            raise FitError("posterior", "need at least one draw")
        if not np.all(np.isfinite(self.matrix)):
            raise FitError("posterior", "non-finite posterior draw")

    @property
    def n_draws(self) -> int:
        return int(self.matrix.shape[0])

    def column(self, name: str) -> np.ndarray:
        return self.matrix[:, self.names.index(name)]

    def to_json(self) -> str:
        return json.dumps({
            "names": list(self.names),
            "draws": self.matrix.tolist(),
            "diagnostics": {k: v for k, v in self.diagnostics.items() if np.isscalar(v)},
        })


def _draw_block(block: LinearBlock, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Flat-prior (p(beta, s2) ~ 1/s2) conjugate draws: s2 from its scaled
    inverse chi-square, beta | s2 Gaussian.  Columns: coefs then s2."""
    s2 = block.sse / rng.chisquare(block.dof, size=n_draws)
    chol = np.linalg.cholesky(block.xtx_inv)
    zs = rng.standard_normal((n_draws, len(block.coef)))
    betas = block.coef + np.sqrt(s2)[:, None] * (zs @ chol.T)
    return np.column_stack([betas, s2])


def draw_gaussian_posterior(data, n_draws: int, seed: int) -> PosteriorDraws:
    """Exact flat-prior posterior for the three Gaussian blocks."""
    rng = np.random.default_rng(seed)
    blocks = _gaussian_blocks(data)
    bw = _draw_block(blocks["W"], n_draws, rng)
    bx = _draw_block(blocks["X"], n_draws, rng)
    by = _draw_block(blocks["Y"], n_draws, rng)
    matrix = np.column_stack([
        bw[:, 0], bw[:, 1],
        bx[:, 0], bx[:, 1], bx[:, 2], bx[:, 3],
        by[:, 0], by[:, 1], by[:, 2], by[:, 3], by[:, 4],
    ])
    return PosteriorDraws(GaussianObsModel.FIELDS, matrix)


def gaussian_models_from_draws(draws: PosteriorDraws):
    for row in draws.matrix[:, [draws.names.index(f) for f in GaussianObsModel.FIELDS]]:
        yield GaussianObsModel.from_vector(row)


# -- auxiliary trapdoor-variable models -------------------------------------

@dataclass(frozen=True)
class LinearZModel:
    """Least-squares fit of Z on a conditioning set (possibly empty)."""

    given: Tuple[str, ...]
    coef: np.ndarray  # intercept first
    s2: float

    def mean(self, context: Dict[str, float]):
        out = self.coef[0]
        for c, name in zip(self.coef[1:], self.given):
            out = out + float(c) * np.asarray(context[name])
        return out if np.ndim(out) else float(out)

    def draw(self, context: Dict[str, float], rng: np.random.Generator, size=None):
        return rng.normal(self.mean(context), math.sqrt(self.s2), size=size)


def fit_linear_z(data, given: Sequence[str] = ()) -> LinearZModel:
    given = tuple(given)
    df = data.df
    X = np.column_stack([np.ones(len(df))] + [df[g].to_numpy() for g in given])
    block = _ols(X, df["Z"].to_numpy(), ("a_z",) + tuple(f"b_z{g}" for g in given), "Z aux")
    return LinearZModel(given, block.coef, block.s2)


def draw_linear_z_posterior(data, given: Sequence[str], n_draws: int, seed: int) -> PosteriorDraws:
    given = tuple(given)
    rng = np.random.default_rng(seed)
    df = data.df
    X = np.column_stack([np.ones(len(df))] + [df[g].to_numpy() for g in given])
    block = _ols(X, df["Z"].to_numpy(), ("a_z",) + tuple(f"b_z{g}" for g in given), "Z aux")
    mat = _draw_block(block, n_draws, rng)
    names = ("a_z",) + tuple(f"b_z{g}" for g in given) + ("s2_z",)
    return PosteriorDraws(names, mat)


def linear_z_from_draw(draws: PosteriorDraws, i: int, given: Tuple[str, ...]) -> LinearZModel:
    row = draws.matrix[i]
    return LinearZModel(given, row[:-1], float(row[-1]))


# -- adaptive random-walk Metropolis ----------------------------------------

def adaptive_rwm(
    logpost,
    x0: np.ndarray,
    n_draws: int,
    burn_in: int,
    rng: np.random.Generator,
    thin: int = 1,
    target: float = 0.234,
    init_scale: float = 0.1,
):
    """Diagonal random-walk Metropolis with Robbins-Monro scale adaptation
    toward the target acceptance rate during burn-in, frozen afterwards."""
    x = np.array(x0, dtype=float)
    lp = logpost(x)
    if not np.isfinite(lp):
        raise FitError("mcmc", "non-finite log posterior at start")
    d = x.size
    log_scale = math.log(init_scale)
    total = burn_in + n_draws * thin
    draws = np.empty((n_draws, d))
    kept = 0
    accepted_post = 0
    proposals_post = 0
    for t in range(total):
        prop = x + math.exp(log_scale) * rng.standard_normal(d)
        lp_prop = logpost(prop)
        alpha = min(1.0, math.exp(min(0.0, lp_prop - lp))) if np.isfinite(lp_prop) else 0.0
        if rng.random() < alpha:
            x, lp = prop, lp_prop
        if t < burn_in:
            log_scale += (alpha - target) / (t + 1) ** 0.6
        else:
            proposals_post += 1
            accepted_post += alpha
            k = t - burn_in
            if (k + 1) % thin == 0:
                draws[kept] = x
                kept += 1
    rate = accepted_post / max(proposals_post, 1)
    return draws, float(rate)


# -- GLM components for the education/income family -------------------------

def _mono3(level: np.ndarray, b: float, theta: float, base: float):
    """Monotonic effect of a 3-level ordinal: 0, b*z1, b with z1=expit(theta);
    ``base`` is the lowest level code."""
    z1 = expit(theta)
    lv = np.asarray(level, dtype=float) - base
    return b * (np.clip(lv, 0, 1) * z1 + np.clip(lv - 1, 0, 1) * (1 - z1))


@dataclass(frozen=True)
class CategoricalFit:
    levels: Tuple[float, ...]
    probs: np.ndarray

    def logp(self, w: np.ndarray) -> np.ndarray:
        lut = {lv: math.log(max(p, 1e-300)) for lv, p in zip(self.levels, self.probs)}
        return np.array([lut[v] for v in np.asarray(w, dtype=float)])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(np.asarray(self.levels, dtype=float), size=n, p=self.probs)


@dataclass(frozen=True)
class BernoulliFit:
    p: float

    def logp(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        return g * math.log(max(self.p, 1e-300)) + (1 - g) * math.log(max(1 - self.p, 1e-300))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(n) < self.p).astype(float)


@dataclass(frozen=True)
class NormalMarginalFit:
    mean: float
    s2: float

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, math.sqrt(self.s2), size=n)


@dataclass(frozen=True)
class NormalByGroupFit:
    """S | W: per-level means, a shared residual variance."""

    levels: Tuple[float, ...]
    means: Tuple[float, ...]
    s2: float

    def logp(self, s: np.ndarray, w: np.ndarray) -> np.ndarray:
        mu = np.select(
            [np.asarray(w, dtype=float) == lv for lv in self.levels],
            self.means,
        )
        return stats.norm.logpdf(np.asarray(s, dtype=float), mu, math.sqrt(self.s2))


@dataclass(frozen=True)
class SeqLogitFit:
    """Sequential (continuation-ratio) model for X in {0,1,2} given
    z, w, s, g, with a monotonic effect of W."""

    params: np.ndarray  # tau1, tau2, b_z, b_s, b_g, b_w, theta_w

    N_PARAMS = 7

    def _eta(self, z, w, s, g):
        tau1, tau2, b_z, b_s, b_g, b_w, theta_w = self.params
        eta = b_z * np.asarray(z, float) + b_s * np.asarray(s, float) + b_g * np.asarray(g, float)
        eta = eta + _mono3(np.asarray(w, float), b_w, theta_w, base=1.0)
        return eta, tau1, tau2

    def level_probs(self, z, w, s, g) -> np.ndarray:
        """Shape (..., 3): probabilities of X = 0, 1, 2."""
        eta, tau1, tau2 = self._eta(z, w, s, g)
        p1 = expit(eta - tau1)
        p2 = expit(eta - tau2)
        return np.stack([1 - p1, p1 * (1 - p2), p1 * p2], axis=-1)

    def logp(self, x, z, w, s, g) -> np.ndarray:
        probs = self.level_probs(z, w, s, g)
        x = np.asarray(x, dtype=int)
        picked = np.take_along_axis(probs, x[..., None], axis=-1)[..., 0]
        return np.log(np.clip(picked, 1e-300, None))


@dataclass(frozen=True)
class GammaRegFit:
    """Gamma log-link regression for Y given x, z, w, s, g with monotonic
    effects of the two ordinals."""

    params: np.ndarray  # in PARAM_NAMES order

    PARAM_NAMES = ("log_shape", "b0", "b_s", "b_g", "b_z", "b_x", "theta_x", "b_w", "theta_w")
    N_PARAMS = 9

    def param(self, name: str) -> float:
        return float(self.params[self.PARAM_NAMES.index(name)])

    def mu(self, x, z, w, s, g) -> np.ndarray:
        _, b0, b_s, b_g, b_z, b_x, theta_x, b_w, theta_w = self.params
        eta = (
            b0
            + b_s * np.asarray(s, float)
            + b_g * np.asarray(g, float)
            + b_z * np.asarray(z, float)
            + _mono3(np.asarray(x, float), b_x, theta_x, base=0.0)
            + _mono3(np.asarray(w, float), b_w, theta_w, base=1.0)
        )
        return np.exp(eta)

    @property
    def shape(self) -> float:
        return math.exp(self.params[0])

    def logp(self, y, x, z, w, s, g) -> np.ndarray:
        a = self.shape
        mu = self.mu(x, z, w, s, g)
        y = np.asarray(y, dtype=float)
        rate = a / mu
        return a * np.log(rate) - gammaln(a) + (a - 1) * np.log(y) - rate * y

    def sample(self, x, z, w, s, g, rng: np.random.Generator) -> np.ndarray:
        a = self.shape
        mu = self.mu(x, z, w, s, g)
        return rng.gamma(a, mu / a)

    def monotonic_effects(self):
        """Cumulative ordinal effect of the three exposure levels."""
        b_x = self.param("b_x")
        return 0.0, b_x * expit(self.param("theta_x")), b_x


@dataclass(frozen=True)
class BetaRegFit:
    """Beta regression for the trapdoor variable: logit mean on the
    conditioning features, log precision intercept-only.

    Conditioning variables: X enters as level indicators, S and G linearly.
    """

    given: Tuple[str, ...]
    params: np.ndarray  # b0, [coefs per feature...], log_phi

    @staticmethod
    def feature_names(given: Tuple[str, ...]):
        names = []
        for v in given:
            if v == "X":
                names += ["x1", "x2"]
            else:
                names.append(v.lower())
        return tuple(names)

    def _features(self, context: Dict[str, float]) -> np.ndarray:
        feats = []
        for v in self.given:
            if v == "X":
                x = np.asarray(context["X"], dtype=float)
                feats += [(x == 1).astype(float), (x == 2).astype(float)]
            else:
                feats.append(np.asarray(context[v], dtype=float))
        if not feats:
            return np.zeros(())
        return np.stack(np.broadcast_arrays(*feats), axis=-1)

    def mu_phi(self, context: Dict[str, float]):
        b0 = self.params[0]
        log_phi = self.params[-1]
        coefs = self.params[1:-1]
        feats = self._features(context)
        eta = b0 + (feats @ coefs if coefs.size else 0.0)
        return expit(eta), math.exp(log_phi)

    def mean(self, context: Dict[str, float]):
        mu, _ = self.mu_phi(context)
        return mu if np.ndim(mu) else float(mu)

    def draw(self, context: Dict[str, float], rng: np.random.Generator, size=None):
        mu, phi = self.mu_phi(context)
        return rng.beta(mu * phi, (1 - mu) * phi, size=size)

    def logp(self, z, context: Dict[str, float]) -> np.ndarray:
        mu, phi = self.mu_phi(context)
        return stats.beta.logpdf(np.asarray(z, dtype=float), mu * phi, (1 - mu) * phi)


@dataclass
class GlmObsModel:
    """Fitted components of the non-Gaussian observational model."""

    w: CategoricalFit
    g: BernoulliFit
    s_marginal: NormalMarginalFit
    s_given_w: NormalByGroupFit
    x: SeqLogitFit
    y: GammaRegFit
    z_aux: Dict[Tuple[str, ...], BetaRegFit] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "w": {"levels": list(self.w.levels), "probs": self.w.probs.tolist()},
            "g": {"p": self.g.p},
            "s_marginal": {"mean": self.s_marginal.mean, "s2": self.s_marginal.s2},
            "s_given_w": {
                "levels": list(self.s_given_w.levels),
                "means": list(self.s_given_w.means),
                "s2": self.s_given_w.s2,
            },
            "x": self.x.params.tolist(),
            "y": self.y.params.tolist(),
            "z_aux": {",".join(k): v.params.tolist() for k, v in self.z_aux.items()},
        })


def _maximize(negll, x0: np.ndarray, component: str) -> np.ndarray:
    res = optimize.minimize(negll, x0, method="BFGS")
    if not np.isfinite(res.fun):
        raise FitError(component, "non-finite objective at optimum")
    if not res.success:
        res2 = optimize.minimize(negll, res.x, method="Nelder-Mead",
                                 options={"maxiter": 5000, "xatol": 1e-8, "fatol": 1e-10})
        if np.isfinite(res2.fun) and res2.fun <= res.fun:
            res = res2
    if not np.all(np.isfinite(res.x)):
        raise FitError(component, "optimizer diverged")
    return res.x


def _seqlogit_negll(df):
    x = df["X"].to_numpy(int)
    z = df["Z"].to_numpy()
    w = df["W"].to_numpy()
    s = df["S"].to_numpy()
    g = df["G"].to_numpy()

    def negll(u):
        return -float(np.sum(SeqLogitFit(np.asarray(u)).logp(x, z, w, s, g)))

    return negll


def _gamma_negll(df):
    y = df["Y"].to_numpy()
    x = df["X"].to_numpy()
    z = df["Z"].to_numpy()
    w = df["W"].to_numpy()
    s = df["S"].to_numpy()
    g = df["G"].to_numpy()

    def negll(u):
        with np.errstate(over="ignore"):
            lp = GammaRegFit(np.asarray(u)).logp(y, x, z, w, s, g)
        if not np.all(np.isfinite(lp)):
            return 1e12
        return -float(np.sum(lp))

    return negll


def _beta_negll(df, given: Tuple[str, ...]):
    z = df["Z"].to_numpy()
    context = {v: df[v].to_numpy() for v in given}

    def negll(u):
        with np.errstate(over="ignore", divide="ignore"):
            lp = BetaRegFit(given, np.asarray(u)).logp(z, context)
        if not np.all(np.isfinite(lp)):
            return 1e12
        return -float(np.sum(lp))

    return negll


def _seqlogit_start(df) -> np.ndarray:
    # thresholds from marginal level frequencies, covariate slopes at zero
    x = df["X"].to_numpy()
    p1 = max(min(np.mean(x >= 1), 1 - 1e-3), 1e-3)
    p2 = max(min(np.mean(x[x >= 1] >= 2) if np.any(x >= 1) else 0.5, 1 - 1e-3), 1e-3)
    return np.array([-logit(p1), -logit(p2), 0.0, 0.0, 0.0, 0.0, 0.0])


def _gamma_start(df) -> np.ndarray:
    ly = np.log(df["Y"].to_numpy())
    shape0 = 1.0 / max(np.var(ly), 1e-4)
    return np.array([math.log(shape0), float(np.mean(ly)), 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0])


def _beta_start(df, given: Tuple[str, ...]) -> np.ndarray:
    z = df["Z"].to_numpy()
    m = float(np.mean(z))
    v = float(np.var(z))
    phi0 = max(m * (1 - m) / max(v, 1e-6) - 1, 1.1)
    k = len(BetaRegFit.feature_names(given))
    return np.concatenate([[logit(m)], np.zeros(k), [math.log(phi0)]])


def fit_beta_z(data, given: Sequence[str] = ()) -> BetaRegFit:
    given = tuple(given)
    negll = _beta_negll(data.df, given)
    u = _maximize(negll, _beta_start(data.df, given), f"Z|{','.join(given) or 'marginal'}")
    return BetaRegFit(given, u)


def fit_glm(data, z_given: Sequence[Sequence[str]] = ()) -> GlmObsModel:
    """ML fit of every component; ``z_given`` lists the trapdoor
    conditioning sets whose auxiliary Beta fits should be included."""
    df = data.df
    w = df["W"].to_numpy()
    levels = tuple(float(v) for v in sorted(np.unique(w)))
    probs = np.array([np.mean(w == lv) for lv in levels])
    g = float(np.mean(df["G"].to_numpy()))
    s = df["S"].to_numpy()
    s_marg = NormalMarginalFit(float(np.mean(s)), float(np.var(s, ddof=1)))
    means = tuple(float(np.mean(s[w == lv])) for lv in levels)
    resid = s - np.select([w == lv for lv in levels], means)
    s2_shared = float(resid @ resid / (len(s) - len(levels)))
    s_by_w = NormalByGroupFit(levels, means, s2_shared)
    x_fit = SeqLogitFit(_maximize(_seqlogit_negll(df), _seqlogit_start(df), "X sequential"))
    y_fit = GammaRegFit(_maximize(_gamma_negll(df), _gamma_start(df), "Y gamma"))
    z_aux = {tuple(gv): fit_beta_z(data, gv) for gv in z_given}
    return GlmObsModel(
        w=CategoricalFit(levels, probs),
        g=BernoulliFit(g),
        s_marginal=s_marg,
        s_given_w=s_by_w,
        x=x_fit,
        y=y_fit,
        z_aux=z_aux,
    )


def draw_glm_posterior(
    data,
    n_draws: int,
    burn_in: int,
    seed: int,
    z_given: Sequence[Sequence[str]] = (),
    thin: int = 1,
) -> "GlmPosterior":
    """Posterior draws for every component: adaptive Metropolis for the
    non-conjugate blocks, exact conjugate draws for the counting and
    Gaussian blocks."""
    rng = np.random.default_rng(seed)
    ml = fit_glm(data, z_given=z_given)
    df = data.df
    n = len(df)
    w = df["W"].to_numpy()
    levels = ml.w.levels

    # W: Dirichlet(counts + 1); G: Beta(c1+1, c0+1)
    w_counts = np.array([np.sum(w == lv) for lv in levels], dtype=float)
    w_draws = rng.dirichlet(w_counts + 1.0, size=n_draws)
    g1 = float(np.sum(df["G"].to_numpy()))
    g_draws = rng.beta(g1 + 1.0, n - g1 + 1.0, size=n_draws)

    # S marginal and S | W: flat-prior Gaussian conjugate
    s = df["S"].to_numpy()
    one = np.ones(n)
    s_marg_block = _ols(one[:, None], s, ("mean",), "S marginal")
    s_marg_draws = _draw_block(s_marg_block, n_draws, rng)
    design = np.column_stack([(w == lv).astype(float) for lv in levels])
    s_w_block = _ols(design, s, tuple(f"m{int(lv)}" for lv in levels), "S|W")
    s_w_draws = _draw_block(s_w_block, n_draws, rng)

    diagnostics = {}
    x_negll = _seqlogit_negll(df)
    x_draws, x_rate = adaptive_rwm(
        lambda u: -x_negll(u), ml.x.params, n_draws, burn_in, rng, thin=thin
    )
    diagnostics["accept_x"] = x_rate
    y_negll = _gamma_negll(df)
    y_draws, y_rate = adaptive_rwm(
        lambda u: -y_negll(u), ml.y.params, n_draws, burn_in, rng, thin=thin
    )
    diagnostics["accept_y"] = y_rate
    z_draws = {}
    for gv in z_given:
        gv = tuple(gv)
        negll = _beta_negll(df, gv)
        zd, zr = adaptive_rwm(
            lambda u: -negll(u), ml.z_aux[gv].params, n_draws, burn_in, rng, thin=thin
        )
        diagnostics[f"accept_z|{','.join(gv)}"] = zr
        z_draws[gv] = zd
    return GlmPosterior(
        levels=levels,
        w=w_draws,
        g=g_draws,
        s_marginal=s_marg_draws,
        s_given_w=s_w_draws,
        x=x_draws,
        y=y_draws,
        z_aux=z_draws,
        diagnostics=diagnostics,
    )


@dataclass
class GlmPosterior:
    """Per-component posterior draw arrays for the GLM model."""

    levels: Tuple[float, ...]
    w: np.ndarray
    g: np.ndarray
    s_marginal: np.ndarray
    s_given_w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z_aux: Dict[Tuple[str, ...], np.ndarray]
    diagnostics: Dict

    @property
    def n_draws(self) -> int:
        return int(self.x.shape[0])

    def model(self, i: int) -> GlmObsModel:
        k = len(self.levels)
        return GlmObsModel(
            w=CategoricalFit(self.levels, self.w[i]),
            g=BernoulliFit(float(self.g[i])),
            s_marginal=NormalMarginalFit(float(self.s_marginal[i, 0]), float(self.s_marginal[i, 1])),
            s_given_w=NormalByGroupFit(
                self.levels,
                tuple(float(v) for v in self.s_given_w[i, :k]),
                float(self.s_given_w[i, k]),
            ),
            x=SeqLogitFit(self.x[i]),
            y=GammaRegFit(self.y[i]),
            z_aux={gv: BetaRegFit(gv, draws[i]) for gv, draws in self.z_aux.items()},
        )
