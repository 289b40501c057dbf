"""Weighted Monte Carlo sampling from the fitted interventional
distribution, for functionals without usable closed forms.

The sampler draws N outer iterations (covariate block and trapdoor value)
and M inner iterations (W and Y), weights each draw by the fitted
densities that appear in the functional's denominator, and self-normalizes
the weights so they sum to one.  Weights are computed in log space.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .effects import StrategyError, TrapdoorStrategy
from .fit import (
    FitError,
    GaussianObsModel,
    GlmObsModel,
    LinearZModel,
    draw_gaussian_posterior,
    draw_glm_posterior,
    draw_linear_z_posterior,
    gaussian_models_from_draws,
    linear_z_from_draw,
)


class WeightDegeneracyError(RuntimeError):
    """All importance weights vanished or became non-finite."""

    def __init__(self, detail: str, z_values=None, ess: float = 0.0):
        self.z_values = z_values
        self.ess = ess
        super().__init__(detail)


ESS_WARN_FRACTION = 0.01


@dataclass
class WeightedInterventionalSample:
    """N x M outcome draws with self-normalized importance weights."""

    y: np.ndarray
    weights: np.ndarray
    z_values: np.ndarray
    b_values: Dict[str, np.ndarray]
    log_weight_max: float
    N: int
    M: int

    def __post_init__(self):
        if self.y.shape != (self.N, self.M) or self.weights.shape != (self.N, self.M):
            raise ValueError("y and weights must have shape (N, M)")
        total = float(self.weights.sum())
        if not np.isfinite(total) or abs(total - 1.0) > 1e-12:
            raise ValueError(f"normalized weights must sum to 1, got {total}")
        if np.any(self.weights < 0):
            raise ValueError("negative weight")

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def to_json(self) -> str:
        return json.dumps({
            "N": self.N,
            "M": self.M,
            "weighted_mean": weighted_mean(self),
            "mcse": mcse(self),
            "ess": self.ess,
            "log_weight_max": self.log_weight_max,
        })


def weighted_mean(s: WeightedInterventionalSample) -> float:
    return float(np.sum(s.weights * s.y))


def mcse(s: WeightedInterventionalSample) -> float:
    est = weighted_mean(s)
    return float(np.sqrt(np.sum((s.weights * (s.y - est)) ** 2)))


def weighted_quantiles(s: WeightedInterventionalSample, probs) -> Dict[float, float]:
    order = np.argsort(s.y, axis=None)
    y = s.y.flatten()[order]
    cw = np.cumsum(s.weights.flatten()[order])
    return {float(p): float(y[np.searchsorted(cw, p)]) for p in probs}


def resample(s: WeightedInterventionalSample, k: int, seed: Union[int, np.random.Generator]) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = rng.choice(s.y.size, size=k, p=s.weights.flatten())
    return s.y.flatten()[idx]


def _rng(seed: Union[int, np.random.Generator]) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _normalize(log_w: np.ndarray, z_values, N: int, M: int):
    finite = np.isfinite(log_w)
    if not finite.any():
        raise WeightDegeneracyError("all log weights are -inf or nan", z_values, ess=0.0)
    m = float(log_w[finite].max())
    w = np.where(finite, np.exp(log_w - m), 0.0)
    total = w.sum()
    if total <= 0 or not np.isfinite(total):
        raise WeightDegeneracyError("weights sum to zero", z_values, ess=0.0)
    w = w / total
    # renormalize once more to absorb float rounding in the 1e-12 contract
    w = w / w.sum()
    ess = float(1.0 / np.sum(w**2))
    if ess < ESS_WARN_FRACTION * N * M:
        warnings.warn(
            f"effective sample size {ess:.1f} below {ESS_WARN_FRACTION:.0%} of N*M;"
            " consider a trapdoor strategy conditioned on the intervention value",
            RuntimeWarning,
        )
    return w, m


def _resolve_z_gaussian(
    strategy: TrapdoorStrategy,
    z_aux: Optional[LinearZModel],
    x: float,
    N: int,
    rng: np.random.Generator,
) -> np.ndarray:
    if strategy.kind == "fixed":
        return np.full(N, float(strategy.value))
    if strategy.kind == "constraint":
        raise StrategyError("the constraint strategy has no Monte Carlo form")
    if z_aux is None:
        raise StrategyError(f"strategy {strategy.spec_string()!r} needs an auxiliary Z fit")
    for v in strategy.given:
        if v != "X":
            raise StrategyError(f"Gaussian model has no covariate {v!r} to condition on")
    ctx = {"X": np.full(N, float(x))} if strategy.given else {}
    mean = np.asarray(z_aux.mean(ctx)) * np.ones(N)
    if strategy.is_draw:
        return rng.normal(mean, np.sqrt(z_aux.s2))
    return mean


def _algorithm1_gaussian(
    model: GaussianObsModel,
    x: float,
    strategy: TrapdoorStrategy,
    N: int,
    M: int,
    rng: np.random.Generator,
    z_aux: Optional[LinearZModel],
) -> WeightedInterventionalSample:
    z = _resolve_z_gaussian(strategy, z_aux, x, N, rng)
    w = rng.normal(model.a_w, np.sqrt(model.s2_w), size=(N, M))
    mu_y = model.a_y + model.b_yx * x + model.b_yz * z[:, None] + model.b_yw * w
    y = rng.normal(mu_y, np.sqrt(model.s2_y))
    mu_x = model.a_x + model.b_xz * z[:, None] + model.b_xw * w
    log_w = stats.norm.logpdf(x, mu_x, np.sqrt(model.s2_x))
    weights, lw_max = _normalize(log_w, z, N, M)
    return WeightedInterventionalSample(y, weights, z, {}, lw_max, N, M)


def _resolve_z_glm(
    strategy: TrapdoorStrategy,
    model: GlmObsModel,
    x: float,
    s: np.ndarray,
    g: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    N = s.size
    if strategy.kind == "fixed":
        return np.full(N, float(strategy.value))
    key = tuple(strategy.given)
    aux = model.z_aux.get(key)
    if aux is None:
        raise StrategyError(
            f"no auxiliary Z fit for conditioning set {key}; fit with z_given={[key]}"
        )
    ctx = {"X": np.full(N, float(x)), "S": s, "G": g}
    if strategy.is_draw:
        return np.asarray(aux.draw(ctx, rng, size=N if not key else None)) * np.ones(N)
    return np.asarray(aux.mean(ctx)) * np.ones(N)


def _algorithm1_glm(
    model: GlmObsModel,
    x: float,
    strategy: TrapdoorStrategy,
    N: int,
    M: int,
    rng: np.random.Generator,
) -> WeightedInterventionalSample:
    s = model.s_marginal.sample(N, rng)
    g = model.g.sample(N, rng)
    z = _resolve_z_glm(strategy, model, x, s, g, rng)
    w = model.w.sample(N * M, rng).reshape(N, M)
    x_arr = np.full((N, M), float(x))
    y = model.y.sample(x_arr, z[:, None], w, s[:, None], g[:, None], rng)
    log_w = (
        model.x.logp(x_arr.astype(int), z[:, None], w, s[:, None], g[:, None])
        + model.s_given_w.logp(s[:, None], w)
        + model.g.logp(g)[:, None]
    )
    weights, lw_max = _normalize(log_w, z, N, M)
    return WeightedInterventionalSample(y, weights, z, {"S": s, "G": g}, lw_max, N, M)


def algorithm1(
    model: Union[GaussianObsModel, GlmObsModel],
    x: float,
    strategy: TrapdoorStrategy,
    N: int = 250,
    M: int = 250,
    seed: Union[int, np.random.Generator] = 0,
    z_aux: Optional[LinearZModel] = None,
) -> WeightedInterventionalSample:
    """Weighted interventional sampling at a single parameter setting.

    Deterministic given (model, x, strategy, N, M, seed).
    """
    if N < 1 or M < 1:
        raise ValueError("N and M must be >= 1")
    rng = _rng(seed)
    if isinstance(model, GaussianObsModel):
        return _algorithm1_gaussian(model, x, strategy, N, M, rng, z_aux)
    if isinstance(model, GlmObsModel):
        return _algorithm1_glm(model, x, strategy, N, M, rng)
    raise TypeError(f"unsupported model type {type(model).__name__}")


# -- Bayesian layer -----------------------------------------------------------

@dataclass
class BayesEffectResult:
    """Posterior over the interventional mean, plus pooled predictive draws."""

    means: np.ndarray  # one weighted mean per posterior draw
    predictive: np.ndarray  # one resampled outcome per posterior draw
    mcses: np.ndarray
    esses: np.ndarray
    diagnostics: Dict = field(default_factory=dict)

    @property
    def posterior_mean(self) -> float:
        return float(np.mean(self.means))

    @property
    def posterior_sd(self) -> float:
        return float(np.std(self.means, ddof=1))

    @property
    def avg_mcse(self) -> float:
        return float(np.mean(self.mcses))

    def quantiles(self, probs=(0.025, 0.25, 0.5, 0.75, 0.975)) -> Dict[float, float]:
        return {float(p): float(np.quantile(self.means, p)) for p in probs}

    def to_json(self) -> str:
        return json.dumps({
            "posterior_mean": self.posterior_mean,
            "posterior_sd": self.posterior_sd,
            "avg_mcse": self.avg_mcse,
            "quantiles": self.quantiles(),
            "n_draws": int(self.means.size),
            "diagnostics": self.diagnostics,
        })


def _is_glm_schema(data) -> bool:
    return {"S", "G"} <= set(data.df.columns)


def bayes_effect(
    data,
    strategy: TrapdoorStrategy,
    x: float,
    N: int = 250,
    M: int = 250,
    draws: int = 1000,
    seed: int = 0,
    burn_in: int = 1000,
    thin: int = 1,
) -> BayesEffectResult:
    """Run the weighted sampler at each posterior parameter draw.

    Records the per-draw weighted mean (posterior of the interventional
    mean) and one resampled outcome per draw (posterior predictive).
    Fit or degeneracy failures abort with the draw index attached.
    """
    root = np.random.SeedSequence(seed)
    fit_seed, run_seed = root.spawn(2)
    run_rng = np.random.default_rng(run_seed)
    means = np.empty(draws)
    mcses = np.empty(draws)
    esses = np.empty(draws)
    pred = np.empty(draws)
    diagnostics: Dict = {}
    if _is_glm_schema(data):
        z_key = tuple(strategy.given)
        z_given = [z_key] if strategy.kind not in ("fixed", "constraint") else []
        post = draw_glm_posterior(
            data, draws, burn_in, int(fit_seed.generate_state(1)[0]),
            z_given=z_given, thin=thin,
        )
        diagnostics.update(post.diagnostics)
        models = (post.model(i) for i in range(draws))
        z_auxes = (None for _ in range(draws))
    else:
        seed_int = int(fit_seed.generate_state(1)[0])
        g_draws = draw_gaussian_posterior(data, draws, seed_int)
        models = gaussian_models_from_draws(g_draws)
        if strategy.kind in ("fixed", "constraint"):
            z_auxes = (None for _ in range(draws))
        else:
            given = tuple(strategy.given)
            z_post = draw_linear_z_posterior(data, given, draws, seed_int + 1)
            z_auxes = (linear_z_from_draw(z_post, i, given) for i in range(draws))
    for i, (model, z_aux) in enumerate(zip(models, z_auxes)):
        try:
            s = algorithm1(model, x, strategy, N, M, run_rng, z_aux=z_aux)
        except (WeightDegeneracyError, FitError) as e:
            raise type(e)(f"draw {i}: {e}") from e
        means[i] = weighted_mean(s)
        mcses[i] = mcse(s)
        esses[i] = s.ess
        pred[i] = resample(s, 1, run_rng)[0]
    return BayesEffectResult(means, pred, mcses, esses, diagnostics)


def bayes_effect_grid(
    data,
    strategies: Sequence[TrapdoorStrategy],
    x_grid: Sequence[float],
    N: int = 250,
    M: int = 250,
    draws: int = 1000,
    seed: int = 0,
    burn_in: int = 1000,
    thin: int = 1,
) -> Dict[Tuple[str, float], BayesEffectResult]:
    """Like bayes_effect over a (strategy, x) grid, sharing one posterior
    fit across the whole grid.  Keyed by (strategy spec string, x)."""
    if not _is_glm_schema(data):
        raise TypeError("grid evaluation is implemented for the GLM schema")
    root = np.random.SeedSequence(seed)
    fit_seed, run_seed = root.spawn(2)
    run_rng = np.random.default_rng(run_seed)
    z_given = sorted({tuple(s.given) for s in strategies if s.kind not in ("fixed", "constraint")})
    post = draw_glm_posterior(
        data, draws, burn_in, int(fit_seed.generate_state(1)[0]),
        z_given=z_given, thin=thin,
    )
    combos = [(s, float(x)) for s in strategies for x in x_grid]
    acc = {
        (s.spec_string(), x): ([], [], [], [])
        for s, x in combos
    }
    for i in range(draws):
        model = post.model(i)
        for strat, x in combos:
            s = algorithm1(model, x, strat, N, M, run_rng)
            sink = acc[(strat.spec_string(), x)]
            sink[0].append(weighted_mean(s))
            sink[1].append(mcse(s))
            sink[2].append(s.ess)
            sink[3].append(resample(s, 1, run_rng)[0])
    return {
        key: BayesEffectResult(
            np.array(m), np.array(p), np.array(mc), np.array(e), dict(post.diagnostics)
        )
        for key, (m, mc, e, p) in acc.items()
    }
