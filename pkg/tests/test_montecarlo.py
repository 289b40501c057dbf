import numpy as np
import pytest

from trapdoor import fit, montecarlo, scm
from trapdoor.effects import StrategyError, TrapdoorStrategy
from trapdoor.montecarlo import (
    WeightDegeneracyError,
    WeightedInterventionalSample,
    algorithm1,
    bayes_effect,
    bayes_effect_grid,
    mcse,
    resample,
    weighted_mean,
    weighted_quantiles,
)
from trapdoor.scm import gaussian_true_params, gaussian_true_z_model, get_scm, simulate


def true_model():
    return gaussian_true_params(get_scm("gauss-eq10"))


COND = TrapdoorStrategy.parse("cond-mean:X")
FIXED0 = TrapdoorStrategy.parse("fixed:0")


def cond_aux():
    return gaussian_true_z_model(get_scm("gauss-eq10"), ("X",))


# -- invariants ------------------------------------------------------------------

def test_weights_normalized_and_ess_bounded():
    s = algorithm1(true_model(), 3.0, COND, N=40, M=30, seed=2, z_aux=cond_aux())
    assert s.weights.shape == (40, 30)
    assert abs(s.weights.sum() - 1.0) < 1e-12
    assert np.all(s.weights >= 0)
    assert 1.0 <= s.ess <= 40 * 30 + 1e-9


def test_seed_determinism():
    a = algorithm1(true_model(), 3.0, COND, N=50, M=50, seed=5, z_aux=cond_aux())
    b = algorithm1(true_model(), 3.0, COND, N=50, M=50, seed=5, z_aux=cond_aux())
    c = algorithm1(true_model(), 3.0, COND, N=50, M=50, seed=6, z_aux=cond_aux())
    assert np.array_equal(a.y, b.y) and np.array_equal(a.weights, b.weights)
    assert not np.array_equal(a.y, c.y)


def test_uniform_weights_when_x_ignores_z_and_w():
    model = fit.GaussianObsModel(
        a_w=0.0, s2_w=1.0, a_x=0.0, b_xz=0.0, b_xw=0.0, s2_x=1.0,
        a_y=0.0, b_yx=1.0, b_yz=0.0, b_yw=0.0, s2_y=1.0,
    )
    s = algorithm1(model, 2.0, FIXED0, N=30, M=30, seed=1)
    assert np.allclose(s.weights, 1.0 / 900)
    assert s.ess == pytest.approx(900)


def test_mcse_zero_for_constant_outcome():
    y = np.full((10, 10), 4.2)
    w = np.full((10, 10), 0.01)
    s = WeightedInterventionalSample(y, w, np.zeros(10), None, 0.0, 10, 10)
    assert weighted_mean(s) == pytest.approx(4.2)
    assert mcse(s) == pytest.approx(0.0, abs=1e-12)


def test_mcse_scales_as_inverse_sqrt_n():
    sizes = (50, 200, 800, 3200)
    vals = []
    for n in sizes:
        reps = [
            mcse(algorithm1(true_model(), 3.0, COND, N=n, M=20, seed=s, z_aux=cond_aux()))
            for s in range(8)
        ]
        vals.append(np.mean(reps))
    slope = np.polyfit(np.log(sizes), np.log(vals), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_estimate_recovers_truth_at_true_params():
    s = algorithm1(true_model(), 3.0, COND, N=400, M=400, seed=3, z_aux=cond_aux())
    est = weighted_mean(s)
    assert est == pytest.approx(5.0, abs=5 * mcse(s) + 1e-9)


def test_quantiles_and_resample():
    s = algorithm1(true_model(), 0.0, COND, N=200, M=200, seed=4, z_aux=cond_aux())
    q = weighted_quantiles(s, (0.25, 0.5, 0.75))
    assert q[0.25] < q[0.5] < q[0.75]
    draws = resample(s, 1000, seed=0)
    assert draws.shape == (1000,)
    assert np.mean(draws) == pytest.approx(weighted_mean(s), abs=0.15)


def test_low_ess_warns():
    # near-deterministic X given W concentrates all weight on a few draws
    model = fit.GaussianObsModel(
        a_w=0.0, s2_w=1.0, a_x=0.0, b_xz=0.0, b_xw=1.0, s2_x=1e-6,
        a_y=0.0, b_yx=1.0, b_yz=0.0, b_yw=0.0, s2_y=1.0,
    )
    with pytest.warns(RuntimeWarning, match="effective sample size"):
        algorithm1(model, 0.0, FIXED0, N=100, M=100, seed=2)


def test_constraint_strategy_has_no_sampler_form():
    with pytest.raises(StrategyError):
        algorithm1(true_model(), 0.0, TrapdoorStrategy.parse("constraint"), N=10, M=10, seed=1)


def test_sample_json_round_trip_fields():
    s = algorithm1(true_model(), 1.0, FIXED0, N=10, M=10, seed=1)
    doc = s.to_json()
    assert '"N": 10' in doc and '"M": 10' in doc


# -- GLM path -------------------------------------------------------------------

def test_glm_sampler_matches_oracle_at_ml_fit():
    data = simulate(get_scm("nongauss-fsd"), 4000, 31)
    strat = TrapdoorStrategy.parse("cond-draw:X,S,G")
    model = fit.fit_glm(data, z_given=[("X", "S", "G")])
    for x, want in ((0.0, 19_690.0), (2.0, 32_463.0)):
        s = algorithm1(model, x, strat, N=250, M=250, seed=8)
        assert weighted_mean(s) == pytest.approx(want, rel=0.08), x


# -- Bayesian layer ----------------------------------------------------------------

def test_bayes_effect_gaussian_determinism_and_coverage():
    data = simulate(get_scm("gauss-eq10"), 400, 33)
    a = bayes_effect(data, COND, 3.0, N=60, M=60, draws=40, seed=9)
    b = bayes_effect(data, COND, 3.0, N=60, M=60, draws=40, seed=9)
    assert np.array_equal(a.means, b.means)
    assert a.posterior_mean == pytest.approx(5.0, abs=5 * a.posterior_sd)
    assert a.predictive.shape == (40,)


def test_bayes_effect_grid_shares_fit():
    data = simulate(get_scm("nongauss-fsd"), 500, 34)
    strategies = [TrapdoorStrategy.parse(s) for s in ("cond-draw:X", "marg-draw")]
    grid = bayes_effect_grid(
        data, strategies, (0.0, 2.0), N=60, M=60, draws=12, seed=10, burn_in=300,
    )
    assert set(grid) == {("cond-draw:X", 0.0), ("cond-draw:X", 2.0),
                         ("marg-draw", 0.0), ("marg-draw", 2.0)}
    for res in grid.values():
        assert res.means.shape == (12,)
        assert np.isfinite(res.posterior_mean)
    assert grid[("cond-draw:X", 2.0)].posterior_mean > grid[("cond-draw:X", 0.0)].posterior_mean
