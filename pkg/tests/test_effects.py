from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapdoor import effects, fit, scm
from trapdoor.effects import (
    CATALOG,
    StrategyError,
    TrapdoorStrategy,
    effect_binary_fixed_z,
    effect_binary_weighted,
    effect_gaussian_mean,
    effect_gaussian_variance,
    gaussian_trapdoor_coefficient,
    get_catalog_entry,
    resolve_trapdoor,
)
from trapdoor.scm import binary_exact_tables, binary_scm, gaussian_true_params, get_scm


# -- strategies -----------------------------------------------------------------

def test_parse_known_forms():
    assert TrapdoorStrategy.parse("fixed:0.5").value == 0.5
    assert TrapdoorStrategy.parse("marg-mean").kind == "marg-mean"
    assert TrapdoorStrategy.parse("cond-mean:X").given == ("X",)
    assert TrapdoorStrategy.parse("cond-draw:X,S,G").given == ("X", "S", "G")
    assert TrapdoorStrategy.parse("constraint").kind == "constraint"


@pytest.mark.parametrize("bad", ["", "bogus", "fixed:", "fixed:abc", "cond-mean", "marg-mean:X"])
def test_parse_rejects_malformed(bad):
    with pytest.raises(StrategyError):
        TrapdoorStrategy.parse(bad)


@given(st.sampled_from(["marg-mean", "marg-draw", "constraint"])
       | st.floats(-100, 100, allow_nan=False).map(lambda v: f"fixed:{v}")
       | st.sampled_from(["cond-mean:X", "cond-draw:X", "cond-draw:X,S,G", "cond-draw:S,G"]))
@settings(max_examples=60)
def test_parse_spec_string_round_trip(spec):
    strat = TrapdoorStrategy.parse(spec)
    assert TrapdoorStrategy.parse(strat.spec_string()) == strat


def test_resolve_trapdoor_kinds():
    aux = fit.LinearZModel(("X",), np.array([1.0, 2.0]), 0.0)
    assert resolve_trapdoor(TrapdoorStrategy.parse("fixed:7"), None, {}) == 7.0
    assert resolve_trapdoor(TrapdoorStrategy.parse("cond-mean:X"), aux, {"X": 3.0}) == 7.0
    rng = np.random.default_rng(0)
    assert resolve_trapdoor(TrapdoorStrategy.parse("cond-draw:X"), aux, {"X": 3.0}, rng) == 7.0


# -- catalog -----------------------------------------------------------------------

def test_catalog_entries():
    assert get_catalog_entry("fig2c").trapdoor == ("Z",)
    assert get_catalog_entry("fsd") == get_catalog_entry("fig3b")
    assert set(CATALOG) >= {"fig1", "fig2a", "fig2c", "fig3b"}
    with pytest.raises(StrategyError):
        get_catalog_entry("nope")


# -- binary functional ---------------------------------------------------------------

def test_binary_functional_exact_and_z_independent():
    tables = binary_exact_tables(binary_scm())
    for x, want in ((0.0, Fraction(1, 5)), (1.0, Fraction(3, 5))):
        for z in (0.0, 1.0):
            dist = effect_binary_fixed_z(tables, x, z)
            assert dist[1.0] == want
            assert sum(dist.values()) == 1


def test_binary_weighted_is_convex_combination():
    tables = binary_exact_tables(binary_scm())
    w = tables["Z"]
    mixed = effect_binary_weighted(tables, 1.0, w)
    parts = [effect_binary_fixed_z(tables, 1.0, z) for z in (0.0, 1.0)]
    expect = sum(w.prob(z, ()) * parts[i][1.0] for i, z in enumerate((0.0, 1.0)))
    assert mixed[1.0] == expect


def test_binary_fixed_z_propagates_undefined_cells():
    df = scm.simulate(binary_scm(), 30, 1).df
    df = df[~((df["Z"] == 1.0) & (df["X"] == 1.0))]  # empty a needed cell
    data = scm.Dataset(df.reset_index(drop=True), {c: "binary" for c in df.columns})
    tables = {
        "W": fit.fit_freq(data, "W", ()),
        "X|Z,W": fit.fit_freq(data, "X", ("Z", "W")),
        "Y|X,Z,W": fit.fit_freq(data, "Y", ("X", "Z", "W")),
    }
    with pytest.raises(fit.UndefinedCellError):
        effect_binary_fixed_z(tables, 1.0, 1.0)


# -- Gaussian functional ----------------------------------------------------------------

def test_gaussian_mean_z_cancellation_at_truth():
    rng = np.random.default_rng(17)
    for _ in range(20):
        spec = scm.linear_gaussian_scm(
            mu_u=rng.normal(), mu_v=rng.normal(),
            sigma_u=rng.uniform(0.5, 2), sigma_v=rng.uniform(0.5, 2),
            alpha_w=rng.normal(), beta_wu=rng.normal(), beta_wv=rng.normal(),
            sigma_w=rng.uniform(0.5, 2),
            alpha_z=rng.normal(), beta_zw=rng.normal(), sigma_z=rng.uniform(0.5, 2),
            alpha_x=rng.normal(), beta_xz=rng.normal(), beta_xv=rng.normal(),
            sigma_x=rng.uniform(0.5, 2),
            alpha_y=rng.normal(), beta_yx=rng.normal(), beta_yu=rng.normal(),
            sigma_y=rng.uniform(0.1, 2),
        )
        model = gaussian_true_params(spec)
        mech = {m.vertex: m for m in spec.mechanisms}
        coef = {v: dict((t[1], t[2]) for t in mech[v].terms) for v in mech}
        for _ in range(10):
            x, z = rng.normal(size=2) * 5
            want = (
                mech["Y"].intercept
                + coef["Y"]["U"] * mech["U"].intercept
                + coef["Y"]["X"] * x
            )
            assert effect_gaussian_mean(model, x, z) == pytest.approx(want, abs=1e-8)


def test_gaussian_trapdoor_coefficient_zero_at_truth():
    model = gaussian_true_params(get_scm("gauss-eq10"))
    assert abs(gaussian_trapdoor_coefficient(model)) < 1e-12


def test_gaussian_variance_oracle():
    model = gaussian_true_params(get_scm("gauss-eq10"))
    assert effect_gaussian_variance(model) == pytest.approx(1.01, abs=1e-9)


def test_gaussian_mean_linear_in_x():
    model = gaussian_true_params(get_scm("gauss-eq10"))
    for x in (0.0, 3.0, 6.0, 9.0):
        assert effect_gaussian_mean(model, x, 0.0) == pytest.approx(2.0 + x, abs=1e-9)


def test_conditional_z_anchors():
    spec = get_scm("gauss-eq10")
    anchors = {0.0: 0.25, 3.0: 2.1255, 6.0: 4.0, 9.0: 5.875}
    for x, want in anchors.items():
        got = scm.gaussian_conditional_mean(spec, "Z", {"X": x})
        assert got == pytest.approx(want, abs=1e-3)
