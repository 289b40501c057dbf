import json
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest

from trapdoor import fit, scm
from trapdoor.scm import (
    Dataset,
    GenerationError,
    binary_exact_joint,
    binary_exact_tables,
    binary_scm,
    gaussian_conditional_mean,
    gaussian_joint,
    gaussian_true_params,
    get_scm,
    linear_gaussian_scm,
    nongaussian_scm,
    oracle_effect,
    simulate,
)


def test_unknown_scm_key():
    with pytest.raises(GenerationError):
        get_scm("nope")


def test_simulate_is_deterministic():
    spec = get_scm("gauss-eq10")
    a = simulate(spec, 200, 7).df
    b = simulate(spec, 200, 7).df
    c = simulate(spec, 200, 8).df
    pd.testing.assert_frame_equal(a, b)
    assert not a.equals(c)


def test_scm_json_round_trip():
    for key in scm.BUILTIN_SCMS:
        spec = get_scm(key)
        assert scm.ScmSpec.from_json(spec.to_json()) == spec


def test_intervene_replaces_mechanism():
    spec = get_scm("gauss-eq10").intervene("X", 3.0)
    mech = {m.vertex: m for m in spec.mechanisms}
    assert mech["X"].family == "constant"
    d = scm.simulate_full(spec, 50, 1)
    assert np.all(d["X"] == 3.0)


def test_dataset_csv_round_trip(tmp_path):
    data = simulate(get_scm("binary-eq9"), 100, 3)
    path = tmp_path / "d.csv"
    data.to_csv(path)
    back = Dataset.from_csv(path)
    pd.testing.assert_frame_equal(data.df, back.df, check_dtype=False)


# -- binary model ---------------------------------------------------------------

def test_binary_exact_joint_sums_to_one():
    joint = binary_exact_joint(binary_scm())
    assert sum(joint.values()) == Fraction(1)
    assert all(p >= 0 for p in joint.values())


def test_binary_exact_tables_match_empirical():
    spec = binary_scm()
    tables = binary_exact_tables(spec)
    data = simulate(spec, 200_000, 10)
    emp = fit.fit_freq(data, "Z", ("W",))
    for w in (0.0, 1.0):
        exact = float(tables["Z|W"].prob(1.0, (w,)))
        est = float(emp.prob(1.0, (w,)))
        assert est == pytest.approx(exact, abs=0.01)


def test_binary_marginal_of_w():
    # P(W=1) = 0.5*0.4 + 0.5*0.4 interactions: enumerate directly instead
    tables = binary_exact_tables(binary_scm())
    p1 = tables["W"].prob(1.0, ())
    joint = binary_exact_joint(binary_scm())
    names = list(binary_scm().vertices)
    wi = names.index("W")
    direct = sum(p for combo, p in joint.items() if combo[wi] == 1)
    assert p1 == direct


# -- linear-Gaussian model --------------------------------------------------------

def test_gaussian_joint_moments():
    spec = get_scm("gauss-eq10")
    names, means, cov = gaussian_joint(spec)
    mu = dict(zip(names, means))
    assert mu["Z"] == pytest.approx(4.0)
    assert mu["X"] == pytest.approx(6.0)
    assert mu["Y"] == pytest.approx(8.0)
    d = simulate(spec, 150_000, 2).df
    i = {v: names.index(v) for v in ("W", "Z", "X", "Y")}
    emp = d[["W", "Z", "X", "Y"]].cov().to_numpy()
    ex = cov[np.ix_([i[v] for v in ("W", "Z", "X", "Y")], [i[v] for v in ("W", "Z", "X", "Y")])]
    assert np.allclose(emp, ex, atol=0.1)


def test_gaussian_conditional_mean_matches_empirical():
    spec = get_scm("gauss-eq10")
    d = simulate(spec, 400_000, 4).df
    band = d[(d["X"] - 3.0).abs() < 0.05]
    assert gaussian_conditional_mean(spec, "Z", {"X": 3.0}) == pytest.approx(
        band["Z"].mean(), abs=0.05
    )


def test_gaussian_true_params_match_large_sample_fit():
    spec = get_scm("gauss-eq10")
    true = gaussian_true_params(spec)
    fitted = fit.fit_gaussian(simulate(spec, 300_000, 6))
    for f in fit.GaussianObsModel.FIELDS:
        assert getattr(fitted, f) == pytest.approx(getattr(true, f), abs=0.02), f


def test_gaussian_true_params_random_parameterizations():
    rng = np.random.default_rng(5)
    for _ in range(5):
        params = dict(
            mu_u=rng.normal(), sigma_u=rng.uniform(0.5, 2),
            alpha_y=rng.normal(), beta_yx=rng.normal(), beta_yu=rng.normal(),
            beta_xz=rng.normal(), beta_wu=rng.normal(),
        )
        spec = linear_gaussian_scm(**params)
        true = gaussian_true_params(spec)
        fitted = fit.fit_gaussian(simulate(spec, 200_000, 9))
        for f in ("b_yx", "b_yz", "b_yw", "b_xz", "b_xw"):
            assert getattr(fitted, f) == pytest.approx(getattr(true, f), abs=0.05), (f, params)


def test_oracle_interventional_mean_and_variance():
    spec = get_scm("gauss-eq10")
    s = oracle_effect(spec, "X", 3.0, 1_000_000, 12)
    assert s.mean == pytest.approx(5.0, abs=4 * s.mcse_mean)
    assert s.variance == pytest.approx(1.01, abs=0.01)


# -- non-Gaussian model ------------------------------------------------------------

def test_nongaussian_supports():
    d = simulate(nongaussian_scm(), 20_000, 13).df
    assert set(np.unique(d["X"])) <= {0.0, 1.0, 2.0}
    assert set(np.unique(d["W"])) <= {1.0, 2.0, 3.0}
    assert set(np.unique(d["G"])) <= {0.0, 1.0}
    assert (d["Z"] > 0).all() and (d["Z"] < 1).all()
    assert (d["Y"] > 0).all()
    assert d["S"].std() == pytest.approx(np.sqrt(25 + 9), rel=0.05)


def test_nongaussian_outcome_scale():
    s = oracle_effect(nongaussian_scm(), "X", 0.0, 200_000, 14)
    assert s.mean == pytest.approx(19_690, rel=0.02)
