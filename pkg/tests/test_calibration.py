import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llpfc.calibration import (
    excess_risk_bound,
    inner_risk_chain,
    noise_family_inverse_norm,
    noise_family_matrix,
    random_column_stochastic,
    theta_lower_bound,
    verify_inner_risk_inequality,
    zero_one_inner_excess,
)
from llpfc.simplex import condition_number, invert, is_column_stochastic, matrix_one_norm


def test_noise_family_examples():
    np.testing.assert_array_equal(noise_family_matrix(4, 0.0), np.eye(4))
    np.testing.assert_allclose(noise_family_matrix(2, 0.5), [[0.75, 0.25], [0.25, 0.75]])
    assert matrix_one_norm(invert(noise_family_matrix(10, 0.5))) == pytest.approx(2.8, abs=1e-12)
    with pytest.raises(ValueError):
        noise_family_matrix(3, 1.0)


@given(st.integers(2, 12), st.floats(0.0, 0.95))
def test_noise_family_closed_form(C, a):
    got = matrix_one_norm(invert(noise_family_matrix(C, a)))
    assert got == pytest.approx(noise_family_inverse_norm(C, a), rel=1e-9)


def test_excess_risk_bound_examples():
    assert excess_risk_bound(np.eye(3), 0.0) == 0.0
    assert excess_risk_bound(np.eye(2), 0.5) == pytest.approx(1.0, abs=1e-15)
    assert excess_risk_bound(noise_family_matrix(10, 0.5), 0.02) == pytest.approx(0.56, abs=1e-12)
    with pytest.raises(ValueError):
        excess_risk_bound(np.eye(2), -1.0)


def test_zero_one_excess_examples():
    assert zero_one_inner_excess([0.7, 0.3], [0.7, 0.3]) == 0.0
    assert zero_one_inner_excess([0.7, 0.3], [0.2, 0.8]) == pytest.approx(0.4)
    assert zero_one_inner_excess([0.25] * 4, [0.1, 0.2, 0.3, 0.4]) == 0.0


def test_chain_example_identity():
    chain = inner_risk_chain([0.9, 0.1], [0.1, 0.9], np.eye(2))
    assert chain["zero_one_excess"] == pytest.approx(0.8)
    assert chain["kl"] == pytest.approx(0.8 * np.log(9))
    assert chain["kl"] >= 0.8**2 / 2


def test_chain_example_equal_inputs():
    chain = inner_risk_chain([0.3, 0.7], [0.3, 0.7], noise_family_matrix(2, 0.3))
    assert chain["kl"] == 0.0 and chain["theta"] == 0.0


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_chain_links_hold(C, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(C)), rng.dirichlet(np.ones(C))
    ch = inner_risk_chain(p, q, random_column_stochastic(C, rng))
    tol = 1e-10
    assert ch["surrogate_excess"] == pytest.approx(ch["kl"], abs=tol * (1 + ch["kl"]))
    assert ch["kl"] >= ch["half_l1_T_sq"] - tol
    assert ch["half_l1_T_sq"] >= ch["half_l1_sq_over_norm"] - tol
    assert ch["l1"] >= ch["zero_one_excess"] - tol
    assert ch["half_l1_sq_over_norm"] >= ch["theta"] - tol


def test_theta_shape():
    eps = np.linspace(0.0, 2.0, 201)
    th = theta_lower_bound(eps, 2.8)
    assert th[0] == 0.0
    assert np.all(np.diff(th) > 0)
    assert np.all(np.diff(th, 2) >= -1e-15)  # convex


def test_random_column_stochastic_is_screened(rng):
    T = random_column_stochastic(5, rng, max_condition=1e3, size=200)
    assert all(is_column_stochastic(t) and condition_number(t) <= 1e3 for t in T)


@pytest.mark.parametrize("C", [2, 3, 10])
def test_sweep_reports_no_violations(C, rng):
    report = verify_inner_risk_inequality(C, 2000, rng)
    assert report.passed and report.violations == 0
    assert set(report.chain_violations) == {
        "risk_identity", "pinsker", "inverse_norm", "zero_one", "theta_bound"}
    assert report.to_dict()["bound_coeff"] == pytest.approx(np.sqrt(2) * report.t_inv_one_norm)


def test_sweep_needs_trials(rng):
    with pytest.raises(ValueError):
        verify_inner_risk_inequality(2, 0, rng)
