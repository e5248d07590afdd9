import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llpfc.losses import (
    SATURATION_CAP,
    CompositeFCLoss,
    cross_entropy,
    fc_inner_risk,
    fc_loss_gradient,
    fc_loss_value,
    is_saturated,
    lipschitz_constants,
    predict_class,
    softmax,
    weighted_empirical_risk,
    zero_one_loss,
)
from llpfc.reduction import GroupNoiseModel

SYM = np.array([[0.9, 0.1], [0.1, 0.9]])


def model(T, alpha, weight=1.0):
    return GroupNoiseModel(np.asarray(T, float), np.asarray(alpha, float), np.asarray(alpha, float), (), weight)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(softmax([np.log(3), 0.0]), [0.75, 0.25], atol=1e-15)
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0


def test_loss_value_examples():
    assert fc_loss_value(CompositeFCLoss(np.eye(2)), [0, 0], 0) == pytest.approx(np.log(2), abs=1e-15)
    assert fc_loss_value(CompositeFCLoss(SYM), [0, 0], 0) == pytest.approx(np.log(2), abs=1e-15)
    assert fc_loss_value(CompositeFCLoss(SYM), [np.log(3), 0], 0) == pytest.approx(-np.log(0.7), abs=1e-12)


def test_gradient_examples():
    np.testing.assert_allclose(fc_loss_gradient(CompositeFCLoss(np.eye(2)), [0, 0], 0), [-0.5, 0.5])


@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.sampled_from(["log", "square"]))
def test_gradient_sums_to_zero(C, seed, base):
    rng = np.random.default_rng(seed)
    loss = CompositeFCLoss(rng.dirichlet(np.ones(C), size=C).T, base)
    g = fc_loss_gradient(loss, rng.normal(0, 3, C), int(rng.integers(C)))
    assert abs(g.sum()) < 1e-12


def test_identity_correction_is_cross_entropy(rng):
    for _ in range(10_000):
        C = int(rng.integers(2, 10))
        s, c = rng.normal(0, 3, C), int(rng.integers(C))
        ce = cross_entropy(s[None, :], [c])[0]
        assert abs(fc_loss_value(CompositeFCLoss(np.eye(C)), s, c) - ce) < 1e-12


def test_saturation_cap():
    T = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 0.0]])
    loss = CompositeFCLoss(T)
    assert fc_loss_value(loss, [0.0, 0.0, 0.0], 2) == SATURATION_CAP
    assert is_saturated(loss, [0.0, 0.0, 0.0], 2)
    np.testing.assert_array_equal(fc_loss_gradient(loss, [0.0, 0.0, 0.0], 2), 0.0)
    assert not is_saturated(loss, [0.0, 0.0, 0.0], 0)


def test_extreme_scores_stay_finite():
    loss = CompositeFCLoss(SYM)
    assert np.isfinite(fc_loss_value(loss, [1000.0, -1000.0], 1))
    assert np.all(np.isfinite(fc_loss_gradient(loss, [1000.0, -1000.0], 1)))


def test_argument_checks():
    loss = CompositeFCLoss(np.eye(2))
    with pytest.raises(ValueError):
        fc_loss_value(loss, [0, 0, 0], 0)
    with pytest.raises(ValueError):
        fc_loss_value(loss, [0, 0], 2)
    with pytest.raises(ValueError):
        CompositeFCLoss(np.eye(2), "hinge")


def test_tie_rule():
    assert predict_class([0.1, 0.9]) == 1
    assert predict_class([0.5, 0.5, 0.2]) == 0
    assert zero_one_loss([0.5, 0.5], 1) == 1.0


def test_weighted_risk_examples():
    # one group, identity, uniform scores -> log C
    scores = [[np.zeros((4, 3)), np.zeros((2, 3)), np.zeros((5, 3))]]
    for mode in ("uniform", "ideal", "approx"):
        m = model(np.eye(3), [4 / 11, 2 / 11, 5 / 11])
        assert weighted_empirical_risk([m], scores, mode) == pytest.approx(np.log(3), abs=1e-14)

    # w = (1, 0) reduces to the first group
    rng = np.random.default_rng(0)
    s1 = [rng.normal(size=(3, 2)), rng.normal(size=(2, 2))]
    s2 = [rng.normal(size=(4, 2)), rng.normal(size=(1, 2))]
    g1, g2 = model(SYM, [0.6, 0.4], 1.0), model(np.eye(2), [0.8, 0.2], 0.0)
    both = weighted_empirical_risk([g1, g2], [s1, s2], "approx")
    assert both == weighted_empirical_risk([g1], [s1], "approx")

    # N=1, sizes (1,1), alpha=(0.5,0.5): 0.5 a + 0.5 b
    s = [np.array([[0.3, -0.2]]), np.array([[1.0, 0.5]])]
    a = fc_loss_value(CompositeFCLoss(SYM), s[0][0], 0)
    b = fc_loss_value(CompositeFCLoss(SYM), s[1][0], 1)
    assert weighted_empirical_risk([model(SYM, [0.5, 0.5])], [s], "ideal") == pytest.approx(0.5 * a + 0.5 * b)


def test_weighted_risk_bookkeeping_errors():
    m = model(np.eye(2), [0.5, 0.5])
    with pytest.raises(ValueError):
        weighted_empirical_risk([m], [], "uniform")
    with pytest.raises(ValueError):
        weighted_empirical_risk([m], [[np.zeros((1, 2))]], "uniform")
    with pytest.raises(ValueError):
        weighted_empirical_risk([m], [[np.zeros((1, 3)), np.zeros((1, 3))]], "uniform")
    with pytest.raises(ValueError):
        weighted_empirical_risk([m], [[np.zeros((1, 2))] * 2], "magic")


def test_lipschitz_constants_examples():
    bound, lam0 = lipschitz_constants(np.eye(10))
    assert bound == np.sqrt(2) and lam0 == pytest.approx(np.log(10))
    assert lipschitz_constants(np.eye(2))[1] == pytest.approx(np.log(2))
    T = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert lipschitz_constants(T)[1] == np.inf


def test_gradient_norm_bound_witness(rng):
    for _ in range(5000):
        C = int(rng.integers(2, 10))
        loss = CompositeFCLoss(rng.dirichlet(np.ones(C) * 0.3, size=C).T)
        g = fc_loss_gradient(loss, rng.normal(0, 10, C), int(rng.integers(C)))
        assert np.linalg.norm(g) <= np.sqrt(2) + 1e-9


def test_inner_risk_is_minimised_by_posterior():
    # grid search over q in the 2-simplex at resolution 1e-3
    T = np.array([[0.8, 0.3], [0.2, 0.7]])
    grid = np.linspace(0.0, 1.0, 1001)
    for eta0 in (0.1, 0.25, 0.5, 0.83):
        eta = np.array([eta0, 1 - eta0])
        risks = [fc_inner_risk(T, [q, 1 - q], eta) for q in grid]
        assert abs(grid[int(np.argmin(risks))] - eta0) <= 1e-3
