"""Calibration of the forward-corrected log loss against the 0-1 loss.

For an invertible column-stochastic ``T`` the 0-1 excess risk ``eps`` and the
surrogate excess risk are linked through

    theta(eps) = eps**2 / (2 * ||T^-1||_1**2)  <=  KL(T p || T q)

at every point, which gives the excess-risk bound
``sqrt(2) * ||T^-1||_1 * sqrt(surrogate excess)``. This module evaluates
those quantities and checks the chain of inequalities behind them by
Monte Carlo.
"""

from dataclasses import dataclass, field

import numpy as np

from .losses import predict_class
from .simplex import invert, kl_divergence, kl_divergence_rows, matrix_one_norm

CHECK_TOL = 1e-10
MAX_SAMPLE_CONDITION = 1e6
CHAIN_LINKS = ("risk_identity", "pinsker", "inverse_norm", "zero_one", "theta_bound")


def noise_family_matrix(n_classes, a):
    """``(1 - a) I + a N`` with ``N`` the all-``1/C`` matrix."""
    if not 0.0 <= a < 1.0:
        raise ValueError(f"mixing weight must lie in [0, 1), got {a} (a = 1 is singular)")
    C = n_classes
    return (1.0 - a) * np.eye(C) + a * np.full((C, C), 1.0 / C)


def noise_family_inverse_norm(n_classes, a):
    """Closed form of ``||T^-1||_1`` for :func:`noise_family_matrix`."""
    return (1.0 + (1.0 - 2.0 / n_classes) * a) / (1.0 - a)


def inverse_one_norm(T):
    return matrix_one_norm(invert(T))


def theta_lower_bound(eps, t_inv_one_norm):
    eps = np.asarray(eps, dtype=float)
    return 0.5 * eps**2 / t_inv_one_norm**2


def excess_risk_bound(T, surrogate_excess):
    """Upper bound on the 0-1 excess risk from the surrogate excess risk."""
    if surrogate_excess < 0:
        raise ValueError("surrogate excess risk must be non-negative")
    return float(np.sqrt(2.0) * inverse_one_norm(T) * np.sqrt(surrogate_excess))


def zero_one_inner_excess(p, q):
    """``max(p) - p[j]`` where ``j`` is the (lowest-index) argmax of ``q``."""
    p = np.asarray(p, dtype=float)
    return float(p.max() - p[predict_class(q)])


def random_column_stochastic(n_classes, rng, max_condition=MAX_SAMPLE_CONDITION, size=None):
    """Columns drawn uniformly from the simplex, redrawn while ill-conditioned."""
    shape = (1 if size is None else size, n_classes, n_classes)
    out = np.empty(shape)
    todo = np.arange(shape[0])
    while todo.size:
        cols = rng.dirichlet(np.ones(n_classes), size=(todo.size, n_classes))
        T = np.swapaxes(cols, 1, 2)
        inv = np.linalg.inv(T)
        cond = np.abs(T).sum(axis=1).max(axis=1) * np.abs(inv).sum(axis=1).max(axis=1)
        ok = np.isfinite(cond) & (cond <= max_condition)
        out[todo[ok]] = T[ok]
        todo = todo[~ok]
    return out[0] if size is None else out


def _cross_entropy(target, pred):
    mask = target > 0
    return float(-np.sum(target[mask] * np.log(pred[mask])))


def inner_risk_chain(p, q, T):
    """Every quantity in the chain linking the two excess risks at one point."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    T = np.asarray(T, dtype=float)
    n = inverse_one_norm(T)
    Tp, Tq = T @ p, T @ q
    excess = zero_one_inner_excess(p, q)
    return {
        "surrogate_excess": _cross_entropy(Tp, Tq) - _cross_entropy(Tp, Tp),
        "kl": kl_divergence(Tp, Tq),
        "half_l1_T_sq": 0.5 * float(np.abs(Tp - Tq).sum()) ** 2,
        "half_l1_sq_over_norm": 0.5 * float(np.abs(p - q).sum()) ** 2 / n**2,
        "l1": float(np.abs(p - q).sum()),
        "zero_one_excess": excess,
        "theta": float(theta_lower_bound(excess, n)),
        "t_inv_one_norm": n,
    }


@dataclass
class CalibrationReport:
    n_classes: int
    trials: int
    t_inv_one_norm: float
    violations: int
    chain_violations: dict = field(default_factory=dict)

    @property
    def bound_coeff(self):
        return float(np.sqrt(2.0) * self.t_inv_one_norm)

    def theta_lb(self, eps):
        return theta_lower_bound(eps, self.t_inv_one_norm)

    @property
    def passed(self):
        return self.violations == 0 and not any(self.chain_violations.values())

    def to_dict(self):
        return {
            "C": self.n_classes,
            "trials": self.trials,
            "t_inv_one_norm": self.t_inv_one_norm,
            "bound_coeff": self.bound_coeff,
            "violations": self.violations,
            "chain_violations": dict(self.chain_violations),
            "passed": self.passed,
        }


def verify_inner_risk_inequality(n_classes, trials, rng, tol=CHECK_TOL):
    """Monte Carlo check of ``theta_T(0-1 excess) <= KL(Tp || Tq)``.

    Each trial draws interior ``p``, ``q`` and a well-conditioned random
    column-stochastic ``T``. Besides the end-to-end inequality every link of
    the chain is counted separately: the risk/KL identity, Pinsker, the
    inverse-norm lower bound and the L1 bound on the 0-1 excess.
    The reported ``t_inv_one_norm`` is the largest one seen.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    C = n_classes
    P = rng.dirichlet(np.ones(C), size=trials)
    Q = rng.dirichlet(np.ones(C), size=trials)
    T = random_column_stochastic(C, rng, size=trials)
    norms = np.abs(np.linalg.inv(T)).sum(axis=1).max(axis=1)

    TP = np.einsum("tij,tj->ti", T, P)
    TQ = np.einsum("tij,tj->ti", T, Q)
    kl = kl_divergence_rows(TP, TQ)
    surrogate = -(TP * np.log(TQ)).sum(axis=1) + (TP * np.log(TP)).sum(axis=1)
    l1_T = np.abs(TP - TQ).sum(axis=1)
    l1 = np.abs(P - Q).sum(axis=1)
    excess = P.max(axis=1) - P[np.arange(trials), predict_class(Q)]
    theta = theta_lower_bound(excess, norms)

    chain = {
        "risk_identity": int(np.sum(np.abs(surrogate - kl) > tol * (1.0 + kl))),
        "pinsker": int(np.sum(kl < 0.5 * l1_T**2 - tol)),
        "inverse_norm": int(np.sum(0.5 * l1_T**2 < 0.5 * l1**2 / norms**2 - tol)),
        "zero_one": int(np.sum(l1 < excess - tol)),
        "theta_bound": int(np.sum(0.5 * l1**2 / norms**2 < theta - tol)),
    }
    violations = int(np.sum(theta > kl + tol))
    return CalibrationReport(C, trials, float(norms.max()), violations, chain)
