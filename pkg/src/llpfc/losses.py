"""Forward-corrected losses on softmax scores and the weighted empirical risk.

For a column-stochastic ``T`` and scores ``s`` the composite loss is

    lambda_T(s, c) = loss(T @ softmax(s), c)

With the log loss this is evaluated in log space as
``logsumexp(s) - logsumexp(s + log T[c])``; the gradient with respect to the
scores is ``softmax(s) - softmax(s + log T[c])``.
"""

from dataclasses import dataclass

import numpy as np

from .simplex import check_column_stochastic

SATURATION_CAP = 1e12
LOG_LOSS = "log"
SQUARE_LOSS = "square"


def logsumexp(X, axis=-1):
    X = np.asarray(X, dtype=float)
    m = np.max(X, axis=axis, keepdims=True)
    finite_m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(X - finite_m), axis=axis, keepdims=True)) + finite_m
    return np.squeeze(out, axis=axis)


def softmax(S):
    """Max-shifted softmax along the last axis."""
    S = np.asarray(S, dtype=float)
    Z = S - np.max(S, axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def safe_log(X):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(X, dtype=float))


@dataclass(frozen=True)
class CompositeFCLoss:
    """Softmax-link proper composite loss with forward correction by ``T``."""

    T: np.ndarray
    base: str = LOG_LOSS

    def __post_init__(self):
        if self.base not in (LOG_LOSS, SQUARE_LOSS):
            raise ValueError(f"unknown base loss {self.base!r}")
        object.__setattr__(self, "T", check_column_stochastic(self.T))

    @property
    def n_classes(self):
        return self.T.shape[0]


def fc_log_loss_rows(S, log_rows):
    """Batched log-loss values from scores and the log of each point's T row.

    Returns ``(values, saturated)``; a saturated point (inner probability
    exactly zero) gets :data:`SATURATION_CAP` instead of ``inf``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    inner = logsumexp(S + log_rows)
    saturated = ~np.isfinite(inner)
    values = logsumexp(S) - np.where(saturated, 0.0, inner)
    values = np.where(saturated, SATURATION_CAP, values)
    return values, saturated


def fc_log_grad_rows(S, log_rows):
    """Batched score gradients ``softmax(s) - softmax(s + log T[c])``.

    Saturated rows get a zero gradient, consistent with the constant cap.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    P = softmax(S)
    shifted = S + log_rows
    m = np.max(shifted, axis=-1, keepdims=True)
    ok = np.isfinite(m)
    with np.errstate(invalid="ignore"):
        E = np.exp(shifted - np.where(ok, m, 0.0))
        R = E / E.sum(axis=-1, keepdims=True)
    return np.where(ok, P - R, 0.0)


def _square_value_grad(T, s, c):
    p = softmax(s)
    q = T @ p
    r = q.copy()
    r[c] -= 1.0
    value = float(r @ r)
    dq = 2.0 * r
    dp = T.T @ dq
    # softmax Jacobian is diag(p) - p p^T
    ds = p * dp - p * (p @ dp)
    return value, ds


def _check_class(loss, s, c):
    s = np.asarray(s, dtype=float)
    if s.shape != (loss.n_classes,):
        raise ValueError(f"expected {loss.n_classes} scores, got shape {s.shape}")
    if not 0 <= c < loss.n_classes:
        raise ValueError(f"class {c} out of range")
    return s


def fc_loss_value(loss, s, c):
    """Value of the composite forward-corrected loss at scores ``s``, label ``c``."""
    s = _check_class(loss, s, c)
    if loss.base == SQUARE_LOSS:
        return _square_value_grad(loss.T, s, c)[0]
    values, _ = fc_log_loss_rows(s[None, :], safe_log(loss.T[c])[None, :])
    return float(values[0])


def fc_loss_gradient(loss, s, c):
    """Gradient of :func:`fc_loss_value` with respect to the scores."""
    s = _check_class(loss, s, c)
    if loss.base == SQUARE_LOSS:
        return _square_value_grad(loss.T, s, c)[1]
    return fc_log_grad_rows(s[None, :], safe_log(loss.T[c])[None, :])[0]


def is_saturated(loss, s, c):
    if loss.base == SQUARE_LOSS:
        return False
    s = _check_class(loss, s, c)
    return bool(fc_log_loss_rows(s[None, :], safe_log(loss.T[c])[None, :])[1][0])


def cross_entropy(S, y):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    y = np.asarray(y)
    return logsumexp(S) - S[np.arange(S.shape[0]), y]


def predict_class(q):
    """Smallest index attaining the maximum (ties go to the lower class)."""
    return np.argmax(np.asarray(q), axis=-1)


def zero_one_loss(q, c):
    return float(int(predict_class(q)) != c)


def point_coefficient(model, c, n_ic, n_i, mode):
    """Weight a single point of bag ``k_{i,c}`` carries in the empirical risk."""
    if mode == "uniform":
        return model.weight / n_i
    return model.weight * model.alpha_hat[c] / n_ic


def weighted_empirical_risk(models, scores, mode):
    """Weighted sum of forward-corrected log losses over all groups.

    ``scores[i][c]`` holds the classifier scores (one row per point) of the
    bag carrying noisy label ``c`` in group ``i``. Ideal and approx modes
    weight a point by ``w_i alpha_i(c) / n_ic``; uniform mode by ``w_i / n_i``.
    """
    if mode not in ("ideal", "uniform", "approx"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(scores) != len(models):
        raise ValueError(f"{len(models)} group models but scores for {len(scores)} groups")
    total = 0.0
    for i, (model, group_scores) in enumerate(zip(models, scores)):
        C = model.T_hat.shape[0]
        if len(group_scores) != C:
            raise ValueError(f"group {i}: expected {C} bags, got {len(group_scores)}")
        blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in group_scores]
        n_i = sum(b.shape[0] for b in blocks)
        log_T = safe_log(model.T_hat)
        for c, block in enumerate(blocks):
            if block.shape[0] == 0 or block.shape[1] != C:
                raise ValueError(f"group {i}, bag {c}: bad score block of shape {block.shape}")
            values, _ = fc_log_loss_rows(block, np.broadcast_to(log_T[c], block.shape))
            coef = point_coefficient(model, c, block.shape[0], n_i, mode)
            total += coef * float(values.sum())
    return total


def lipschitz_constants(T):
    """Universal Lipschitz bound ``sqrt(2)`` and the loss size at zero scores.

    The second value is ``max_c -log(mean_j T[c, j])``, infinite when ``T``
    has an all-zero row.
    """
    T = check_column_stochastic(T)
    with np.errstate(divide="ignore"):
        lam0 = float(np.max(-np.log(T.mean(axis=1))))
    return np.sqrt(2.0), lam0


def fc_inner_risk(T, q, eta, base=LOG_LOSS):
    """Expected forward-corrected loss of prediction ``q`` when labels follow ``T @ eta``."""
    T = np.asarray(T, dtype=float)
    noisy = T @ np.asarray(eta, dtype=float)
    Tq = T @ np.asarray(q, dtype=float)
    if base == LOG_LOSS:
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(noisy > 0, -noisy * np.log(Tq), 0.0)
        return float(terms.sum())
    C = T.shape[0]
    eye = np.eye(C)
    return float(sum(noisy[c] * np.sum((eye[c] - Tq) ** 2) for c in range(C)))
