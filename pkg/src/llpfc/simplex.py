"""Small dense linear algebra on the probability simplex.

Probability vectors are plain 1-D float arrays and column-stochastic
matrices plain 2-D arrays; the helpers here validate them at the boundaries
of the public API instead of wrapping them in classes.
"""

import numpy as np

from .errors import ConvergenceFailure, SingularMatrix

SIMPLEX_TOL = 1e-9
REPAIR_TOL = 1e-6
MAX_CONDITION = 1e12


def project_to_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-based algorithm: find the largest ``rho`` such that
    ``u_rho - (sum(u[:rho]) - 1) / rho > 0`` on the decreasingly sorted
    vector and shift everything by the resulting threshold.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - cssv / ind > 0)
    theta = cssv[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def is_prob_vector(p, tol=SIMPLEX_TOL):
    p = np.asarray(p, dtype=float)
    return (
        p.ndim == 1
        and p.size > 0
        and bool(np.all(np.isfinite(p)))
        and bool(np.all(p >= 0.0))
        and abs(p.sum() - 1.0) <= tol
    )


def as_prob_vector(p, tol=SIMPLEX_TOL, repair_tol=REPAIR_TOL):
    """Validate ``p`` as a probability vector and return it as a float array.

    Vectors within ``repair_tol`` of the simplex (float drift) are projected
    back onto it; anything further away raises ``ValueError``.
    """
    p = np.array(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"probability vector must be 1-D and non-empty, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("probability vector has non-finite entries")
    if is_prob_vector(p, tol):
        return p
    drift = max(abs(p.sum() - 1.0), float(-p.min()))
    if drift <= repair_tol:
        return project_to_simplex(p)
    raise ValueError(f"not a probability vector (off by {drift:.3g}): {p}")


def is_column_stochastic(T, tol=SIMPLEX_TOL):
    T = np.asarray(T, dtype=float)
    return (
        T.ndim == 2
        and T.shape[0] == T.shape[1]
        and bool(np.all(np.isfinite(T)))
        and bool(np.all(T >= 0.0))
        and bool(np.all(np.abs(T.sum(axis=0) - 1.0) <= tol))
    )


def check_column_stochastic(T, tol=SIMPLEX_TOL):
    T = np.array(T, dtype=float)
    if not is_column_stochastic(T, tol):
        raise ValueError(f"not a square column-stochastic matrix:\n{T}")
    return T


def check_row_stochastic(G, tol=SIMPLEX_TOL):
    G = np.array(G, dtype=float)
    if not is_column_stochastic(G.T, tol):
        raise ValueError(f"not a square row-stochastic matrix:\n{G}")
    return G


def matrix_one_norm(M):
    """Maximum absolute column sum."""
    M = np.asarray(M, dtype=float)
    return float(np.abs(M).sum(axis=0).max())


def invert(T, max_condition=MAX_CONDITION):
    """Inverse of a square matrix with a condition-number screen.

    LAPACK ``gesv`` (LU with partial pivoting) does the factorisation. The
    1-norm condition number ``||T||_1 ||T^-1||_1`` is checked against
    ``max_condition`` and :class:`SingularMatrix` is raised above it.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError("matrix has non-finite entries")
    try:
        inv = np.linalg.solve(T, np.eye(T.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("matrix is exactly singular", condition=np.inf) from exc
    if not np.all(np.isfinite(inv)):
        raise SingularMatrix("matrix is numerically singular", condition=np.inf)
    cond = matrix_one_norm(T) * matrix_one_norm(inv)
    if not cond <= max_condition:
        raise SingularMatrix(
            f"condition number {cond:.3g} exceeds {max_condition:.3g}", condition=cond
        )
    return inv


def condition_number(T):
    """1-norm condition number, ``inf`` for singular input."""
    try:
        inv = invert(T, max_condition=np.inf)
    except SingularMatrix:
        return np.inf
    return matrix_one_norm(T) * matrix_one_norm(inv)


def kl_divergence(p, q):
    """KL(p || q) in nats with ``0 log 0 = 0``; ``inf`` off the support of q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return np.inf
    return max(float(np.sum(p[mask] * np.log(p[mask] / q[mask]))), 0.0)


def kl_divergence_rows(P, Q):
    """Row-wise KL divergence for stacks of probability vectors."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * (np.log(P) - np.log(Q)), 0.0)
    out = terms.sum(axis=-1)
    bad = np.any((P > 0) & (Q <= 0), axis=-1)
    return np.where(bad, np.inf, np.maximum(out, 0.0))


def simplex_ls_objective(G, s, alpha):
    r = np.asarray(s) - np.asarray(G).T @ np.asarray(alpha)
    return float(r @ r)


def _face_minimiser(H, b, support):
    k = support.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = H[np.ix_(support, support)]
    kkt[:k, k] = -1.0
    kkt[k, :k] = 1.0
    rhs = np.append(b[support], 1.0)
    return np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]


def _active_set_polish(H, b, x, max_steps=None, atol=1e-15):
    """Primal active-set iterations for ``min 0.5 a'Ha - b'a`` on the simplex.

    Warm-started from a feasible ``x``: minimise exactly on the current face
    (KKT solve), step towards that minimiser until a coordinate hits zero,
    and release the coordinate with the most negative reduced gradient once
    the face is optimal. Every step is non-increasing in the objective.
    """
    C = x.size
    max_steps = max_steps or 4 * C + 10
    x = x.copy()
    active = x > atol
    x[~active] = 0.0
    x /= x.sum()
    for _ in range(max_steps):
        support = np.flatnonzero(active)
        a_s = _face_minimiser(H, b, support)
        if not np.all(np.isfinite(a_s)):
            return x
        x_s = x[support]
        if np.all(a_s >= 0.0):
            x = np.zeros(C)
            x[support] = a_s
            x /= x.sum()
            g = H @ x - b
            mu = g[support].min()
            reduced = np.where(active, 0.0, g - mu)
            j = int(np.argmin(reduced))
            if reduced[j] >= -1e-13 * max(1.0, float(np.abs(g).max())):
                return x
            active[j] = True
            continue
        blocking = a_s < x_s
        ratios = np.full(support.size, np.inf)
        ratios[blocking] = x_s[blocking] / (x_s[blocking] - a_s[blocking])
        tau = min(1.0, float(ratios.min()))
        new_s = x_s + tau * (a_s - x_s)
        drop = support[(new_s <= atol) | (ratios <= tau)]
        x = np.zeros(C)
        x[support] = np.maximum(new_s, 0.0)
        x[drop] = 0.0
        active[drop] = False
        if not active.any():
            return None
        x /= x.sum()
    return x


def solve_simplex_least_squares(G, s, max_iter=10_000, tol=1e-12, polish_every=25):
    """Minimise ``||s - G^T a||_2^2`` over ``a`` in the simplex.

    Accelerated projected gradient (FISTA) with function-value restarts,
    started from the barycentre. Every ``polish_every`` iterations the
    iterate is handed to a short primal active-set refinement; the
    candidate is only accepted if it stays feasible and does not increase
    the objective. The stopping rule is the Frank-Wolfe duality gap
    ``g.a - min(g)``, an upper bound on the suboptimality of the objective,
    so ``tol`` directly bounds the objective error.

    Raises
    ------
    ConvergenceFailure
        If the gap is still above ``tol`` after ``max_iter`` iterations.
        The exception carries the best iterate found.
    """
    G = check_row_stochastic(G)
    s = as_prob_vector(s)
    C = G.shape[0]
    if s.size != C:
        raise ValueError(f"size mismatch: G is {G.shape}, s has {s.size} entries")

    H = 2.0 * G @ G.T
    b = 2.0 * G @ s
    lipschitz = float(np.linalg.eigvalsh(H).max())
    if lipschitz <= 0.0:
        return np.full(C, 1.0 / C)
    step = 1.0 / lipschitz

    def objective(a):
        return simplex_ls_objective(G, s, a)

    def fw_gap(a):
        g = H @ a - b
        return float(g @ a - g.min())

    x = np.full(C, 1.0 / C)
    fx = objective(x)
    y = x.copy()
    t = 1.0
    best, best_f, best_gap = x, fx, fw_gap(x)
    if best_gap <= tol:
        return best
    for it in range(1, max_iter + 1):
        if it % polish_every == 0:
            cand = _active_set_polish(H, b, x)
            if cand is not None:
                f_cand = objective(cand)
                # rounding-level ties go to the polished point
                if f_cand <= fx + 1e-14 * (1.0 + fx):
                    x, fx, y, t = cand, f_cand, cand.copy(), 1.0
                    gap = fw_gap(x)
                    if fx <= best_f:
                        best, best_f, best_gap = x, fx, gap
                    if gap <= tol:
                        return x
        x_new = project_to_simplex(y - step * (H @ y - b))
        f_new = objective(x_new)
        if f_new > fx:
            # restart momentum from the last accepted point
            t = 1.0
            y = x.copy()
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, f_new, t_new
        gap = fw_gap(x)
        if fx <= best_f:
            best, best_f, best_gap = x, fx, gap
        if gap <= tol:
            return x
    raise ConvergenceFailure(
        f"simplex least squares did not converge in {max_iter} iterations "
        f"(duality gap {best_gap:.3g} > {tol:.3g})",
        best=best,
        gap=best_gap,
        iterations=max_iter,
    )
