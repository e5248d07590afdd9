"""Numerical self-checks run by ``llpfc verify``.

Every check returns a :class:`CheckResult`; the suite passes when all of
them report zero violations.
"""

from dataclasses import dataclass, field

import numpy as np

from .bags import Bag, Dataset
from .baselines import kl_bag_gradient, kl_bag_loss
from .calibration import (
    noise_family_inverse_norm,
    noise_family_matrix,
    random_column_stochastic,
    verify_inner_risk_inequality,
)
from .errors import AssumptionViolation
from .losses import CompositeFCLoss, fc_log_grad_rows, fc_log_loss_rows, fc_loss_gradient, fc_loss_value, safe_log
from .models import init_classifier
from .reduction import build_approx, build_ideal, build_uniform, group_bound_term, optimal_weights
from .simplex import invert, matrix_one_norm

FD_STEP = 1e-6
# below this gradient size the comparison is against rounding noise in the differences
FD_FLOOR = 1e-3


@dataclass
class CheckResult:
    name: str
    category: str
    checked: int
    violations: int
    worst: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        return {"name": self.name, "category": self.category, "checked": self.checked,
                "violations": self.violations, "worst": self.worst, "passed": self.passed,
                **self.details}


def check_closed_form_norms(classes=(2, 3, 10), grid=None, tol=1e-9, perturb=0.0):
    """Computed ``||T^-1||_1`` of the noise family against its closed form.

    ``perturb`` shifts the closed form and exists so the suite can be shown
    to fail.
    """
    grid = np.round(np.arange(10) * 0.1, 10) if grid is None else grid
    worst, bad, n = 0.0, 0, 0
    for C in classes:
        for a in grid:
            got = matrix_one_norm(invert(noise_family_matrix(C, a)))
            err = abs(got - (noise_family_inverse_norm(C, a) + perturb))
            worst = max(worst, err)
            bad += err > tol
            n += 1
    return CheckResult("closed_form_norm", "calibration", n, int(bad), worst)


def check_calibration(classes=(2, 3, 10), trials=10_000, rng=None):
    rng = np.random.default_rng(0) if rng is None else rng
    reports = [verify_inner_risk_inequality(C, trials, rng) for C in classes]
    bad = sum(r.violations + sum(r.chain_violations.values()) for r in reports)
    return CheckResult("calibration_chain", "calibration", trials * len(classes), int(bad),
                       details={"reports": [r.to_dict() for r in reports]})


def _random_instance(rng, max_classes=10):
    C = int(rng.integers(2, max_classes + 1))
    T = rng.dirichlet(np.ones(C), size=C).T
    return C, T


def check_lipschitz(trials=100_000, rng=None, tol=1e-9, batch=10_000):
    """Score-gradient norms of the log FC loss never exceed ``sqrt(2)``."""
    rng = np.random.default_rng(1) if rng is None else rng
    worst, bad, done = 0.0, 0, 0
    while done < trials:
        m = min(batch, trials - done)
        C = int(rng.integers(2, 11))
        T = random_column_stochastic(C, rng, max_condition=np.inf, size=m)
        labels = rng.integers(0, C, m)
        S = rng.normal(0.0, 5.0, (m, C))
        rows = safe_log(T[np.arange(m), labels])
        norms = np.linalg.norm(fc_log_grad_rows(S, rows), axis=1)
        worst = max(worst, float(norms.max()))
        bad += int(np.sum(norms > np.sqrt(2.0) + tol))
        done += m
    return CheckResult("lipschitz", "losses", trials, bad, worst)


def _central_difference(f, x, h=FD_STEP):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e.flat[j] = h
        g.flat[j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def relative_error(analytic, numeric, floor=FD_FLOOR):
    a, b = np.ravel(analytic), np.ravel(numeric)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def check_fc_gradients(trials=1000, rng=None, tol=1e-5):
    """Analytic FC-loss score gradients (log and square base) against central differences."""
    rng = np.random.default_rng(2) if rng is None else rng
    worst, bad = 0.0, 0
    for t in range(trials):
        C, T = _random_instance(rng)
        loss = CompositeFCLoss(T, "log" if t % 2 == 0 else "square")
        s = rng.normal(0.0, 2.0, C)
        c = int(rng.integers(C))
        fd = _central_difference(lambda v: fc_loss_value(loss, v, c), s)
        err = relative_error(fc_loss_gradient(loss, s, c), fd)
        worst = max(worst, err)
        bad += err >= tol
    return CheckResult("fc_gradient", "losses", trials, int(bad), worst)


def _random_bag_problem(rng):
    C = int(rng.integers(2, 5))
    d = int(rng.integers(1, 4))
    n_bags = int(rng.integers(1, 4))
    sizes = rng.integers(1, 6, n_bags)
    X = rng.normal(size=(int(sizes.sum()), d))
    ds = Dataset(X, np.zeros(X.shape[0], dtype=np.int64), C)
    cuts = np.cumsum(sizes)[:-1]
    bags = [Bag(idx, rng.dirichlet(np.ones(C))) for idx in np.split(np.arange(X.shape[0]), cuts)]
    clf = init_classifier(d, C, (), 0)
    clf.params = [rng.normal(0.0, 1.0, p.shape) for p in clf.params]
    return clf, bags, ds


def check_kl_gradients(trials=1000, rng=None, tol=1e-5):
    """Parameter gradients of the bag-level KL objective against central differences."""
    rng = np.random.default_rng(3) if rng is None else rng
    worst, bad = 0.0, 0
    for _ in range(trials):
        clf, bags, ds = _random_bag_problem(rng)
        _, grads = kl_bag_gradient(clf, bags, ds)
        flat = np.concatenate([p.ravel() for p in clf.params])
        shapes = [p.shape for p in clf.params]

        def f(v):
            probe = clf.copy()
            probe.params = [a.reshape(s) for a, s in zip(np.split(v, np.cumsum([np.prod(s) for s in shapes])[:-1]), shapes)]
            return kl_bag_loss(probe, bags, ds)

        err = relative_error(np.concatenate([g.ravel() for g in grads]), _central_difference(f, flat))
        worst = max(worst, err)
        bad += err >= tol
    return CheckResult("kl_gradient", "baselines", trials, int(bad), worst)


def random_ideal_group(C, sigma, rng, max_tries=100):
    """Random proportions whose hull holds ``sigma`` with a positive noisy prior.

    Rows are ``sigma + t (e_c - E^T alpha)`` for random simplex rows ``e_c`` and
    a random positive ``alpha``, so ``Gamma^T alpha = sigma`` by construction;
    ``t`` is the largest step keeping every entry non-negative, shrunk at random.
    """
    for _ in range(max_tries):
        alpha = rng.dirichlet(np.ones(C) * 2.0)
        E = rng.dirichlet(np.ones(C), size=C)
        D = E - alpha @ E
        neg = D < 0
        t_max = np.min(sigma[np.nonzero(neg)[1]] / -D[neg]) if neg.any() else 1.0
        Gamma = sigma + rng.uniform(0.2, 0.9) * min(t_max, 1.0) * D
        Gamma = np.clip(Gamma, 0.0, None)
        Gamma /= Gamma.sum(axis=1, keepdims=True)
        try:
            build_ideal(Gamma, sigma)
        except AssumptionViolation:
            continue
        return Gamma
    raise RuntimeError("could not draw a valid group")


def check_transitions(trials=1000, rng=None, tol=1e-9, tol_prior=1e-10):
    """All builders: column-stochastic ``T`` and the joint identity; ideal: ``Gamma^T alpha = sigma``."""
    rng = np.random.default_rng(4) if rng is None else rng
    worst, bad = 0.0, 0
    for _ in range(trials):
        C = int(rng.integers(2, 11))
        sigma = rng.dirichlet(np.ones(C) * 2.0)
        Gamma = random_ideal_group(C, sigma, rng)
        sizes = rng.integers(1, 50, C)
        bags = [Bag(np.arange(m), g) for m, g in zip(sizes, Gamma)]
        models = [build_ideal(Gamma, sigma), build_uniform(bags), build_approx(bags, sigma)]
        for m in models:
            col = float(np.abs(m.T_hat.sum(axis=0) - 1.0).max())
            joint = float(np.abs(m.T_hat * m.sigma_hat_i - Gamma * m.alpha_hat[:, None]).max())
            worst = max(worst, col, joint)
            bad += col > tol or joint > tol
        prior = float(np.abs(Gamma.T @ models[0].alpha_hat - sigma).max())
        worst = max(worst, prior)
        bad += prior > tol_prior
    return CheckResult("transition_construction", "reduction", trials, int(bad), worst)


def check_optimal_weights(tables=100, samples=1000, rng=None, tol=1e-9):
    """No random simplex weight vector beats the harmonic-mean weights."""
    rng = np.random.default_rng(5) if rng is None else rng
    worst, bad = -np.inf, 0
    for _ in range(tables):
        N, C = int(rng.integers(1, 11)), int(rng.integers(2, 11))
        n = rng.integers(1, 200, (N, C))
        best = group_bound_term(optimal_weights(n), n)
        W = rng.dirichlet(np.ones(N), size=samples)
        vals = np.sqrt(((W**2)[:, :, None] / n).sum(axis=(1, 2)))
        gap = float(best - vals.min())
        worst = max(worst, gap)
        bad += gap > tol
    return CheckResult("harmonic_weights", "reduction", tables * samples, int(bad), worst)


def unbiasedness_experiment(resamples=10_000, rng=None, n_groups=2, bag_size=20):
    """Monte Carlo of the weighted empirical FC risk on a 3-atom, 3-class problem.

    Bags are sampled from their proportion mixtures; the exact aggregate risk
    is computed from the noisy joint ``P(x, c) = sum_y P(x|y) sigma(y) T(c, y)``.
    Returns ``(mean, standard error, exact)``.
    """
    rng = np.random.default_rng(6) if rng is None else rng
    C = 3
    px_given_y = rng.dirichlet(np.ones(3), size=C)          # rows: class, cols: atom
    scores = rng.normal(0.0, 1.0, (3, C))                   # fixed scorer on the atoms
    sigma = rng.dirichlet(np.ones(C) * 3.0)
    weights = rng.dirichlet(np.ones(n_groups))
    sizes = rng.integers(bag_size // 2, bag_size + 1, (n_groups, C))

    exact = 0.0
    total = np.zeros(resamples)
    for i in range(n_groups):
        Gamma = random_ideal_group(C, sigma, rng)
        model = build_ideal(Gamma, sigma)
        log_T = safe_log(model.T_hat)
        # loss[atom, c] of the fixed scorer under this group's correction
        loss = np.stack([fc_log_loss_rows(scores, np.broadcast_to(log_T[c], (3, C)))[0]
                         for c in range(C)], axis=1)
        joint = np.einsum("ya,y,cy->ac", px_given_y, sigma, model.T_hat)
        exact += weights[i] * float(np.sum(joint * loss))
        for c in range(C):
            p_atoms = Gamma[c] @ px_given_y
            counts = rng.multinomial(sizes[i, c], p_atoms, size=resamples)
            total += weights[i] * model.alpha_hat[c] / sizes[i, c] * (counts @ loss[:, c])
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(resamples)), float(exact)


def check_unbiasedness(resamples=10_000, rng=None, n_sigma=3.0):
    mean, se, exact = unbiasedness_experiment(resamples, rng)
    dev = abs(mean - exact) / se
    return CheckResult("unbiasedness", "reduction", resamples, int(dev > n_sigma), dev,
                       {"mean": mean, "stderr": se, "exact": exact})


CATEGORY_EXIT = {"calibration": 5, "losses": 5, "baselines": 5, "reduction": 5}


def run_suite(trials=10_000, seed=0, norm_perturbation=0.0):
    """All checks with ``trials`` Monte Carlo draws where a count is configurable."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    ss = np.random.SeedSequence(seed).spawn(8)
    rngs = [np.random.default_rng(s) for s in ss]
    small = max(1, min(trials, 1000))
    return [
        check_closed_form_norms(perturb=norm_perturbation),
        check_calibration(trials=trials, rng=rngs[0]),
        check_lipschitz(trials=10 * trials, rng=rngs[1]),
        check_fc_gradients(trials=small, rng=rngs[2]),
        check_kl_gradients(trials=small, rng=rngs[3]),
        check_transitions(trials=small, rng=rngs[4]),
        check_optimal_weights(tables=max(1, small // 10), rng=rngs[5]),
        check_unbiasedness(resamples=max(trials, 100), rng=rngs[6]),
    ]
