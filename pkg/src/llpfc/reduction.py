"""Reduction of LLP to learning with multiple noise transition matrices.

Bags are randomly split into groups of ``C``; inside a group the bag in
position ``c`` gets noisy label ``c`` and the group's transition matrix is

    T(c1, c2) = gamma_{c1}(c2) * alpha(c1) / sigma(c2)

where ``alpha`` is the group's noisy prior and ``sigma`` the clean prior
(or the per-group estimate of it, for the practical variants).
"""

import json
from dataclasses import dataclass

import numpy as np

from .bags import pooled_prior
from .errors import AssumptionViolation, SingularMatrix
from .simplex import (
    as_prob_vector,
    check_row_stochastic,
    invert,
    solve_simplex_least_squares,
)

MODES = ("ideal", "uniform", "approx")


@dataclass(frozen=True)
class Grouping:
    """``groups[i, c]`` is the index of the bag carrying noisy label ``c`` in group ``i``."""

    groups: np.ndarray
    epoch_created: int = 0

    def __post_init__(self):
        g = np.asarray(self.groups, dtype=np.int64)
        if g.ndim != 2 or g.size == 0:
            raise ValueError("groups must be a non-empty (N, C) array")
        if np.unique(g).size != g.size:
            raise ValueError("a bag appears in more than one group slot")
        object.__setattr__(self, "groups", g)

    @property
    def n_groups(self):
        return self.groups.shape[0]


@dataclass(frozen=True)
class GroupNoiseModel:
    T_hat: np.ndarray
    alpha_hat: np.ndarray
    sigma_hat_i: np.ndarray
    bag_refs: tuple = ()
    weight: float = 1.0

    def to_json(self, group):
        return {
            "group": group,
            "T": self.T_hat.tolist(),
            "alpha": self.alpha_hat.tolist(),
            "sigma_i": self.sigma_hat_i.tolist(),
            "bags": [int(b) for b in self.bag_refs],
            "weight": float(self.weight),
        }


def random_partition(n_bags, n_classes, rng, epoch=0):
    """Uniformly random assignment of bags to ``N = n_bags // C`` groups.

    When ``C`` does not divide ``n_bags`` the left-over bags are a uniformly
    random subset, so repeated calls rotate which bags sit out.
    """
    if n_bags < n_classes:
        raise ValueError(f"need at least {n_classes} bags to form a group, got {n_bags}")
    n_groups = n_bags // n_classes
    perm = rng.permutation(n_bags)[: n_groups * n_classes]
    return Grouping(perm.reshape(n_groups, n_classes), epoch)


def _transition_matrix(Gamma, alpha, sigma):
    C = Gamma.shape[0]
    joint = Gamma * alpha[:, None]
    T = np.empty_like(joint)
    zero = sigma <= 0.0
    T[:, ~zero] = joint[:, ~zero] / sigma[~zero]
    # a class absent from every bag in the group: no information, uniform column
    T[:, zero] = 1.0 / C
    return T


def build_ideal(group_gammas, sigma, bag_refs=(), weight=1.0):
    """Noise model from the true proportions and the true clean prior.

    Raises :class:`AssumptionViolation` if the proportion matrix is singular
    or the clean prior is not strictly inside the hull of its rows.
    """
    Gamma = check_row_stochastic(np.asarray(group_gammas, dtype=float))
    sigma = as_prob_vector(sigma)
    if np.any(sigma <= 0.0):
        raise AssumptionViolation(
            AssumptionViolation.PRIOR_OUTSIDE_HULL, "clean prior must be strictly positive"
        )
    try:
        inv = invert(Gamma)
    except SingularMatrix as exc:
        raise AssumptionViolation(AssumptionViolation.SINGULAR, str(exc)) from exc
    alpha = inv.T @ sigma
    # one step of iterative refinement keeps Gamma^T alpha = sigma to ~1e-16
    alpha += inv.T @ (sigma - Gamma.T @ alpha)
    if np.any(alpha <= 0.0):
        raise AssumptionViolation(
            AssumptionViolation.PRIOR_OUTSIDE_HULL,
            f"noisy prior {alpha} has non-positive entries",
        )
    T = _transition_matrix(Gamma, alpha, sigma)
    return GroupNoiseModel(T, alpha, sigma.copy(), tuple(bag_refs), weight)


def _gamma_hat_matrix(group_bags):
    return np.stack([b.gamma_hat for b in group_bags])


def build_uniform(group_bags, bag_refs=(), weight=1.0):
    """Noise model with the noisy prior set to the bags' size shares."""
    sizes = np.array([b.size for b in group_bags], dtype=float)
    if np.any(sizes < 1):
        raise ValueError("empty bag in group")
    Gamma = _gamma_hat_matrix(group_bags)
    alpha = sizes / sizes.sum()
    sigma_i = Gamma.T @ alpha
    T = _transition_matrix(Gamma, alpha, sigma_i)
    return GroupNoiseModel(T, alpha, sigma_i, tuple(bag_refs), weight)


def build_approx(group_bags, sigma_hat_global, bag_refs=(), weight=1.0):
    """Noisy prior fitted by least squares against the pooled prior estimate."""
    if any(b.size < 1 for b in group_bags):
        raise ValueError("empty bag in group")
    Gamma = _gamma_hat_matrix(group_bags)
    alpha = solve_simplex_least_squares(Gamma, sigma_hat_global)
    sigma_i = Gamma.T @ alpha
    T = _transition_matrix(Gamma, alpha, sigma_i)
    return GroupNoiseModel(T, alpha, sigma_i, tuple(bag_refs), weight)


def optimal_weights(bag_sizes_per_group):
    """Group weights proportional to the harmonic mean of per-class counts.

    These minimise ``sum_i sum_c w_i^2 / n_ic`` over the simplex.
    """
    n = np.asarray(bag_sizes_per_group, dtype=float)
    if n.ndim != 2 or n.size == 0:
        raise ValueError("expected an (N, C) table of counts")
    if np.any(n < 1):
        raise ValueError("all counts must be at least 1")
    hm = n.shape[1] / (1.0 / n).sum(axis=1)
    return hm / hm.sum()


def group_bound_term(weights, bag_sizes_per_group):
    """``sqrt(sum_i sum_c w_i^2 / n_ic)``, the sample-size factor of the generalisation bound."""
    w = np.asarray(weights, dtype=float)
    n = np.asarray(bag_sizes_per_group, dtype=float)
    return float(np.sqrt(np.sum(w[:, None] ** 2 / n)))


def build_group_models(inst, grouping, mode, weights="uniform", sigma=None, sigma_hat=None):
    """Build one noise model per group of ``grouping``.

    ``sigma`` (the clean prior) is required in ideal mode, which also needs
    ``gamma_true`` on every bag. ``sigma_hat`` defaults to the pooled prior
    in approx mode. Errors in ideal mode carry the offending group index.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    bags = inst.bags
    G = grouping.groups
    sizes = np.array([[bags[k].size for k in row] for row in G])
    if weights == "uniform":
        w = np.full(G.shape[0], 1.0 / G.shape[0])
    elif weights in ("harmonic", "harmonic_mean"):
        w = optimal_weights(sizes)
    else:
        raise ValueError(f"unknown weighting {weights!r}")

    if mode == "approx" and sigma_hat is None:
        sigma_hat = pooled_prior(inst)

    models = []
    for i, row in enumerate(G):
        group_bags = [bags[k] for k in row]
        if mode == "ideal":
            if sigma is None:
                raise ValueError("ideal mode needs the clean prior sigma")
            if any(b.gamma_true is None for b in group_bags):
                raise ValueError("ideal mode needs gamma_true on every bag")
            gammas = np.stack([b.gamma_true for b in group_bags])
            try:
                m = build_ideal(gammas, sigma, row, w[i])
            except AssumptionViolation as exc:
                exc.group = i
                raise
        elif mode == "uniform":
            m = build_uniform(group_bags, row, w[i])
        else:
            m = build_approx(group_bags, sigma_hat, row, w[i])
        models.append(m)
    return models


def dump_group_models(path, models):
    with open(path, "w") as fh:
        for i, m in enumerate(models):
            fh.write(json.dumps(m.to_json(i)) + "\n")
