"""Minibatch SGD on forward-corrected noisy labels with periodic regrouping.

Every point of bag ``k_{i,c}`` gets noisy label ``c`` and the row ``c`` of its
group's transition matrix. Each point also carries a relative weight
``r_j = P * coef_j`` where ``coef_j`` is the coefficient it has in the mode's
empirical objective and ``P`` the number of training points, so the
minibatch gradient ``(1/B) sum_j r_j grad lambda_j`` is unbiased for the
gradient of that objective. The coefficients are formed with exact rational
arithmetic; in particular equal-sized pure bags give ``r_j == 1.0`` exactly.
"""

import hashlib
import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import AssumptionViolation, ConfigError
from .losses import fc_log_grad_rows, fc_log_loss_rows, safe_log
from .models import evaluate, init_classifier
from .reduction import MODES, build_group_models, random_partition

WEIGHTINGS = ("uniform", "harmonic")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.01
    lr_decay_epochs: tuple | None = None
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    regroup_every: int = 20
    mode: str = "uniform"
    weights: str = "uniform"
    seed: int = 0
    hidden: tuple = ()
    sigma: tuple | None = None
    ideal_max_retries: int = 50

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.regroup_every < 1:
            raise ConfigError(f"regroup_every must be at least 1, got {self.regroup_every}")
        if self.lr <= 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ConfigError("need lr > 0, 0 <= momentum < 1 and weight_decay >= 0")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.weights not in WEIGHTINGS:
            raise ConfigError(f"weights must be one of {WEIGHTINGS}, got {self.weights!r}")
        if self.ideal_max_retries < 1:
            raise ConfigError("ideal_max_retries must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.sigma is not None:
            object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        if self.lr_decay_epochs is not None:
            object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))

    def decay_epochs(self):
        if self.lr_decay_epochs is not None:
            return self.lr_decay_epochs
        return (self.epochs // 2, (3 * self.epochs) // 4)

    def lr_at(self, epoch):
        n_decays = sum(1 for e in self.decay_epochs() if 0 < e <= epoch)
        return self.lr * self.lr_decay_factor**n_decays

    def to_dict(self):
        d = asdict(self)
        for key in ("hidden", "sigma", "lr_decay_epochs"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


class MetricsLog:
    """Per-epoch records preceded by an echo of the effective configuration."""

    def __init__(self, config, kind="llpfc"):
        self.config = dict(config)
        self.kind = kind
        self.records = []

    @property
    def config_hash(self):
        return config_hash({"kind": self.kind, **self.config})

    def header(self):
        return {"kind": self.kind, "config": self.config,
                "config_hash": self.config_hash, "seed": self.config.get("seed")}

    def append(self, record):
        self.records.append(record)

    def last(self, key):
        return self.records[-1][key] if self.records else None

    def column(self, key):
        return [r[key] for r in self.records]

    def to_jsonl(self):
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        log = cls(lines[0]["config"], lines[0].get("kind", "llpfc"))
        log.records = lines[1:]
        return log


class MomentumSGD:
    """``v <- mu v + (g + wd p)``; ``p <- p - lr v``."""

    def __init__(self, params, momentum, weight_decay):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr):
        for p, g, v in zip(params, grads, self.velocity):
            if self.weight_decay:
                g = g + self.weight_decay * p
            v *= self.momentum
            v += g
            p -= lr * v


@dataclass
class PointTable:
    """Training points in dataset-index order with their noisy-label data."""

    points: np.ndarray
    noisy_labels: np.ndarray
    log_rows: np.ndarray
    rel_weights: np.ndarray
    models: list | None = None
    grouping: object = None
    retries: int = 0

    @property
    def n(self):
        return self.points.size


def _exact_weight(model, n_groups, weights):
    # uniform weights are 1/N exactly; anything else is taken at its float value
    return Fraction(1, n_groups) if weights == "uniform" else Fraction(model.weight)


def noisy_point_table(inst, grouping, models, mode, weights):
    """Flatten a grouping into per-point noisy labels, log T rows and weights."""
    bags = inst.bags
    C = inst.n_classes
    pts, labels, rows, coefs = [], [], [], []
    for model, row in zip(models, grouping.groups):
        w = _exact_weight(model, grouping.n_groups, weights)
        n_i = sum(bags[k].size for k in row)
        log_T = safe_log(model.T_hat)
        for c, k in enumerate(row):
            bag = bags[k]
            if mode == "uniform":
                coef = w / n_i
            else:
                coef = w * Fraction(float(model.alpha_hat[c])) / bag.size
            pts.append(bag.indices)
            labels.append(np.full(bag.size, c, dtype=np.int64))
            rows.append(np.broadcast_to(log_T[c], (bag.size, C)))
            coefs.extend([coef] * bag.size)
    points = np.concatenate(pts)
    order = np.argsort(points, kind="stable")
    P = points.size
    rel = np.array([float(coefs[j] * P) for j in order])
    return PointTable(
        points[order],
        np.concatenate(labels)[order],
        np.concatenate(rows)[order],
        rel,
        models,
        grouping,
    )


def _regroup(inst, cfg, rng, epoch, sigma):
    attempts = cfg.ideal_max_retries if cfg.mode == "ideal" else 1
    for attempt in range(attempts):
        grouping = random_partition(inst.n_bags, inst.n_classes, rng, epoch)
        try:
            models = build_group_models(inst, grouping, cfg.mode, cfg.weights, sigma=sigma)
        except AssumptionViolation:
            if attempt == attempts - 1:
                raise
            continue
        table = noisy_point_table(inst, grouping, models, cfg.mode, cfg.weights)
        table.retries = attempt
        return table


def full_objective(clf, features, table):
    """Weighted full-pass objective ``(1/P) sum_j r_j lambda_j`` and saturation count."""
    S = clf.scores(features[table.points])
    values, sat = fc_log_loss_rows(S, table.log_rows)
    return float(np.sum(table.rel_weights * values) / table.n), int(sat.sum())


def objective_and_gradient(clf, features, table, idx=None):
    """Minibatch objective and parameter gradients over ``table`` rows ``idx``."""
    if idx is None:
        idx = np.arange(table.n)
    S, acts = clf.forward(features[table.points[idx]])
    rows = table.log_rows[idx]
    scale = table.rel_weights[idx] / idx.size
    values, _ = fc_log_loss_rows(S, rows)
    dS = fc_log_grad_rows(S, rows) * scale[:, None]
    return float(np.sum(scale * values)), clf.backward(acts, dS)


def rng_streams(seed):
    init_ss, group_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(group_ss),
            np.random.default_rng(shuffle_ss))


def _run(inst, cfg, clf, make_table, test, eval_train, kind):
    ds = inst.dataset
    features = ds.features
    init_rng, group_rng, shuffle_rng = rng_streams(cfg.seed)
    if clf is None:
        clf = init_classifier(ds.d, inst.n_classes, cfg.hidden, init_rng)
    else:
        clf = clf.copy()
    log = MetricsLog(cfg.to_dict(), kind)
    opt = MomentumSGD(clf.params, cfg.momentum, cfg.weight_decay)
    table = None
    for epoch in range(cfg.epochs):
        regrouped = epoch % cfg.regroup_every == 0
        if regrouped:
            table = make_table(group_rng, epoch)
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(table.n)
        for start in range(0, table.n, cfg.batch_size):
            _, grads = objective_and_gradient(clf, features, table, order[start:start + cfg.batch_size])
            opt.step(clf.params, grads, lr)
        objective, saturations = full_objective(clf, features, table)
        record = {
            "epoch": epoch,
            "objective": objective,
            "train_acc": evaluate(clf, ds) if eval_train else None,
            "test_acc": evaluate(clf, test) if test is not None else None,
            "regrouped": regrouped,
            "saturations": saturations,
        }
        if cfg.mode == "ideal" and kind == "llpfc":
            record["retries"] = table.retries if regrouped else 0
        log.append(record)
    return clf, log


def train(inst, cfg, clf=None, test=None, eval_train=False):
    """Train on the bags of ``inst`` only; labels are read just for ``eval_train``.

    Returns the trained classifier and its :class:`MetricsLog`.
    """
    if inst.n_bags < inst.n_classes:
        raise ConfigError(f"need at least {inst.n_classes} bags, got {inst.n_bags}")
    sigma = None
    if cfg.mode == "ideal":
        if not inst.has_gamma_true:
            raise ConfigError("ideal mode needs gamma_true on every bag")
        if cfg.sigma is None:
            raise ConfigError("ideal mode needs the clean prior sigma")
        sigma = np.array(cfg.sigma)

    def make_table(rng, epoch):
        return _regroup(inst, cfg, rng, epoch, sigma)

    return _run(inst, cfg, clf, make_table, test, eval_train, "llpfc")


def supervised_table(inst):
    """Every bagged point with its true label and the identity transition."""
    points = np.sort(np.concatenate([b.indices for b in inst.bags]), kind="stable")
    labels = np.asarray(inst.dataset.labels)[points]
    log_rows = safe_log(np.eye(inst.n_classes))[labels]
    return PointTable(points, labels, log_rows, np.ones(points.size))


def train_supervised(inst, cfg, clf=None, test=None, eval_train=False):
    """Cross-entropy control on the same points, through the same engine.

    The table is fixed, but it is "rebuilt" on the regrouping schedule so the
    records line up field for field with an LLPFC run.
    """
    table = supervised_table(inst)
    return _run(inst, cfg, clf, lambda rng, epoch: table, test, eval_train, "supervised")
