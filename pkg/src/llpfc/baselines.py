"""Proportion-matching baseline trained on minibatches of bags.

For a minibatch of ``B`` bags the objective is

    -(1 / (C B)) sum_k sum_c gamma_k(c) log(mean_j softmax(s_j)_c)

with the mean over the bag's points taken before the log.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .losses import SATURATION_CAP, softmax
from .models import evaluate, init_classifier
from .trainer import MetricsLog, MomentumSGD, rng_streams


@dataclass(frozen=True)
class KLBaselineConfig:
    epochs: int = 100
    bags_per_minibatch: int = 2
    lr: float = 0.01
    lr_decay_epochs: tuple | None = None
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    hidden: tuple = ()

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.bags_per_minibatch < 1:
            raise ConfigError("bags_per_minibatch must be at least 1")
        if self.lr <= 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ConfigError("need lr > 0, 0 <= momentum < 1 and weight_decay >= 0")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.lr_decay_epochs is not None:
            object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))

    def lr_at(self, epoch):
        decay = self.lr_decay_epochs
        if decay is None:
            decay = (self.epochs // 2, (3 * self.epochs) // 4)
        return self.lr * self.lr_decay_factor ** sum(1 for e in decay if 0 < e <= epoch)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(d["hidden"])
        if d["lr_decay_epochs"] is not None:
            d["lr_decay_epochs"] = list(d["lr_decay_epochs"])
        return d


def kl_bag_terms(score_blocks, gammas):
    """Objective value and score gradients for one minibatch of bags.

    ``score_blocks[k]`` holds the scores of bag ``k`` (one row per point).
    A class with positive proportion but zero mean prediction contributes
    :data:`SATURATION_CAP` and no gradient.
    """
    B = len(score_blocks)
    if B == 0:
        raise ValueError("need at least one bag")
    C = np.asarray(gammas[0]).size
    scale = 1.0 / (C * B)
    total = 0.0
    grads = []
    for S, gamma in zip(score_blocks, gammas):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if S.shape[0] == 0:
            raise ValueError("empty bag")
        gamma = np.asarray(gamma, dtype=float)
        P = softmax(S)
        pbar = P.mean(axis=0)
        live = gamma > 0
        dead = live & (pbar <= 0)
        ok = live & ~dead
        total += scale * (SATURATION_CAP * gamma[dead].sum() - np.sum(gamma[ok] * np.log(pbar[ok])))
        g = np.zeros(C)
        g[ok] = -scale * gamma[ok] / pbar[ok]
        # chain rule through the mean of softmaxes: J_j = diag(p_j) - p_j p_j^T
        dS = (P * g - P * (P @ g)[:, None]) / S.shape[0]
        grads.append(dS)
    return float(total), grads


def kl_bag_loss(clf, bags, ds):
    """Baseline objective of ``clf`` on a minibatch of bags (features only)."""
    blocks = [clf.scores(ds.features[b.indices]) for b in bags]
    return kl_bag_terms(blocks, [b.gamma_hat for b in bags])[0]


def kl_bag_gradient(clf, bags, ds):
    """Objective value and parameter gradients of :func:`kl_bag_loss`."""
    X = ds.features[np.concatenate([b.indices for b in bags])]
    S, acts = clf.forward(X)
    cuts = np.cumsum([b.size for b in bags])[:-1]
    value, dblocks = kl_bag_terms(np.split(S, cuts), [b.gamma_hat for b in bags])
    return value, clf.backward(acts, np.concatenate(dblocks))


def train_kl(inst, cfg, clf=None, test=None, eval_train=False):
    """SGD with momentum over shuffled minibatches of bags.

    The logged objective is the baseline loss with every bag in one batch.
    """
    if cfg.bags_per_minibatch > inst.n_bags:
        raise ConfigError(
            f"bags_per_minibatch={cfg.bags_per_minibatch} exceeds the {inst.n_bags} bags"
        )
    ds = inst.dataset
    init_rng, _, shuffle_rng = rng_streams(cfg.seed)
    if clf is None:
        clf = init_classifier(ds.d, inst.n_classes, cfg.hidden, init_rng)
    else:
        clf = clf.copy()
    log = MetricsLog(cfg.to_dict(), "kl_baseline")
    opt = MomentumSGD(clf.params, cfg.momentum, cfg.weight_decay)
    bags = inst.bags
    B = cfg.bags_per_minibatch
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(len(bags))
        for start in range(0, len(bags), B):
            batch = [bags[k] for k in order[start:start + B]]
            _, grads = kl_bag_gradient(clf, batch, ds)
            opt.step(clf.params, grads, lr)
        log.append({
            "epoch": epoch,
            "objective": kl_bag_loss(clf, bags, ds),
            "train_acc": evaluate(clf, ds) if eval_train else None,
            "test_acc": evaluate(clf, test) if test is not None else None,
            "regrouped": False,
            "saturations": 0,
        })
    return clf, log
