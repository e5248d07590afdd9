"""Datasets, bags and the synthetic bag-generation protocol.

Each bag is built by drawing a label proportion uniformly from the simplex,
drawing per-class counts from a multinomial with that proportion, and then
taking that many unused points of each class from the labelled pool. No
point is ever placed in two bags.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DataError
from .simplex import as_prob_vector


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer labels in ``0..n_classes-1``."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError(f"features must be a non-empty 2-D array, got shape {X.shape}")
        y = np.asarray(self.labels)
        if y.shape != (X.shape[0],):
            raise DataError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if y.size and (not np.issubdtype(y.dtype, np.integer)):
            raise DataError("labels must be integers")
        if self.n_classes < 2:
            raise DataError("need at least two classes")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise DataError(f"labels must lie in 0..{self.n_classes - 1}")
        object.__setattr__(self, "features", X)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class Bag:
    indices: np.ndarray
    gamma_hat: np.ndarray
    gamma_true: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise DataError("a bag must hold at least one index")
        if np.unique(idx).size != idx.size:
            raise DataError("bag indices must be distinct")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "gamma_hat", as_prob_vector(self.gamma_hat))
        if self.gamma_true is not None:
            object.__setattr__(self, "gamma_true", as_prob_vector(self.gamma_true))

    @property
    def size(self):
        return int(self.indices.size)


@dataclass(frozen=True)
class LLPInstance:
    """A dataset together with its bags.

    Training code only reads ``dataset.features`` and the bags; the labels
    stay on the dataset for bag construction and evaluation.
    """

    dataset: Dataset
    bags: tuple
    seed: int | None = None
    n_classes: int = field(init=False)

    def __post_init__(self):
        bags = tuple(self.bags)
        if not bags:
            raise DataError("an LLP instance needs at least one bag")
        C = self.dataset.n_classes
        for k, bag in enumerate(bags):
            if bag.gamma_hat.size != C:
                raise DataError(f"bag {k} has {bag.gamma_hat.size} proportions, expected {C}")
            if bag.indices.max() >= self.dataset.n:
                raise DataError(f"bag {k} references a point outside the dataset")
        object.__setattr__(self, "bags", bags)
        object.__setattr__(self, "n_classes", C)

    @property
    def n_bags(self):
        return len(self.bags)

    @property
    def has_gamma_true(self):
        return all(b.gamma_true is not None for b in self.bags)


def empirical_proportion(labels, n_classes):
    """Exact label histogram divided by the bag size."""
    counts = np.bincount(np.asarray(labels), minlength=n_classes)
    m = int(counts.sum())
    return np.array([float(Fraction(int(c), m)) for c in counts])


def sample_gamma_uniform(n_classes, rng):
    """Uniform draw from the simplex via normalised exponential spacings."""
    if n_classes < 2:
        raise ValueError(f"need at least two classes, got {n_classes}")
    e = rng.standard_exponential(n_classes)
    return e / e.sum()


def _bag_counts(gamma, bag_size, available, rng):
    counts = rng.multinomial(bag_size, gamma)
    counts = np.minimum(counts, available)
    overflow = bag_size - int(counts.sum())
    while overflow > 0:
        room = available - counts
        open_classes = room > 0
        if not open_classes.any():
            exhausted = [int(c) for c in np.flatnonzero(gamma > 0)]
            raise DataError(
                f"classes {exhausted} exhausted with {overflow} points left to place"
            )
        mass = np.where(open_classes, gamma, 0.0)
        if mass.sum() <= 0.0:
            mass = open_classes.astype(float)
        extra = rng.multinomial(overflow, mass / mass.sum())
        extra = np.minimum(extra, room)
        counts += extra
        overflow -= int(extra.sum())
    return counts


def generate_bags(ds, bag_size, n_bags, rng, seed=None):
    """Draw ``n_bags`` disjoint bags of ``bag_size`` points from ``ds``.

    Multinomial draws that ask for more points of a class than remain unused
    are truncated and the excess is redistributed over the other classes in
    proportion to their share of the bag's label proportion.
    """
    if bag_size < 1 or n_bags < 1:
        raise DataError("bag_size and n_bags must be positive")
    if n_bags * bag_size > ds.n:
        raise DataError(
            f"{n_bags} bags of size {bag_size} need {n_bags * bag_size} points, "
            f"dataset has {ds.n}"
        )
    C = ds.n_classes
    pools = [rng.permutation(np.flatnonzero(ds.labels == c)) for c in range(C)]
    used = np.zeros(C, dtype=np.int64)
    bags = []
    for _ in range(n_bags):
        gamma = sample_gamma_uniform(C, rng)
        available = np.array([pools[c].size for c in range(C)]) - used
        counts = _bag_counts(gamma, bag_size, available, rng)
        parts = []
        for c in range(C):
            parts.append(pools[c][used[c]:used[c] + counts[c]])
            used[c] += counts[c]
        idx = rng.permutation(np.concatenate(parts))
        gamma_hat = empirical_proportion(ds.labels[idx], C)
        bags.append(Bag(idx, gamma_hat, gamma))
    return LLPInstance(ds, tuple(bags), seed)


def pooled_prior(inst_or_bags):
    """Size-weighted average of the bags' observed proportions."""
    bags = inst_or_bags.bags if isinstance(inst_or_bags, LLPInstance) else tuple(inst_or_bags)
    if not bags:
        raise ValueError("need at least one bag")
    sizes = np.array([b.size for b in bags], dtype=float)
    G = np.stack([b.gamma_hat for b in bags])
    return as_prob_vector(sizes @ G / sizes.sum())


# --- file formats ---------------------------------------------------------


def _parse_cell(text, row, col, path):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}: row {row}, column {col}: non-numeric value {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}: row {row}, column {col}: non-finite value {text!r}")
    return value


def read_dataset_csv(path, n_classes=None):
    """Read numeric feature columns followed by an integer ``label`` column.

    A header row is optional; it is detected by a non-numeric final cell
    equal to ``label``. Row numbers in error messages are 1-based file lines.
    """
    features, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and row[-1].strip().lower() == "label":
                continue
            if len(row) < 2:
                raise DataError(f"{path}: row {lineno}: expected features and a label")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}: row {lineno}: expected {width} columns, got {len(row)}")
            x = [_parse_cell(c, lineno, j + 1, path) for j, c in enumerate(row[:-1])]
            label = _parse_cell(row[-1], lineno, len(row), path)
            if label != int(label) or label < 0:
                raise DataError(f"{path}: row {lineno}, column {len(row)}: bad label {row[-1]!r}")
            features.append(x)
            labels.append(int(label))
    if not labels:
        raise DataError(f"{path}: no data rows")
    y = np.array(labels, dtype=np.int64)
    C = n_classes if n_classes is not None else max(int(y.max()) + 1, 2)
    return Dataset(np.array(features), y, C)


def write_dataset_csv(path, ds):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.d)] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def write_bags_jsonl(path, inst, extra_meta=None):
    meta = {"n_bags": inst.n_bags, "C": inst.n_classes, "seed": inst.seed}
    if extra_meta:
        meta.update(extra_meta)
    lines = [json.dumps(meta, sort_keys=True)]
    for k, bag in enumerate(inst.bags):
        lines.append(json.dumps({
            "bag_id": k,
            "indices": [int(i) for i in bag.indices],
            "gamma_hat": [float(g) for g in bag.gamma_hat],
            "gamma_true": None if bag.gamma_true is None else [float(g) for g in bag.gamma_true],
        }))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_bags_jsonl(path, ds):
    """Load a bags file written by :func:`write_bags_jsonl` against ``ds``."""
    with open(path) as fh:
        raw = [line for line in fh if line.strip()]
    if not raw:
        raise DataError(f"{path}: empty bags file")
    try:
        meta = json.loads(raw[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line 1: {exc}") from None
    if not {"n_bags", "C"} <= meta.keys():
        raise DataError(f"{path}: line 1: metadata must contain n_bags and C")
    if meta["C"] != ds.n_classes:
        raise DataError(f"{path}: bags have C={meta['C']}, dataset has {ds.n_classes} classes")
    bags = []
    for lineno, line in enumerate(raw[1:], start=2):
        try:
            obj = json.loads(line)
            bags.append(Bag(obj["indices"], obj["gamma_hat"], obj.get("gamma_true")))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    if len(bags) != meta["n_bags"]:
        raise DataError(f"{path}: metadata says {meta['n_bags']} bags, found {len(bags)}")
    return LLPInstance(ds, tuple(bags), meta.get("seed")), meta
