"""Score functions ``R^d -> R^C``: a linear model and a small ReLU MLP.

Both expose ``forward`` (scores plus a cache) and ``backward`` (parameter
gradients from score gradients) so the trainers can drive them with any
loss whose score gradient they can compute.
"""

import numpy as np

from .errors import ConfigError, DataError

MODEL_FORMAT = "llpfc-model"
MODEL_VERSION = 1


class Classifier:
    """Affine layers with ReLU between them; no hidden layers is softmax-linear."""

    def __init__(self, dims, params):
        self.dims = tuple(int(d) for d in dims)
        self.params = [np.array(p, dtype=float) for p in params]
        if len(self.params) != 2 * (len(self.dims) - 1):
            raise ValueError("parameter list does not match layer dimensions")

    @property
    def kind(self):
        return "linear" if len(self.dims) == 2 else "mlp"

    @property
    def d(self):
        return self.dims[0]

    @property
    def n_classes(self):
        return self.dims[-1]

    def copy(self):
        return Classifier(self.dims, [p.copy() for p in self.params])

    def _check_input(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DataError(f"expected inputs of dimension {self.d}, got shape {X.shape}")
        return X

    def forward(self, X):
        X = self._check_input(X)
        acts = [X]
        h = X
        n_layers = len(self.dims) - 1
        for layer in range(n_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            h = h @ W + b
            if layer < n_layers - 1:
                h = np.maximum(h, 0.0)
                acts.append(h)
        return h, acts

    def scores(self, X):
        return self.forward(X)[0]

    def backward(self, acts, dS):
        """Gradients of ``sum(dS * scores)`` with respect to every parameter."""
        grads = [None] * len(self.params)
        delta = dS
        for layer in reversed(range(len(self.dims) - 1)):
            a = acts[layer]
            grads[2 * layer] = a.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.params[2 * layer].T) * (a > 0.0)
        return grads

    def predict(self, X):
        """Lowest-index argmax of the scores (softmax is monotone)."""
        return np.argmax(self.scores(X), axis=1)

    def predict_one(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise DataError(f"expected a vector of dimension {self.d}, got shape {x.shape}")
        return int(self.predict(x[None, :])[0])

    def __eq__(self, other):
        return (
            isinstance(other, Classifier)
            and self.dims == other.dims
            and all(np.array_equal(a, b) for a, b in zip(self.params, other.params))
        )

    # -- serialisation ---------------------------------------------------

    def to_text(self, meta=None):
        """Versioned text: header, ``meta`` lines, then each parameter row-major."""
        lines = [f"{MODEL_FORMAT} {MODEL_VERSION}", f"kind {self.kind}",
                 "dims " + " ".join(str(d) for d in self.dims)]
        for key, value in sorted((meta or {}).items()):
            lines.append(f"meta {key} {value}")
        for j, p in enumerate(self.params):
            shape = p.shape if p.ndim == 2 else (1, p.shape[0])
            name = ("W" if j % 2 == 0 else "b") + str(j // 2)
            lines.append(f"param {name} {p.ndim} {shape[0]} {shape[1]}")
            for row in p.reshape(shape):
                lines.append(" ".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("meta ")]
        if len(lines) < 3:
            raise DataError("truncated model file")
        head = lines[0].split()
        if len(head) != 2 or head[0] != MODEL_FORMAT or head[1] != str(MODEL_VERSION):
            raise DataError(f"not a version-{MODEL_VERSION} model file: {lines[0]!r}")
        try:
            dims = [int(v) for v in lines[2].split()[1:]]
            params, pos = [], 3
            while pos < len(lines):
                _, _, ndim, rows, cols = lines[pos].split()
                rows, cols = int(rows), int(cols)
                block = np.array([[float(v) for v in lines[pos + 1 + r].split()] for r in range(rows)])
                if block.shape != (rows, cols):
                    raise ValueError(f"parameter block {len(params)} has shape {block.shape}")
                params.append(block if int(ndim) == 2 else block.reshape(cols))
                pos += 1 + rows
            return cls(dims, params)
        except (ValueError, IndexError) as exc:
            raise DataError(f"malformed model file: {exc}") from None

    def save(self, path, meta=None):
        with open(path, "w") as fh:
            fh.write(self.to_text(meta))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


def init_classifier(d, n_classes, hidden=(), seed=0):
    """Zero-initialised linear model, or an MLP with uniform ``1/sqrt(fan_in)`` init.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    dims = (int(d), *(int(h) for h in hidden), int(n_classes))
    if any(w < 1 for w in dims):
        raise ConfigError(f"all layer widths must be positive, got {dims}")
    if len(dims) == 2:
        return Classifier(dims, [np.zeros((dims[0], dims[1])), np.zeros(dims[1])])
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
        params.append(rng.uniform(-scale, scale, size=fan_out))
    return Classifier(dims, params)


def evaluate(clf, ds):
    """Fraction of points of ``ds`` classified correctly."""
    if ds is None or ds.n == 0:
        raise DataError("cannot evaluate on an empty dataset")
    return float(np.mean(clf.predict(ds.features) == np.asarray(ds.labels)))
