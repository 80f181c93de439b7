"""Desk-scale differentiable models with closed-form per-example gradients.

Four model kinds over flat parameter vectors:

* quadratic -- f(theta; x) = 0.5 ||theta - x||^2
* linear    -- squared error of x.theta against a real target
* logistic  -- binary cross-entropy of sigmoid(x.theta) against {0,1}
* mlp       -- one tanh hidden layer, squared error, manual backprop

Gradients are exact; the finite-difference oracle in the tests holds them
to account.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from fiberopt.errors import InvalidParameter

KINDS = ("quadratic", "linear", "logistic", "mlp")


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise InvalidParameter("features must be a nonempty N x p matrix")
        if self.targets.shape[0] != self.features.shape[0]:
            raise InvalidParameter("targets must have one entry per example")
        if not (np.isfinite(self.features).all() and np.isfinite(self.targets).all()):
            raise InvalidParameter("dataset entries must be finite")

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    n_features: int
    hidden: int = 0  # mlp only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown model kind {self.kind!r}")
        if self.kind == "mlp" and not 1 <= self.hidden <= 32:
            raise InvalidParameter("mlp hidden width must be in 1..32")

    @property
    def n_params(self) -> int:
        if self.kind == "mlp":
            # W1 (h, p), b1 (h), w2 (h), b2 (1)
            return self.hidden * self.n_features + 2 * self.hidden + 1
        return self.n_features


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _mlp_unpack(spec, theta):
    h, p = spec.hidden, spec.n_features
    w1 = theta[: h * p].reshape(h, p)
    b1 = theta[h * p: h * p + h]
    w2 = theta[h * p + h: h * p + 2 * h]
    b2 = theta[-1]
    return w1, b1, w2, b2


def per_example_losses(spec: ModelSpec, theta: np.ndarray, dataset: Dataset,
                       idx=None) -> np.ndarray:
    x = dataset.features if idx is None else dataset.features[idx]
    y = dataset.targets if idx is None else dataset.targets[idx]
    if spec.kind == "quadratic":
        return 0.5 * np.sum((theta[None, :] - x) ** 2, axis=1)
    if spec.kind == "linear":
        resid = x @ theta - y
        return 0.5 * resid**2
    if spec.kind == "logistic":
        z = x @ theta
        # stable BCE: log(1 + e^z) - y z
        return np.logaddexp(0.0, z) - y * z
    w1, b1, w2, b2 = _mlp_unpack(spec, theta)
    hid = np.tanh(x @ w1.T + b1)
    out = hid @ w2 + b2
    return 0.5 * (out - y) ** 2


def loss(spec: ModelSpec, theta: np.ndarray, dataset: Dataset, idx=None) -> float:
    return float(np.mean(per_example_losses(spec, theta, dataset, idx)))


def per_example_gradients(spec: ModelSpec, theta: np.ndarray, dataset: Dataset,
                          idx=None) -> np.ndarray:
    """Exact per-example gradients, one row per example."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[0] != spec.n_params:
        raise InvalidParameter(
            f"theta has {theta.shape[0]} entries, spec needs {spec.n_params}")
    x = dataset.features if idx is None else dataset.features[idx]
    y = dataset.targets if idx is None else dataset.targets[idx]
    if spec.kind == "quadratic":
        return theta[None, :] - x
    if spec.kind == "linear":
        resid = x @ theta - y
        return resid[:, None] * x
    if spec.kind == "logistic":
        resid = _sigmoid(x @ theta) - y
        return resid[:, None] * x
    w1, b1, w2, b2 = _mlp_unpack(spec, theta)
    pre = x @ w1.T + b1  # (B, h)
    hid = np.tanh(pre)
    out = hid @ w2 + b2  # (B,)
    dout = out - y
    d_w2 = dout[:, None] * hid
    d_b2 = dout
    d_pre = dout[:, None] * w2[None, :] * (1.0 - hid**2)  # (B, h)
    d_w1 = d_pre[:, :, None] * x[:, None, :]  # (B, h, p)
    d_b1 = d_pre
    B = x.shape[0]
    return np.concatenate(
        [d_w1.reshape(B, -1), d_b1, d_w2, d_b2[:, None]], axis=1)


def batch_gradient(spec, theta, dataset, idx=None) -> np.ndarray:
    return per_example_gradients(spec, theta, dataset, idx).mean(axis=0)


def make_synthetic(kind: str, n: int, p: int, seed: int,
                   noise_level: float = 0.1) -> Dataset:
    """Gaussian features with a planted teacher (or fixed quadratic targets)."""
    if kind not in KINDS:
        raise InvalidParameter(f"unknown model kind {kind!r}")
    rng = np.random.default_rng(seed)
    meta = {"generator": kind, "seed": seed, "n": n, "p": p,
            "noise_level": noise_level}
    x = rng.normal(size=(n, p))
    if kind == "quadratic":
        # examples are targets themselves; optimum is their mean
        return Dataset(features=x, targets=np.zeros(n), metadata=meta)
    teacher = rng.normal(size=p) / np.sqrt(p)
    if kind == "logistic":
        z = x @ teacher * 4.0 + noise_level * rng.normal(size=n)
        y = (z > 0).astype(np.float64)
    else:  # linear and mlp share a linear teacher signal
        y = x @ teacher + noise_level * rng.normal(size=n)
    meta["teacher"] = teacher.tolist()
    return Dataset(features=x, targets=y, metadata=meta)


# ---------------------------------------------------------------------------
# CSV round-trip with a one-line JSON header comment


def save_csv(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(dataset.metadata) + "\n")
        cols = [f"x{i}" for i in range(dataset.n_features)] + ["y"]
        fh.write(",".join(cols) + "\n")
        data = np.column_stack([dataset.features, dataset.targets])
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def load_csv(path) -> Dataset:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise InvalidParameter("missing JSON header comment")
        meta = json.loads(header[2:])
        fh.readline()  # column names
        data = np.loadtxt(io.StringIO(fh.read()), delimiter=",", ndmin=2)
    return Dataset(features=data[:, :-1], targets=data[:, -1], metadata=meta)
