"""Small softmax classifiers for empirical privacy experiments.

One hidden layer, cross-entropy loss, hand-rolled backprop (verified against
finite differences in the test suite). Training is plain minibatch gradient
descent with optional injected Gaussian noise whose magnitude follows the
current gradient, either per layer or per parameter. All randomness comes
from tagged counter-based streams, so a seed pins initialization, batch
selection, and noise draws; two trainings that share a seed share all three.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import BatchLargerThanDataset, IndexOutOfRange
from .rng import tagged_stream
from .sde import DatasetGradientDrift

_INIT_TAG, _BATCH_TAG, _NOISE_TAG = 1, 2, 3


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature rows with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels)
        if not np.issubdtype(y.dtype, np.integer):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64).ravel()
        if x.shape[0] != y.shape[0]:
            raise ValueError("features and labels must have the same length")
        if x.shape[0] < 1:
            raise ValueError("dataset must contain at least one record")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if np.any(y < 0):
            raise ValueError("labels must be nonnegative")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


@dataclass(frozen=True, eq=False)
class MlpModel:
    """One-hidden-layer classifier; params holds (W1, b1, W2, b2) flattened."""

    layer_sizes: tuple[int, int, int]
    params: np.ndarray
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        m, h, k = self.layer_sizes
        expected = (m + 1) * h + (h + 1) * k
        p = np.asarray(self.params, dtype=float).ravel()
        if p.shape[0] != expected:
            raise ValueError(f"params length {p.shape[0]} != expected {expected}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "layer_sizes", tuple(int(v) for v in self.layer_sizes))

    @property
    def n_params(self) -> int:
        return self.params.shape[0]


def layer_slices(layer_sizes: tuple[int, int, int]) -> list[slice]:
    """Parameter-vector slices of the two layers (weights and bias together)."""
    m, h, k = layer_sizes
    first = (m + 1) * h
    return [slice(0, first), slice(first, first + (h + 1) * k)]


def _unpack(layer_sizes, params):
    m, h, k = layer_sizes
    i = 0
    w1 = params[i : i + m * h].reshape(m, h); i += m * h
    b1 = params[i : i + h]; i += h
    w2 = params[i : i + h * k].reshape(h, k); i += h * k
    b2 = params[i : i + k]
    return w1, b1, w2, b2


def init_model(n_features: int, hidden: int, classes: int, seed: int,
               activation: str = "relu") -> MlpModel:
    """Weights uniform on +-1/sqrt(fan_in), biases zero, from the seed's
    init stream."""
    rng = tagged_stream(seed, _INIT_TAG)
    m, h, k = n_features, hidden, classes
    w1 = rng.uniform(-1.0, 1.0, size=(m, h)) / np.sqrt(m)
    w2 = rng.uniform(-1.0, 1.0, size=(h, k)) / np.sqrt(h)
    params = np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(k)])
    return MlpModel((m, h, k), params, activation, seed)


def _hidden(model: MlpModel, x: np.ndarray):
    w1, b1, w2, b2 = _unpack(model.layer_sizes, model.params)
    z1 = x @ w1 + b1
    if model.activation == "relu":
        a1, d1 = np.maximum(z1, 0.0), (z1 > 0.0).astype(float)
    else:
        a1 = np.tanh(z1)
        d1 = 1.0 - a1**2
    return w1, b1, w2, b2, a1, d1


def forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Class probabilities, shape (n, classes)."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    *_, w2, b2, a1, _ = _hidden(model, x)
    z2 = a1 @ w2 + b2
    z2 = z2 - z2.max(axis=1, keepdims=True)
    e = np.exp(z2)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(model: MlpModel, features: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the rows and its gradient in the flat params."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels).ravel()
    n = x.shape[0]
    w1, b1, w2, b2, a1, d1 = _hidden(model, x)
    z2 = a1 @ w2 + b2
    shift = z2 - z2.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shift).sum(axis=1))
    loss = float(np.mean(logz - shift[np.arange(n), y]))
    p = np.exp(shift - logz[:, None])
    dz2 = p.copy()
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    dw2 = a1.T @ dz2
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ w2.T) * d1
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])
    return loss, grad


def per_example_grads(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row l is the gradient of example l's own cross-entropy (no averaging),
    so the rows sum to the gradient of the sum-structured loss."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels).ravel()
    n = x.shape[0]
    w1, b1, w2, b2, a1, d1 = _hidden(model, x)
    z2 = a1 @ w2 + b2
    shift = z2 - z2.max(axis=1, keepdims=True)
    p = np.exp(shift)
    p /= p.sum(axis=1, keepdims=True)
    dz2 = p
    dz2[np.arange(n), y] -= 1.0
    dw2 = np.einsum("nh,nk->nhk", a1, dz2)
    dz1 = (dz2 @ w2.T) * d1
    dw1 = np.einsum("nm,nh->nmh", x, dz1)
    m, h, k = model.layer_sizes
    return np.concatenate(
        [dw1.reshape(n, m * h), dz1, dw2.reshape(n, h * k), dz2], axis=1
    )


def loss_on_example(model: MlpModel, features_row: np.ndarray, label: int) -> float:
    """Cross-entropy of a single record."""
    loss, _ = loss_and_grad(model, np.atleast_2d(features_row), np.asarray([label]))
    return loss


# ---------------------------------------------------------------------------
# noise schemes


class NoNoise:
    """Plain gradient descent."""


NO_NOISE = NoNoise()


@dataclass(frozen=True)
class IsotropicPerLayer:
    """Per-layer variance sigma2 * max|grad in layer| this iteration."""

    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0.0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")


@dataclass(frozen=True)
class AnisotropicPerParam:
    """Per-parameter variance sigma2 * |grad_i| this iteration."""

    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0.0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")


def noise_std(scheme, grad: np.ndarray, slices: list[slice]) -> np.ndarray:
    """Per-parameter standard deviation of the injected noise."""
    if isinstance(scheme, NoNoise):
        return np.zeros_like(grad)
    if isinstance(scheme, IsotropicPerLayer):
        std = np.empty_like(grad)
        for sl in slices:
            std[sl] = np.sqrt(scheme.sigma2 * np.abs(grad[sl]).max(initial=0.0))
        return std
    if isinstance(scheme, AnisotropicPerParam):
        return np.sqrt(scheme.sigma2 * np.abs(grad))
    raise TypeError(f"unknown noise scheme {type(scheme).__name__}")


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True, eq=False)
class TrainLog:
    losses: np.ndarray
    layer_max_grad: np.ndarray
    diverged: bool


def train(model: MlpModel, dataset: Dataset, scheme=NO_NOISE, *, lr: float,
          iters: int, batch: int, seed: int, noise_on: str = "step"):
    """Minibatch gradient descent with injected noise.

    Parameters are re-initialized from the seed's init stream (the input
    model fixes only the architecture), so two calls with equal seeds are
    bit-identical end to end. noise_on selects the gradient whose magnitude
    sets the noise scale: "step" uses the minibatch gradient just computed,
    "full" recomputes the full-dataset gradient for the scale (updates always
    use the minibatch gradient). A non-finite loss stops training and flags
    the log as diverged.
    """
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if batch > dataset.size:
        raise BatchLargerThanDataset(
            f"batch {batch} exceeds dataset size {dataset.size}", operation="train"
        )
    if not (lr > 0.0):
        raise ValueError(f"lr must be positive, got {lr}")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    if noise_on not in ("step", "full"):
        raise ValueError(f"noise_on must be 'step' or 'full', got {noise_on!r}")

    fresh = init_model(*model.layer_sizes, seed, model.activation)
    params = fresh.params.copy()
    slices = layer_slices(model.layer_sizes)
    batch_rng = tagged_stream(seed, _BATCH_TAG)
    noise_rng = tagged_stream(seed, _NOISE_TAG)

    losses = np.empty(iters)
    layer_max = np.empty((iters, len(slices)))
    diverged = False
    work = replace(model, params=params, seed=seed)
    for it in range(iters):
        idx = batch_rng.integers(0, dataset.size, size=batch)
        loss, grad = loss_and_grad(work, dataset.features[idx], dataset.labels[idx])
        losses[it] = loss
        for li, sl in enumerate(slices):
            layer_max[it, li] = np.abs(grad[sl]).max(initial=0.0)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            diverged = True
            losses = losses[: it + 1]
            layer_max = layer_max[: it + 1]
            break
        if isinstance(scheme, NoNoise):
            params = params - lr * grad
        else:
            if noise_on == "full":
                _, scale_grad = loss_and_grad(work, dataset.features, dataset.labels)
            else:
                scale_grad = grad
            std = noise_std(scheme, scale_grad, slices)
            params = params - lr * grad + std * noise_rng.standard_normal(params.shape[0])
        work = replace(work, params=params)
    return work, TrainLog(losses, layer_max, diverged)


# ---------------------------------------------------------------------------
# adjacent datasets and synthetic data


def make_adjacent(dataset: Dataset, index: int, mode: str = "remove", *,
                  new_features=None, new_label=None) -> Dataset:
    """Neighbouring dataset: drop record `index`, or replace it."""
    if not (0 <= index < dataset.size):
        raise IndexOutOfRange(
            f"index {index} outside [0, {dataset.size})", operation="make_adjacent"
        )
    if mode == "remove":
        keep = np.arange(dataset.size) != index
        return Dataset(dataset.features[keep], dataset.labels[keep], dataset.name)
    if mode == "replace":
        if new_features is None or new_label is None:
            raise ValueError("replace mode needs new_features and new_label")
        feats = dataset.features.copy()
        labels = dataset.labels.copy()
        feats[index] = np.asarray(new_features, dtype=float).ravel()
        labels[index] = int(new_label)
        return Dataset(feats, labels, dataset.name)
    raise ValueError(f"unknown adjacency mode {mode!r}")


def synth_blobs(classes: int, per_class: int, dim: int, separation: float,
                seed: int) -> Dataset:
    """Unit-variance Gaussian blobs with equal pairwise mean distances.

    Class k's mean is (separation/sqrt(2)) e_k, so every pair of means is
    exactly `separation` apart; requires dim >= classes.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if dim < classes:
        raise ValueError(f"dim must be >= classes for equidistant means, got {dim} < {classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if separation < 0.0:
        raise ValueError(f"separation must be nonnegative, got {separation}")
    rng = tagged_stream(seed, 4)
    feats = rng.standard_normal((classes * per_class, dim))
    labels = np.repeat(np.arange(classes), per_class)
    scale = separation / np.sqrt(2.0)
    for k in range(classes):
        feats[labels == k, k] += scale
    return Dataset(feats, labels.astype(np.int64), f"blobs{classes}x{per_class}")


def gradient_drift(model: MlpModel, dataset: Dataset) -> DatasetGradientDrift:
    """Full-dataset gradient-flow drift in parameter space for this model."""

    def grad_fn(x: np.ndarray, ds: Dataset) -> np.ndarray:
        return loss_and_grad(replace(model, params=x), ds.features, ds.labels)[1]

    return DatasetGradientDrift(grad_fn, dataset)


# ---------------------------------------------------------------------------
# persistence


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Columns f0..f{m-1},label; features at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*[f"f{i}" for i in range(dataset.n_features)], "label"])
        for row, lab in zip(dataset.features, dataset.labels):
            w.writerow([*[f"{v:.17g}" for v in row], int(lab)])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[-1] != "label" or any(h != f"f{i}" for i, h in enumerate(header[:-1])):
            raise ValueError(f"unexpected dataset header {header}")
        feats, labels = [], []
        for row in r:
            feats.append([float(v) for v in row[:-1]])
            labels.append(int(row[-1]))
    return Dataset(np.asarray(feats), np.asarray(labels, dtype=np.int64))


def save_model(model: MlpModel, path) -> None:
    doc = {
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation,
        "params": [float(v) for v in model.params],
        "seed": int(model.seed),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> MlpModel:
    with open(path) as fh:
        doc = json.load(fh)
    return MlpModel(
        tuple(doc["layer_sizes"]), np.asarray(doc["params"], dtype=float),
        doc["activation"], int(doc["seed"]),
    )
