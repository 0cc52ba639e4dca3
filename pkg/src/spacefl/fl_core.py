"""Model representation, local training, weighted aggregation, and evaluation.

The model is a multilayer perceptron with ReLU hidden layers and a softmax
cross-entropy head, held as a single flat float64 parameter vector.  All
training operations are pure and bit-deterministic given their seeds.

Naming note: the learning rate is ``eta`` and the proximal coefficient is
``mu_prox`` (they are distinct hyperparameters despite sharing a symbol in
common shorthand).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LocalDataset:
    """Feature matrix plus integer class labels for one client."""
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if len(self.labels) != self.features.shape[0]:
            raise ValueError("features and labels must have matching length")
        if self.n == 0:
            raise ValueError("dataset must be non-empty")

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class HyperParams:
    """Strategy hyperparameters shared by all algorithms."""
    C: int = 10            # max clients per round
    B: int = 32            # local minibatch size
    E: int = 5             # local epochs (fixed-epoch strategies)
    eta: float = 0.05      # learning rate
    mu_prox: float = 0.1   # proximal coefficient
    D: int = 10            # buffer size cap (effective size is min(D, K))
    staleness_max: int = 2
    min_epochs: int = 3    # floor enforced by the min-epoch scheduler variant

    def __post_init__(self):
        if self.C < 1 or self.B < 1 or self.E < 1 or self.D < 1:
            raise ValueError("C, B, E, D must be >= 1")
        # eta = 0 is tolerated: it makes every update a no-op, which is a
        # useful fixed-point check.
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.mu_prox < 0 or self.staleness_max < 0 or self.min_epochs < 0:
            raise ValueError("mu_prox, staleness_max, min_epochs must be >= 0")


@dataclass(frozen=True)
class ModelSpec:
    """MLP layer layout.  The default matches a ~47k-parameter classifier
    for 28x28 grayscale characters over 62 classes (784 -> 58 -> 62)."""
    input_dim: int = 784
    hidden: tuple[int, ...] = (58,)
    n_classes: int = 62

    def __post_init__(self):
        if self.input_dim < 1 or self.n_classes < 2:
            raise ValueError("input_dim must be >= 1 and n_classes >= 2")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be >= 1")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.n_classes)

    @property
    def param_count(self) -> int:
        sizes = self.layer_sizes
        return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


def model_size_bytes(spec: ModelSpec) -> int:
    """Transfer size assuming 32-bit parameter values."""
    return spec.param_count * 4


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic per-stream generator derived from (run seed, stream keys)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """He-scaled random weights, zero biases, flattened."""
    rng = rng_for(seed, 0xD0)
    sizes = spec.layer_sizes
    chunks = []
    for i in range(len(sizes) - 1):
        w = rng.normal(0.0, np.sqrt(2.0 / sizes[i]), size=(sizes[i], sizes[i + 1]))
        chunks.append(w.ravel())
        chunks.append(np.zeros(sizes[i + 1]))
    return np.concatenate(chunks)


def _unflatten(params: np.ndarray, spec: ModelSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    sizes = spec.layer_sizes
    layers = []
    off = 0
    for i in range(len(sizes) - 1):
        n_w = sizes[i] * sizes[i + 1]
        w = params[off:off + n_w].reshape(sizes[i], sizes[i + 1])
        off += n_w
        b = params[off:off + sizes[i + 1]]
        off += sizes[i + 1]
        layers.append((w, b))
    if off != params.size:
        raise ValueError(f"parameter vector length {params.size} does not match spec "
                         f"({spec.param_count} expected)")
    return layers


def forward_logits(params: np.ndarray, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    layers = _unflatten(params, spec)
    h = x
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = layers[-1]
    return h @ w + b


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(params: np.ndarray, spec: ModelSpec,
                  x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the flat parameters."""
    layers = _unflatten(params, spec)
    acts = [x]
    h = x
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    w, b = layers[-1]
    logits = h @ w + b
    probs = _softmax(logits)
    n = x.shape[0]
    loss = float(-np.log(np.clip(probs[np.arange(n), y], 1e-300, None)).mean())

    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads: list[np.ndarray] = []
    for i in range(len(layers) - 1, -1, -1):
        w_i, _b_i = layers[i]
        grads.append(delta.sum(axis=0))          # bias grad
        grads.append((acts[i].T @ delta).ravel())  # weight grad
        if i > 0:
            delta = (delta @ w_i.T) * (acts[i] > 0)
    grads.reverse()
    return loss, np.concatenate(grads)


def proximal_gradient(params: np.ndarray, anchor: np.ndarray, mu_prox: float) -> np.ndarray:
    """Gradient of the proximal penalty (mu/2)*||w - anchor||^2."""
    return mu_prox * (params - anchor)


def _sgd_epochs(params: np.ndarray, spec: ModelSpec, data: LocalDataset,
                batch_size: int, eta: float, epochs: int,
                rng: np.random.Generator,
                anchor: np.ndarray | None = None, mu_prox: float = 0.0) -> np.ndarray:
    w = params.copy()
    n = data.n
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            _, grad = loss_and_grad(w, spec, data.features[idx], data.labels[idx])
            if anchor is not None and mu_prox > 0.0:
                grad = grad + proximal_gradient(w, anchor, mu_prox)
            w -= eta * grad
    return w


def client_update_fixed(w: np.ndarray, data: LocalDataset, hp: HyperParams,
                        rng_seed: int, spec: ModelSpec) -> np.ndarray:
    """Exactly E epochs of minibatch SGD with per-epoch reshuffling."""
    rng = np.random.default_rng(rng_seed)
    return _sgd_epochs(w, spec, data, hp.B, hp.eta, hp.E, rng)


def client_update_proximal(w_global: np.ndarray, data: LocalDataset, hp: HyperParams,
                           epoch_budget: int, rng_seed: int,
                           spec: ModelSpec) -> tuple[np.ndarray, int]:
    """Proximal SGD from the global model for epoch_budget epochs.

    The caller decides the budget (typically the number of epochs that fit
    the available time, possibly capped); the proximal penalty anchors the
    iterate to w_global.
    """
    if epoch_budget < 1:
        raise ValueError("epoch_budget must be >= 1")
    rng = np.random.default_rng(rng_seed)
    w = _sgd_epochs(w_global, spec, data, hp.B, hp.eta, epoch_budget, rng,
                    anchor=w_global, mu_prox=hp.mu_prox)
    return w, epoch_budget


def aggregate_weighted(updates: list[tuple[np.ndarray, int]]) -> np.ndarray:
    """Dataset-size weighted average of parameter vectors."""
    if not updates:
        raise ValueError("cannot aggregate an empty update list")
    dims = {w.shape for w, _n in updates}
    if len(dims) != 1:
        raise ValueError(f"parameter dimension mismatch across updates: {dims}")
    if any(n <= 0 for _w, n in updates):
        raise ValueError("all dataset sizes must be positive")
    stacked = np.stack([w for w, _n in updates])
    weights = np.array([n for _w, n in updates], dtype=float)
    return np.average(stacked, axis=0, weights=weights)


def evaluate(params: np.ndarray, spec: ModelSpec,
             test: LocalDataset) -> tuple[float, float]:
    """(argmax accuracy, mean cross-entropy loss) on a held-out set."""
    logits = forward_logits(params, spec, test.features)
    preds = logits.argmax(axis=1)
    accuracy = float((preds == test.labels).mean())
    probs = _softmax(logits)
    n = test.n
    loss = float(-np.log(np.clip(probs[np.arange(n), test.labels], 1e-300, None)).mean())
    return accuracy, loss
