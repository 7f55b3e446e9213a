"""Toy classifier zoo, blob datasets, and the backdoor attack simulator.

Three model kinds: linear score models, two-class Gaussian density-ratio
models with an adjustable decision boundary, and small feedforward nets
trained by mini-batch gradient descent. Class labels are 1..K throughout
the public API; ties in score argmaxes resolve to the lowest class label.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, TrainingError

__all__ = [
    "ClassifierModel",
    "LinearClassifier",
    "BayesClassifier",
    "FeedForwardClassifier",
    "BayesBoundarySpec",
    "TrainingConfig",
    "LabeledDataset",
    "TriggerSpec",
    "make_linear_classifier",
    "make_bayes_classifier",
    "train_feedforward",
    "make_blob_dataset",
    "generate_random_trigger",
    "embed_trigger",
    "poison_dataset",
    "attack_success_rate",
    "model_to_json",
    "model_from_json",
    "save_model",
    "load_model",
    "dataset_to_csv",
    "dataset_from_csv",
]


def _as_float_array(value, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise ContractError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} must be finite")
    return arr


class ClassifierModel:
    """Deterministic K-class classifier over d-dimensional inputs.

    classify(x) returns an int label in 1..K; classify_batch maps an
    (n, d) array to an (n,) int array. Subclasses set .kind.
    """

    kind = "abstract"

    def __init__(self, num_classes: int, input_dim: int):
        if num_classes < 2:
            raise ContractError(f"num_classes must be >= 2, got {num_classes}")
        if input_dim < 1:
            raise ContractError(f"input_dim must be >= 1, got {input_dim}")
        self.num_classes = int(num_classes)
        self.input_dim = int(input_dim)

    def _check_batch(self, features) -> np.ndarray:
        arr = np.asarray(features, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != self.input_dim:
            raise ContractError(
                f"expected an (n, {self.input_dim}) feature array, got shape {arr.shape}"
            )
        return arr

    def classify_batch(self, features) -> np.ndarray:
        raise NotImplementedError

    def classify(self, x) -> int:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.input_dim:
            raise ContractError(
                f"expected a length-{self.input_dim} feature vector, got shape {x.shape}"
            )
        return int(self.classify_batch(x[np.newaxis, :])[0])


class LinearClassifier(ClassifierModel):
    """argmax_k (w_k . x + b_k), ties to the lowest class label."""

    kind = "linear"

    def __init__(self, weights, biases):
        weights = _as_float_array(weights, "weights", 2)
        biases = _as_float_array(biases, "biases", 1)
        if weights.shape[0] != biases.shape[0]:
            raise ContractError(
                f"weights rows ({weights.shape[0]}) and biases length "
                f"({biases.shape[0]}) must agree"
            )
        super().__init__(weights.shape[0], weights.shape[1])
        self.weights = weights
        self.biases = biases

    def classify_batch(self, features) -> np.ndarray:
        X = self._check_batch(features)
        scores = X @ self.weights.T + self.biases
        return np.argmax(scores, axis=1) + 1


@dataclass(frozen=True)
class BayesBoundarySpec:
    """Two Gaussian class densities plus a density-ratio decision boundary.

    The classifier predicts class 1 when density_1(x) / density_2(x)
    strictly exceeds boundary_ratio, class 2 otherwise. boundary_ratio >= 1
    (1 is the symmetric maximum-density rule; larger values concede ground
    from class 1 to class 2).
    """

    mean_a: np.ndarray
    mean_b: np.ndarray
    cov_a: np.ndarray
    cov_b: np.ndarray
    boundary_ratio: float = 1.0

    def __post_init__(self):
        mean_a = _as_float_array(self.mean_a, "mean_a", 1)
        mean_b = _as_float_array(self.mean_b, "mean_b", 1)
        if mean_a.shape != mean_b.shape:
            raise ContractError("mean_a and mean_b must have the same shape")
        dim = mean_a.shape[0]
        cov_a = _coerce_covariance(self.cov_a, dim, "cov_a")
        cov_b = _coerce_covariance(self.cov_b, dim, "cov_b")
        if not (self.boundary_ratio >= 1.0 and math.isfinite(self.boundary_ratio)):
            raise ContractError(
                f"boundary_ratio must be finite and >= 1, got {self.boundary_ratio!r}"
            )
        object.__setattr__(self, "mean_a", mean_a)
        object.__setattr__(self, "mean_b", mean_b)
        object.__setattr__(self, "cov_a", cov_a)
        object.__setattr__(self, "cov_b", cov_b)
        object.__setattr__(self, "boundary_ratio", float(self.boundary_ratio))

    @property
    def dim(self) -> int:
        return self.mean_a.shape[0]


def _coerce_covariance(cov, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(cov, dtype=float)
    if arr.ndim == 0:
        arr = np.eye(dim) * float(arr)
    elif arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ContractError(f"{name} diagonal must have length {dim}")
        arr = np.diag(arr)
    elif arr.shape != (dim, dim):
        raise ContractError(f"{name} must be ({dim}, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} must be finite")
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise ContractError(f"{name} must be symmetric positive definite") from None
    return arr


class _GaussianLogDensity:
    """Multivariate normal log density with a cached Cholesky factor."""

    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        self.mean = mean
        self.chol = np.linalg.cholesky(cov)
        dim = mean.shape[0]
        self.log_norm = -0.5 * dim * math.log(2.0 * math.pi) - float(
            np.sum(np.log(np.diag(self.chol)))
        )

    def __call__(self, X: np.ndarray) -> np.ndarray:
        centered = X - self.mean
        y = np.linalg.solve(self.chol, centered.T)
        quad = np.sum(y * y, axis=0)
        return self.log_norm - 0.5 * quad


class BayesClassifier(ClassifierModel):
    """Two-class density-ratio classifier defined by a BayesBoundarySpec."""

    kind = "bayes-mixture"

    def __init__(self, spec: BayesBoundarySpec):
        super().__init__(2, spec.dim)
        self.spec = spec
        self._log_density_a = _GaussianLogDensity(spec.mean_a, spec.cov_a)
        self._log_density_b = _GaussianLogDensity(spec.mean_b, spec.cov_b)
        self._log_ratio_threshold = math.log(spec.boundary_ratio)

    def classify_batch(self, features) -> np.ndarray:
        X = self._check_batch(features)
        log_ratio = self._log_density_a(X) - self._log_density_b(X)
        return np.where(log_ratio > self._log_ratio_threshold, 1, 2).astype(np.int64)


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for the feedforward trainer."""

    hidden_sizes: tuple = (32,)
    epochs: int = 60
    learning_rate: float = 0.05
    batch_size: int = 32

    def __post_init__(self):
        sizes = tuple(int(h) for h in self.hidden_sizes)
        if any(h < 1 for h in sizes):
            raise ContractError(f"hidden sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "hidden_sizes", sizes)
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_json(self) -> dict:
        return {
            "hidden_sizes": list(self.hidden_sizes),
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrainingConfig":
        return cls(
            hidden_sizes=tuple(doc["hidden_sizes"]),
            epochs=doc["epochs"],
            learning_rate=doc["learning_rate"],
            batch_size=doc["batch_size"],
        )


class FeedForwardClassifier(ClassifierModel):
    """Fully connected ReLU net; prediction is the argmax logit."""

    kind = "feedforward"

    def __init__(self, weights, biases, seed=None, training_config=None):
        if len(weights) != len(biases) or not weights:
            raise ContractError("weights and biases must be equal-length, nonempty lists")
        weights = [_as_float_array(W, f"layer {i} weights", 2) for i, W in enumerate(weights)]
        biases = [_as_float_array(b, f"layer {i} biases", 1) for i, b in enumerate(biases)]
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.shape[1] != b.shape[0]:
                raise ContractError(f"layer {i}: weight columns must match bias length")
            if i > 0 and weights[i - 1].shape[1] != W.shape[0]:
                raise ContractError(f"layer {i}: input width must match previous output")
        super().__init__(weights[-1].shape[1], weights[0].shape[0])
        self.weights = weights
        self.biases = biases
        self.seed = seed
        self.training_config = training_config

    def decision_scores(self, features) -> np.ndarray:
        X = self._check_batch(features)
        h = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W + b, 0.0)
        return h @ self.weights[-1] + self.biases[-1]

    def classify_batch(self, features) -> np.ndarray:
        return np.argmax(self.decision_scores(features), axis=1) + 1


@dataclass
class LabeledDataset:
    """Feature matrix plus integer labels in 1..num_classes."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        features = _as_float_array(self.features, "features", 2)
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ContractError(
                f"labels must be a length-{features.shape[0]} vector, got shape {labels.shape}"
            )
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.floor(labels)):
                raise ContractError("labels must be integers")
        labels = labels.astype(np.int64)
        if self.num_classes < 2:
            raise ContractError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.size and (labels.min() < 1 or labels.max() > self.num_classes):
            raise ContractError(
                f"labels must lie in 1..{self.num_classes}, "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        self.features = features
        self.labels = labels
        self.num_classes = int(self.num_classes)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class TriggerSpec:
    """Additive backdoor trigger: delta(x) = x + perturbation, target label,
    and the l2 budget the perturbation is guaranteed to respect."""

    perturbation: np.ndarray
    target: int
    l2_bound: float

    def __post_init__(self):
        vec = _as_float_array(self.perturbation, "perturbation", 1)
        if not (self.l2_bound > 0 and math.isfinite(self.l2_bound)):
            raise ContractError(f"l2_bound must be positive, got {self.l2_bound!r}")
        if self.target < 1:
            raise ContractError(f"target must be a class label >= 1, got {self.target}")
        norm = float(np.linalg.norm(vec))
        if norm > self.l2_bound:
            raise ContractError(
                f"perturbation norm {norm} exceeds the l2 bound {self.l2_bound}"
            )
        object.__setattr__(self, "perturbation", vec)
        object.__setattr__(self, "target", int(self.target))
        object.__setattr__(self, "l2_bound", float(self.l2_bound))

    @property
    def dim(self) -> int:
        return self.perturbation.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.perturbation))

    def to_json(self) -> dict:
        return {
            "perturbation": [float(v) for v in self.perturbation],
            "target": self.target,
            "l2_bound": self.l2_bound,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TriggerSpec":
        return cls(
            perturbation=np.asarray(doc["perturbation"], dtype=float),
            target=int(doc["target"]),
            l2_bound=float(doc["l2_bound"]),
        )


# ------------------------------------------------------------------ factories


def make_linear_classifier(weights, biases) -> LinearClassifier:
    """Linear score model: class k scores w_k . x + b_k."""
    return LinearClassifier(weights, biases)


def make_bayes_classifier(spec: BayesBoundarySpec) -> BayesClassifier:
    """Two-class Gaussian density-ratio classifier."""
    if not isinstance(spec, BayesBoundarySpec):
        raise ContractError("make_bayes_classifier expects a BayesBoundarySpec")
    return BayesClassifier(spec)


def make_blob_dataset(
    num_classes: int,
    dim: int,
    per_class: int,
    spread: float,
    seed: int,
    means=None,
) -> LabeledDataset:
    """Isotropic Gaussian blob dataset, one blob per class.

    Means default to standard normal draws from the seed; pass `means`
    (a (num_classes, dim) array) to fix the class geometry while the seed
    varies the samples. Deterministic given (seed, means).
    """
    if num_classes < 2:
        raise ContractError(f"num_classes must be >= 2, got {num_classes}")
    if dim < 1:
        raise ContractError(f"dim must be >= 1, got {dim}")
    if per_class < 1:
        raise ContractError(f"per_class must be >= 1, got {per_class}")
    if not (spread > 0 and math.isfinite(spread)):
        raise ContractError(f"spread must be positive, got {spread!r}")
    rng = np.random.default_rng(seed)
    if means is None:
        means = rng.normal(0.0, 1.0, size=(num_classes, dim))
    else:
        means = _as_float_array(means, "means", 2)
        if means.shape != (num_classes, dim):
            raise ContractError(
                f"means must be ({num_classes}, {dim}), got {means.shape}"
            )
    for i in range(num_classes):
        for j in range(i + 1, num_classes):
            if np.array_equal(means[i], means[j]):
                raise ContractError(f"class means {i + 1} and {j + 1} coincide")
    features = np.empty((num_classes * per_class, dim))
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for k in range(num_classes):
        block = slice(k * per_class, (k + 1) * per_class)
        features[block] = means[k] + spread * rng.standard_normal((per_class, dim))
        labels[block] = k + 1
    return LabeledDataset(
        features,
        labels,
        num_classes,
        metadata={
            "generator": "blob",
            "seed": int(seed),
            "per_class": int(per_class),
            "spread": float(spread),
        },
    )


# ------------------------------------------------------------------- triggers


def generate_random_trigger(
    dim: int,
    l2_bound: float,
    nullify_prob: float,
    perturb_range,
    target: int,
    seed: int,
) -> TriggerSpec:
    """Random additive trigger: each coordinate is zeroed with probability
    nullify_prob, otherwise drawn uniformly from perturb_range = (lo, hi);
    the vector is then projected onto the l2 ball of radius l2_bound.
    Deterministic given the seed."""
    if dim < 1:
        raise ContractError(f"dim must be >= 1, got {dim}")
    if not (l2_bound > 0 and math.isfinite(l2_bound)):
        raise ContractError(f"l2_bound must be positive, got {l2_bound!r}")
    if not (0.0 <= nullify_prob <= 1.0):
        raise ContractError(f"nullify_prob must be in [0, 1], got {nullify_prob!r}")
    lo, hi = (float(perturb_range[0]), float(perturb_range[1]))
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise ContractError(f"perturb_range must satisfy lo <= hi, got ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    keep = rng.random(dim) >= nullify_prob
    values = rng.uniform(lo, hi, size=dim)
    vec = np.where(keep, values, 0.0)
    norm = float(np.linalg.norm(vec))
    if norm > l2_bound:
        vec = vec * (l2_bound / norm)
        # a final rounding nudge keeps the invariant exact in floating point
        while float(np.linalg.norm(vec)) > l2_bound:
            vec = vec * (1.0 - 2.0**-52)
    return TriggerSpec(perturbation=vec, target=target, l2_bound=l2_bound)


def embed_trigger(x, trigger: TriggerSpec) -> np.ndarray:
    """Apply the trigger to one sample (d,) or a batch (n, d)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim not in (1, 2) or arr.shape[-1] != trigger.dim:
        raise ContractError(
            f"sample dimension {arr.shape} does not match trigger dimension {trigger.dim}"
        )
    return arr + trigger.perturbation


def poison_dataset(
    data: LabeledDataset,
    trigger: TriggerSpec,
    ratio: float,
    seed: int,
) -> LabeledDataset:
    """Poison exactly floor(ratio * len(data)) samples chosen uniformly
    (without replacement) from the rows whose label differs from the
    trigger target; each chosen row becomes (x + perturbation, target).
    The input dataset is left untouched."""
    if not (0.0 <= ratio <= 1.0):
        raise ContractError(f"ratio must be in [0, 1], got {ratio!r}")
    if trigger.dim != data.dim:
        raise ContractError(
            f"trigger dimension {trigger.dim} does not match dataset dimension {data.dim}"
        )
    if trigger.target > data.num_classes:
        raise ContractError(
            f"trigger target {trigger.target} exceeds num_classes {data.num_classes}"
        )
    count = math.floor(ratio * len(data))
    eligible = np.flatnonzero(data.labels != trigger.target)
    if count > eligible.size:
        raise ContractError(
            f"cannot poison {count} samples: only {eligible.size} rows "
            f"belong to classes other than the target"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(eligible, size=count, replace=False) if count else np.empty(0, np.int64)
    features = data.features.copy()
    labels = data.labels.copy()
    features[chosen] = features[chosen] + trigger.perturbation
    labels[chosen] = trigger.target
    metadata = dict(data.metadata)
    metadata.update(
        {
            "poisoned_count": int(count),
            "poison_ratio": float(ratio),
            "poison_seed": int(seed),
            "trigger_target": trigger.target,
            "poisoned_indices": sorted(int(i) for i in chosen),
        }
    )
    return LabeledDataset(features, labels, data.num_classes, metadata)


def attack_success_rate(
    model: ClassifierModel,
    data: LabeledDataset,
    trigger: TriggerSpec,
) -> float:
    """Fraction of samples from non-target classes that the model assigns
    to the target class once the trigger is embedded."""
    eligible = data.labels != trigger.target
    if not np.any(eligible):
        raise ContractError(
            "attack_success_rate needs at least one sample outside the target class"
        )
    triggered = embed_trigger(data.features[eligible], trigger)
    predictions = model.classify_batch(triggered)
    return float(np.mean(predictions == trigger.target))


# ------------------------------------------------------------------- training


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def train_feedforward(
    train: LabeledDataset,
    config: TrainingConfig,
    seed: int,
) -> FeedForwardClassifier:
    """Train a ReLU net with mini-batch gradient descent on the softmax
    cross-entropy. Deterministic given the seed. Raises TrainingError if
    the loss goes non-finite."""
    if len(train) < 1:
        raise ContractError("training data must be nonempty")
    rng = np.random.default_rng(seed)
    layer_sizes = [train.dim, *config.hidden_sizes, train.num_classes]
    weights = []
    biases = []
    for n_in, n_out in zip(layer_sizes, layer_sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    X = train.features
    onehot_index = train.labels - 1
    n = len(train)
    lr = config.learning_rate
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            xb = X[batch]
            yb = onehot_index[batch]
            # forward pass, keeping activations for the backward sweep
            activations = [xb]
            h = xb
            for W, b in zip(weights[:-1], biases[:-1]):
                h = np.maximum(h @ W + b, 0.0)
                activations.append(h)
            logits = h @ weights[-1] + biases[-1]
            probs = _softmax(logits)
            with np.errstate(divide="ignore"):
                loss = -np.mean(np.log(probs[np.arange(len(batch)), yb]))
            if not np.isfinite(loss):
                raise TrainingError(
                    f"training loss became non-finite (loss={loss!r}); "
                    f"lower the learning rate or rescale the features"
                )
            grad = probs
            grad[np.arange(len(batch)), yb] -= 1.0
            grad /= len(batch)
            for layer in range(len(weights) - 1, -1, -1):
                a_prev = activations[layer]
                w_grad = a_prev.T @ grad
                b_grad = grad.sum(axis=0)
                if layer > 0:
                    grad = (grad @ weights[layer].T) * (activations[layer] > 0.0)
                weights[layer] = weights[layer] - lr * w_grad
                biases[layer] = biases[layer] - lr * b_grad
    return FeedForwardClassifier(
        weights, biases, seed=int(seed), training_config=config
    )


# -------------------------------------------------------------- serialization


def model_to_json(model: ClassifierModel) -> dict:
    doc = {
        "kind": model.kind,
        "num_classes": model.num_classes,
        "input_dim": model.input_dim,
    }
    if isinstance(model, LinearClassifier):
        doc["parameters"] = {
            "weights": model.weights.tolist(),
            "biases": model.biases.tolist(),
        }
    elif isinstance(model, BayesClassifier):
        doc["parameters"] = {
            "mean_a": model.spec.mean_a.tolist(),
            "mean_b": model.spec.mean_b.tolist(),
            "cov_a": model.spec.cov_a.tolist(),
            "cov_b": model.spec.cov_b.tolist(),
            "boundary_ratio": model.spec.boundary_ratio,
        }
    elif isinstance(model, FeedForwardClassifier):
        doc["parameters"] = {
            "weights": [W.tolist() for W in model.weights],
            "biases": [b.tolist() for b in model.biases],
        }
        doc["seed"] = model.seed
        doc["training_config"] = (
            model.training_config.to_json() if model.training_config else None
        )
    else:
        raise ContractError(f"cannot serialize model kind {model.kind!r}")
    return doc


def model_from_json(doc: dict) -> ClassifierModel:
    kind = doc.get("kind")
    params = doc.get("parameters", {})
    if kind == "linear":
        model = LinearClassifier(params["weights"], params["biases"])
    elif kind == "bayes-mixture":
        spec = BayesBoundarySpec(
            mean_a=np.asarray(params["mean_a"], dtype=float),
            mean_b=np.asarray(params["mean_b"], dtype=float),
            cov_a=np.asarray(params["cov_a"], dtype=float),
            cov_b=np.asarray(params["cov_b"], dtype=float),
            boundary_ratio=float(params["boundary_ratio"]),
        )
        model = BayesClassifier(spec)
    elif kind == "feedforward":
        config = doc.get("training_config")
        model = FeedForwardClassifier(
            params["weights"],
            params["biases"],
            seed=doc.get("seed"),
            training_config=TrainingConfig.from_json(config) if config else None,
        )
    else:
        raise ContractError(f"unknown model kind {kind!r}")
    if model.num_classes != doc["num_classes"] or model.input_dim != doc["input_dim"]:
        raise ContractError("model document header does not match its parameters")
    return model


def save_model(model: ClassifierModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), indent=2, sort_keys=True))


def load_model(path) -> ClassifierModel:
    return model_from_json(json.loads(Path(path).read_text()))


def _sidecar_path(csv_path) -> Path:
    path = Path(csv_path)
    if path.suffix == ".csv":
        return path.with_suffix(".meta.json")
    return Path(str(path) + ".meta.json")


def dataset_to_csv(data: LabeledDataset, path) -> None:
    """Write features and labels as CSV (f0..f{d-1}, label) with a JSON
    sidecar ('<name>.meta.json') holding num_classes and metadata."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"f{i}" for i in range(data.dim)] + ["label"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
    sidecar = {
        "num_classes": data.num_classes,
        "dim": data.dim,
        "count": len(data),
        "metadata": data.metadata,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def dataset_from_csv(path) -> LabeledDataset:
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if not header or header[-1] != "label":
            raise ContractError(f"{path}: expected a trailing 'label' column")
        rows = list(reader)
    dim = len(header) - 1
    features = np.empty((len(rows), dim))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        features[i] = [float(v) for v in row[:dim]]
        labels[i] = int(row[dim])
    meta_path = _sidecar_path(path)
    if meta_path.exists():
        sidecar = json.loads(meta_path.read_text())
        num_classes = int(sidecar["num_classes"])
        metadata = sidecar.get("metadata", {})
    else:
        num_classes = int(labels.max()) if len(rows) else 2
        metadata = {}
    return LabeledDataset(features, labels, num_classes, metadata)
