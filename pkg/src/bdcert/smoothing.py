"""Monte Carlo smoothing statistics for backdoor detection.

Estimates, for a classifier f and Gaussian noise scale sigma:

  * the smoothed label probability vector at a point
    (entry k is the chance that f(x + noise) = k),
  * the trigger robustness of a backdoor candidate
    (the smoothed probability of the target label at the triggered point),
  * the local dominant probability statistic: the largest entry of the
    smoothed probability vectors averaged over one representative sample
    per class.

Noise comes from counter-keyed streams so any evaluation order, worker
count, or replay reproduces identical counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, MissingClassError
from .models import ClassifierModel, LabeledDataset, LinearClassifier, TriggerSpec, embed_trigger
from .statfun import gaussian_cdf, regularized_incomplete_beta

__all__ = [
    "NoiseStream",
    "SlpvEstimate",
    "LdpStatistic",
    "StrEstimate",
    "AttackMargins",
    "estimate_slpv",
    "analytic_slpv_linear",
    "select_ldp_samples",
    "compute_ldp",
    "ldp_from_slpvs",
    "estimate_str",
    "measure_attack_margins",
    "binomial_lower_bound",
    "binomial_upper_bound",
    "ldp_to_json",
    "ldp_from_json",
]

DEFAULT_SAMPLE_COUNT = 1024


class NoiseStream:
    """Counter-keyed source of reproducible Gaussian noise.

    A stream is identified by (seed, path). substream(*indices) derives a
    child stream; generator() builds a fresh numpy Generator for the path,
    so consumers that key their draws by substream get identical noise no
    matter when or where they run.
    """

    def __init__(self, seed: int, path=()):
        seed = int(seed)
        if seed < 0:
            raise ContractError(f"stream seed must be >= 0, got {seed}")
        path = tuple(int(p) for p in path)
        if any(p < 0 for p in path):
            raise ContractError(f"stream path indices must be >= 0, got {path}")
        self.seed = seed
        self.path = path

    def substream(self, *indices) -> "NoiseStream":
        return NoiseStream(self.seed, self.path + indices)

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        )

    def __repr__(self) -> str:
        return f"NoiseStream(seed={self.seed}, path={self.path})"


@dataclass(frozen=True)
class SlpvEstimate:
    """Smoothed label probability vector backed by integer draw counts.

    probs[k-1] = counts[k-1] / sample_count, so entries are exact
    multiples of 1/sample_count and the counts sum to sample_count.
    """

    counts: np.ndarray
    sigma: float
    sample_count: int
    sample_id: tuple = ()

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 2:
            raise ContractError("counts must be a vector with one entry per class")
        if not np.issubdtype(counts.dtype, np.integer):
            raise ContractError("counts must be integers")
        counts = counts.astype(np.int64)
        if counts.min() < 0:
            raise ContractError("counts must be nonnegative")
        if self.sample_count < 1:
            raise ContractError(f"sample_count must be >= 1, got {self.sample_count}")
        if int(counts.sum()) != int(self.sample_count):
            raise ContractError(
                f"counts sum to {int(counts.sum())}, expected {self.sample_count}"
            )
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ContractError(f"sigma must be finite and >= 0, got {self.sigma!r}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "sample_count", int(self.sample_count))
        object.__setattr__(self, "sample_id", tuple(self.sample_id))

    @property
    def num_classes(self) -> int:
        return int(self.counts.size)

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.sample_count


@dataclass(frozen=True)
class LdpStatistic:
    """Local dominant probability: the max entry of the class-averaged
    smoothed probability vectors, with the class attaining it."""

    value: float
    dominant_class: int
    averaged_probs: np.ndarray
    slpvs: tuple
    sigma: float
    sample_count: int
    seed: int
    stream_path: tuple = ()

    def __post_init__(self):
        averaged = np.asarray(self.averaged_probs, dtype=float)
        K = averaged.size
        if K < 2:
            raise ContractError("averaged_probs needs one entry per class")
        if not (1 <= self.dominant_class <= K):
            raise ContractError(
                f"dominant_class must be in 1..{K}, got {self.dominant_class}"
            )
        if not (1.0 / K - 1e-9 <= self.value <= 1.0 + 1e-9):
            raise ContractError(
                f"LDP value {self.value} outside [1/{K}, 1]"
            )
        if self.value != float(averaged[self.dominant_class - 1]):
            raise ContractError("value must equal the dominant averaged entry")
        object.__setattr__(self, "averaged_probs", averaged)
        object.__setattr__(self, "slpvs", tuple(self.slpvs))
        object.__setattr__(self, "stream_path", tuple(self.stream_path))

    @property
    def num_classes(self) -> int:
        return int(self.averaged_probs.size)


@dataclass(frozen=True)
class StrEstimate:
    """Smoothed trigger robustness at one sample: the target-class entry
    of the smoothed probability vector at the triggered point."""

    value: float
    count: int
    sample_count: int
    sigma: float
    target: int
    sample_id: tuple = ()

    def __post_init__(self):
        if not (0 <= self.count <= self.sample_count):
            raise ContractError("count must lie in 0..sample_count")
        expected = self.count / self.sample_count
        if self.value != expected:
            raise ContractError("value must equal count / sample_count")
        object.__setattr__(self, "sample_id", tuple(self.sample_id))


@dataclass(frozen=True)
class AttackMargins:
    """Evidence for certifying one attack: pi is the smallest estimated
    trigger robustness over the class samples, delta the largest
    perturbation norm."""

    pi: float
    delta: float
    robustness: tuple = ()

    def __post_init__(self):
        if not (0.0 <= self.pi <= 1.0):
            raise ContractError(f"pi must be in [0, 1], got {self.pi}")
        if not (self.delta >= 0.0 and math.isfinite(self.delta)):
            raise ContractError(f"delta must be finite and >= 0, got {self.delta}")
        object.__setattr__(self, "robustness", tuple(self.robustness))


# ----------------------------------------------------------------- estimators


def estimate_slpv(
    model: ClassifierModel,
    x,
    sigma: float,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    stream: NoiseStream | None = None,
) -> SlpvEstimate:
    """Monte Carlo smoothed label probabilities at x.

    Draws sample_count Gaussian perturbations (one shot, from the stream's
    own generator) and counts the predicted labels. sigma = 0 skips the
    draws and returns the exact one-hot vector at classify(x).
    """
    if stream is None:
        raise ContractError("estimate_slpv requires a noise stream")
    if sample_count < 1:
        raise ContractError(f"sample_count must be >= 1, got {sample_count}")
    if not (sigma >= 0 and math.isfinite(sigma)):
        raise ContractError(f"sigma must be finite and >= 0, got {sigma!r}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise ContractError(
            f"x must be a length-{model.input_dim} vector, got shape {x.shape}"
        )
    counts = np.zeros(model.num_classes, dtype=np.int64)
    if sigma == 0.0:
        counts[model.classify(x) - 1] = sample_count
    else:
        noise = stream.generator().standard_normal((sample_count, x.shape[0]))
        labels = model.classify_batch(x + sigma * noise)
        counts += np.bincount(labels, minlength=model.num_classes + 1)[1:]
    return SlpvEstimate(
        counts=counts, sigma=sigma, sample_count=sample_count, sample_id=stream.path
    )


def analytic_slpv_linear(model: ClassifierModel, x, sigma: float) -> np.ndarray:
    """Exact smoothed probabilities for a binary linear classifier.

    With score difference g(x) = w.x + b between the two classes, the
    smoothed class-1 probability under N(0, sigma^2 I) noise is
    Phi(g(x) / (sigma * ||w||)).
    """
    if not isinstance(model, LinearClassifier) or model.num_classes != 2:
        raise ContractError("analytic_slpv_linear needs a binary linear classifier")
    w = model.weights[0] - model.weights[1]
    b = model.biases[0] - model.biases[1]
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise ContractError("analytic_slpv_linear needs a separating hyperplane")
    x = np.asarray(x, dtype=float)
    margin = float(w @ x + b)
    if sigma < 0 or not math.isfinite(sigma):
        raise ContractError(f"sigma must be finite and >= 0, got {sigma!r}")
    if sigma == 0.0:
        if margin == 0.0:
            raise ContractError(
                "smoothed probabilities are discontinuous at sigma=0 on the boundary"
            )
        p1 = 1.0 if margin > 0 else 0.0
    else:
        p1 = gaussian_cdf(margin / (sigma * norm))
    return np.array([p1, 1.0 - p1])


def select_ldp_samples(
    model: ClassifierModel,
    pool: LabeledDataset,
    seed: int,
) -> list:
    """One uniformly chosen pool sample per class, as predicted by the
    model (a sample counts for class k when classify(x) = k). Raises
    MissingClassError naming every class with no candidate."""
    if len(pool) < 1:
        raise ContractError("sample pool must be nonempty")
    if pool.dim != model.input_dim:
        raise ContractError(
            f"pool dimension {pool.dim} does not match model dimension {model.input_dim}"
        )
    predicted = model.classify_batch(pool.features)
    missing = [
        k for k in range(1, model.num_classes + 1) if not np.any(predicted == k)
    ]
    if missing:
        raise MissingClassError(missing)
    rng = np.random.default_rng(seed)
    samples = []
    for k in range(1, model.num_classes + 1):
        candidates = np.flatnonzero(predicted == k)
        samples.append(pool.features[int(rng.choice(candidates))].copy())
    return samples


def ldp_from_slpvs(slpvs, seed: int = 0, stream_path=()) -> LdpStatistic:
    """Assemble the dominant-probability statistic from per-class smoothed
    probability vectors (one per class, in class order).

    The averaged vector is computed from the pooled integer counts, so the
    value is the exact rational max_total / (K * sample_count) whenever all
    vectors share one sample_count.
    """
    slpvs = list(slpvs)
    K = len(slpvs)
    if K < 2:
        raise ContractError("need one smoothed probability vector per class, K >= 2")
    if any(est.num_classes != K for est in slpvs):
        raise ContractError("each SLPV must have exactly K entries")
    sample_counts = {est.sample_count for est in slpvs}
    if len(sample_counts) == 1:
        total = np.sum([est.counts for est in slpvs], axis=0)
        averaged = total / (K * slpvs[0].sample_count)
    else:
        averaged = np.mean([est.probs for est in slpvs], axis=0)
    dominant = int(np.argmax(averaged)) + 1
    return LdpStatistic(
        value=float(averaged[dominant - 1]),
        dominant_class=dominant,
        averaged_probs=averaged,
        slpvs=tuple(slpvs),
        sigma=slpvs[0].sigma,
        sample_count=slpvs[0].sample_count,
        seed=int(seed),
        stream_path=tuple(stream_path),
    )


def compute_ldp(
    model: ClassifierModel,
    samples,
    sigma: float,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    stream: NoiseStream | None = None,
) -> LdpStatistic:
    """Local dominant probability of a model given one representative
    sample per class (samples[k-1] must be classified as class k).

    samples may also hold several vectors per class (an (n_k, d) array in
    slot k); their smoothed vectors are averaged within the class first.
    Noise is keyed by (class index, within-class index), so results do not
    depend on evaluation order.
    """
    if stream is None:
        raise ContractError("compute_ldp requires a noise stream")
    if len(samples) != model.num_classes:
        raise ContractError(
            f"expected {model.num_classes} sample slots, got {len(samples)}"
        )
    class_estimates = []
    multi_sample = False
    for k, slot in enumerate(samples, start=1):
        arr = np.asarray(slot, dtype=float)
        if arr.ndim == 1:
            group = arr[np.newaxis, :]
        elif arr.ndim == 2 and arr.shape[0] >= 1:
            group = arr
            multi_sample = multi_sample or arr.shape[0] > 1
        else:
            raise ContractError(f"sample slot {k} must be a vector or a stack of vectors")
        estimates = []
        for i, x in enumerate(group):
            if model.classify(x) != k:
                raise ContractError(
                    f"sample for class {k} is classified as {model.classify(x)}"
                )
            estimates.append(
                estimate_slpv(model, x, sigma, sample_count, stream.substream(k - 1, i))
            )
        class_estimates.append(estimates)
    if not multi_sample:
        return ldp_from_slpvs(
            [group[0] for group in class_estimates],
            seed=stream.seed,
            stream_path=stream.path,
        )
    # multi-sample mode: average within each class, then across classes
    class_means = [np.mean([est.probs for est in group], axis=0) for group in class_estimates]
    averaged = np.mean(class_means, axis=0)
    dominant = int(np.argmax(averaged)) + 1
    flat = tuple(est for group in class_estimates for est in group)
    return LdpStatistic(
        value=float(averaged[dominant - 1]),
        dominant_class=dominant,
        averaged_probs=averaged,
        slpvs=flat,
        sigma=float(sigma),
        sample_count=int(sample_count),
        seed=stream.seed,
        stream_path=stream.path,
    )


def estimate_str(
    model: ClassifierModel,
    x,
    trigger: TriggerSpec,
    sigma: float,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    stream: NoiseStream | None = None,
) -> StrEstimate:
    """Smoothed trigger robustness at x: the target-class entry of the
    smoothed probability vector at the triggered point x + perturbation."""
    if trigger.target > model.num_classes:
        raise ContractError(
            f"trigger target {trigger.target} exceeds num_classes {model.num_classes}"
        )
    slpv = estimate_slpv(model, embed_trigger(x, trigger), sigma, sample_count, stream)
    count = int(slpv.counts[trigger.target - 1])
    return StrEstimate(
        value=count / slpv.sample_count,
        count=count,
        sample_count=slpv.sample_count,
        sigma=slpv.sigma,
        target=trigger.target,
        sample_id=slpv.sample_id,
    )


def measure_attack_margins(
    model: ClassifierModel,
    trigger: TriggerSpec,
    samples,
    sigma: float,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    stream: NoiseStream | None = None,
    conservative: bool = False,
) -> AttackMargins:
    """Certification evidence for one attack: pi is the minimum smoothed
    trigger robustness over the samples, delta the maximum displacement
    norm (constant and equal to the perturbation norm for additive
    triggers).

    conservative=True replaces the raw minimum with a one-sided 95%
    binomial lower confidence bound on it.
    """
    if stream is None:
        raise ContractError("measure_attack_margins requires a noise stream")
    samples = [np.asarray(s, dtype=float) for s in samples]
    if not samples:
        raise ContractError("measure_attack_margins needs at least one sample")
    estimates = [
        estimate_str(model, x, trigger, sigma, sample_count, stream.substream(k))
        for k, x in enumerate(samples)
    ]
    delta = max(
        float(np.linalg.norm(embed_trigger(x, trigger) - x)) for x in samples
    )
    pi = min(est.value for est in estimates)
    if conservative:
        worst = min(estimates, key=lambda est: est.count)
        pi = binomial_lower_bound(worst.count, worst.sample_count, 0.95)
    return AttackMargins(pi=pi, delta=delta, robustness=tuple(estimates))


# ----------------------------------------------------- binomial bound helpers


def _beta_quantile(p: float, a: float, b: float) -> float:
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if regularized_incomplete_beta(a, b, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def binomial_lower_bound(successes: int, trials: int, confidence: float = 0.95) -> float:
    """One-sided Clopper-Pearson lower confidence bound for a binomial
    proportion."""
    if not (0 <= successes <= trials) or trials < 1:
        raise ContractError("need 0 <= successes <= trials with trials >= 1")
    if not (0.0 < confidence < 1.0):
        raise ContractError(f"confidence must be in (0, 1), got {confidence!r}")
    if successes == 0:
        return 0.0
    return _beta_quantile(1.0 - confidence, successes, trials - successes + 1)


def binomial_upper_bound(successes: int, trials: int, confidence: float = 0.95) -> float:
    """One-sided Clopper-Pearson upper confidence bound for a binomial
    proportion."""
    if not (0 <= successes <= trials) or trials < 1:
        raise ContractError("need 0 <= successes <= trials with trials >= 1")
    if not (0.0 < confidence < 1.0):
        raise ContractError(f"confidence must be in (0, 1), got {confidence!r}")
    if successes == trials:
        return 1.0
    return _beta_quantile(confidence, successes + 1, trials - successes)


# -------------------------------------------------------------- serialization


def ldp_to_json(ldp: LdpStatistic) -> dict:
    return {
        "value": ldp.value,
        "dominant_class": ldp.dominant_class,
        "averaged_probs": [float(v) for v in ldp.averaged_probs],
        "sigma": ldp.sigma,
        "sample_count": ldp.sample_count,
        "seed": ldp.seed,
        "stream_path": list(ldp.stream_path),
        "class_counts": [[int(c) for c in est.counts] for est in ldp.slpvs],
        "sample_ids": [list(est.sample_id) for est in ldp.slpvs],
    }


def ldp_from_json(doc: dict) -> LdpStatistic:
    slpvs = tuple(
        SlpvEstimate(
            counts=np.asarray(counts, dtype=np.int64),
            sigma=float(doc["sigma"]),
            sample_count=int(doc["sample_count"]),
            sample_id=tuple(sample_id),
        )
        for counts, sample_id in zip(doc["class_counts"], doc["sample_ids"])
    )
    return LdpStatistic(
        value=float(doc["value"]),
        dominant_class=int(doc["dominant_class"]),
        averaged_probs=np.asarray(doc["averaged_probs"], dtype=float),
        slpvs=slpvs,
        sigma=float(doc["sigma"]),
        sample_count=int(doc["sample_count"]),
        seed=int(doc["seed"]),
        stream_path=tuple(doc.get("stream_path", ())),
    )
