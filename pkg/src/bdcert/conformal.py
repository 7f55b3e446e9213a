"""Adjusted conformal detection on calibration sets of shadow-model LDPs.

The p-value discards the m largest calibration values as assumed outliers:

    q = 1 - (1 + min{#{v in S : v < s}, N - m}) / (N - m + 1)

An alarm at level alpha is equivalent to the statistic exceeding the
(N - m - floor(alpha * (N - m + 1)))-th smallest calibration value; both
routes are exposed and kept consistent. Also here: the MAD rule for
choosing m automatically and the noise-scale selection sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .smoothing import LdpStatistic, NoiseStream, estimate_slpv

__all__ = [
    "CalibrationSet",
    "DetectionVerdict",
    "build_calibration_set",
    "conformal_pvalue",
    "alarm_threshold",
    "detect",
    "mad_outlier_count",
    "beta_outlier_count",
    "select_sigma",
    "calibration_to_json",
    "calibration_from_json",
]

MAD_SCALE = 1.4826          # normal-consistency constant for the MAD
MAD_Z_CUTOFF = 1.645        # one-sided 5% normal z-score


@dataclass(frozen=True)
class CalibrationSet:
    """Sorted LDP values from shadow models plus the assumed outlier count.

    metadata carries provenance (sigma, sample_count, num_classes,
    shadow_seeds) and travels with the persisted form.
    """

    values: np.ndarray
    m: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.sort(np.asarray(self.values, dtype=float))
        if values.ndim != 1 or values.size < 1:
            raise ContractError("calibration needs at least one value")
        if not np.all(np.isfinite(values)):
            raise ContractError("calibration values must be finite")
        if values[0] < 0.0 or values[-1] > 1.0:
            raise ContractError("calibration values must lie in [0, 1]")
        num_classes = self.metadata.get("num_classes")
        if num_classes and values[0] < 1.0 / num_classes:
            raise ContractError(
                f"calibration value {values[0]} below the LDP floor 1/{num_classes}"
            )
        if not (0 <= self.m <= values.size - 1):
            raise ContractError(
                f"outlier count m={self.m} must satisfy 0 <= m <= N-1 (N={values.size})"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "m", int(self.m))

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def effective_size(self) -> int:
        """N - m: the calibration mass kept after discarding outliers."""
        return self.size - self.m

    def count_below(self, s: float) -> int:
        """Number of calibration values strictly below s."""
        return int(np.searchsorted(self.values, s, side="left"))

    def tie_count(self, s: float) -> int:
        """Number of calibration values exactly equal to s."""
        left = np.searchsorted(self.values, s, side="left")
        right = np.searchsorted(self.values, s, side="right")
        return int(right - left)

    def order_statistic(self, index: int) -> float:
        """1-based order statistic: index=1 is the smallest value."""
        if not (1 <= index <= self.size):
            raise ContractError(
                f"order statistic index {index} outside 1..{self.size}"
            )
        return float(self.values[index - 1])


@dataclass(frozen=True)
class DetectionVerdict:
    """Outcome of one conformal detection query."""

    statistic: float
    p_value: float
    alarm: bool
    alpha: float
    threshold_value: float
    dominant_class: int
    tie_count: int = 0

    def to_json(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alarm": self.alarm,
            "alpha": self.alpha,
            "threshold_value": self.threshold_value,
            "dominant_class": self.dominant_class,
            "tie_count": self.tie_count,
        }


def build_calibration_set(ldps, m: int, extra_metadata: dict | None = None) -> CalibrationSet:
    """Collect shadow-model LDP statistics into a calibration set.

    All statistics must share one (sigma, sample_count, num_classes)
    configuration; provenance seeds are retained in the metadata.
    """
    ldps = list(ldps)
    if not ldps:
        raise ContractError("need at least one shadow LDP")
    sigmas = {ldp.sigma for ldp in ldps}
    sample_counts = {ldp.sample_count for ldp in ldps}
    class_counts = {ldp.num_classes for ldp in ldps}
    if len(sigmas) != 1 or len(sample_counts) != 1 or len(class_counts) != 1:
        raise ContractError(
            "shadow LDPs disagree on sigma, sample count, or class count"
        )
    metadata = {
        "sigma": sigmas.pop(),
        "sample_count": sample_counts.pop(),
        "num_classes": class_counts.pop(),
        "shadow_seeds": [int(ldp.seed) for ldp in ldps],
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    return CalibrationSet(
        values=np.array([ldp.value for ldp in ldps]), m=m, metadata=metadata
    )


def conformal_pvalue(cal: CalibrationSet, s: float) -> float:
    """Adjusted conformal p-value of a statistic against the calibration.

    Strict inequality in the rank count: ties between s and calibration
    values do not count toward an alarm.
    """
    s = float(s)
    if not math.isfinite(s):
        raise ContractError(f"statistic must be finite, got {s!r}")
    kept = cal.effective_size
    capped = min(cal.count_below(s), kept)
    return 1.0 - (1.0 + capped) / (kept + 1.0)


def alarm_threshold(cal: CalibrationSet, alpha: float) -> tuple:
    """The order-statistic alarm threshold for level alpha.

    Returns (threshold_value, index): an alarm fires iff the statistic
    strictly exceeds threshold_value, the index-th smallest calibration
    value with index = N - m - floor(alpha * (N - m + 1)).
    """
    if not (0.0 < alpha < 1.0):
        raise ContractError(f"alpha must be in (0, 1), got {alpha!r}")
    kept = cal.effective_size
    slack = math.floor(alpha * (kept + 1))
    index = kept - slack
    if index < 1:
        raise ContractError(
            f"calibration too small for alpha={alpha}: N={cal.size}, m={cal.m} "
            f"leaves no defining order statistic (index {index})"
        )
    return cal.order_statistic(index), index


def detect(cal: CalibrationSet, ldp: LdpStatistic, alpha: float) -> DetectionVerdict:
    """Conformal backdoor alarm for one model's LDP statistic.

    The alarm fires when the adjusted p-value is at most alpha, which
    coincides with the statistic exceeding the alarm threshold order
    statistic. If the calibration metadata records a noise scale or
    sample count, the statistic must have been computed with the same
    settings.
    """
    sigma = cal.metadata.get("sigma")
    if sigma is not None and ldp.sigma != sigma:
        raise ContractError(
            f"statistic computed at sigma={ldp.sigma} but calibration used {sigma}"
        )
    classes = cal.metadata.get("num_classes")
    if classes is not None and ldp.num_classes != classes:
        raise ContractError(
            f"statistic has {ldp.num_classes} classes but calibration used {classes}"
        )
    threshold, _ = alarm_threshold(cal, alpha)
    p_value = conformal_pvalue(cal, ldp.value)
    return DetectionVerdict(
        statistic=ldp.value,
        p_value=p_value,
        alarm=bool(p_value <= alpha),
        alpha=float(alpha),
        threshold_value=threshold,
        dominant_class=ldp.dominant_class,
        tie_count=cal.tie_count(ldp.value),
    )


def mad_outlier_count(values) -> int:
    """Robust one-sided outlier count: values whose deviation above the
    median exceeds 1.645 in MAD-normalized units.

    A zero MAD (at least half the values identical) falls back to counting
    values above median + 1e-12, so an all-equal input has no outliers.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 3:
        raise ContractError("mad_outlier_count needs at least 3 values")
    if not np.all(np.isfinite(arr)):
        raise ContractError("values must be finite")
    median = float(np.median(arr))
    mad = float(np.median(np.abs(arr - median)))
    if mad <= 0.0:
        return int(np.sum(arr > median + 1e-12))
    z = (arr - median) / (MAD_SCALE * mad)
    return int(np.sum(z >= MAD_Z_CUTOFF))


def beta_outlier_count(beta_ratio: float, size: int) -> int:
    """Outlier count from an assumed contamination ratio: round(beta * N)."""
    if not (0.0 <= beta_ratio < 1.0):
        raise ContractError(f"beta_ratio must be in [0, 1), got {beta_ratio!r}")
    if size < 1:
        raise ContractError(f"size must be >= 1, got {size}")
    m = int(round(beta_ratio * size))
    return min(m, size - 1)


def select_sigma(
    shadow_models,
    shadow_samples,
    psi: float,
    sigma_grid,
    sample_count: int,
    stream: NoiseStream,
) -> float:
    """Smallest grid noise scale that diffuses the shadow models' labeled
    classes below psi.

    For each candidate sigma the mean labeled-class smoothed probability
    is estimated over all (model, class sample) pairs; the first grid
    value with mean < psi wins. Noise substreams are keyed by the
    (model, sample) pair, so every grid point rescales the same base
    draws and the sweep is monotone apart from label flips.
    """
    models = list(shadow_models)
    samples = [list(s) for s in shadow_samples]
    if not models:
        raise ContractError("select_sigma needs at least one shadow model")
    if len(samples) != len(models):
        raise ContractError("need one sample list per shadow model")
    for model, sample_list in zip(models, samples):
        if len(sample_list) != model.num_classes:
            raise ContractError(
                "each shadow model needs one sample per class, in class order"
            )
    if not (0.0 < psi < 1.0):
        raise ContractError(f"psi must be in (0, 1), got {psi!r}")
    grid = [float(s) for s in sigma_grid]
    if not grid or any(s <= 0 for s in grid):
        raise ContractError("sigma_grid must be nonempty with positive entries")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ContractError("sigma_grid must be strictly ascending")
    pair_count = sum(len(s) for s in samples)
    best_mean = None
    for sigma in grid:
        total = 0.0
        for n, (model, sample_list) in enumerate(zip(models, samples)):
            for k, x in enumerate(sample_list):
                est = estimate_slpv(
                    model, x, sigma, sample_count, stream.substream(n, k)
                )
                total += float(est.probs[k])
        mean = total / pair_count
        if best_mean is None or mean < best_mean:
            best_mean = mean
        if mean < psi:
            return sigma
    raise ContractError(
        f"no grid sigma diffuses the labeled-class probability below "
        f"psi={psi}; best achieved mean was {best_mean:.6f}"
    )


# -------------------------------------------------------------- serialization


def calibration_to_json(cal: CalibrationSet) -> dict:
    doc = {
        "values": [float(v) for v in cal.values],
        "m": cal.m,
    }
    for key in ("sigma", "sample_count", "num_classes", "shadow_seeds"):
        if key in cal.metadata:
            doc[key] = cal.metadata[key]
    extras = {
        k: v
        for k, v in cal.metadata.items()
        if k not in ("sigma", "sample_count", "num_classes", "shadow_seeds")
    }
    if extras:
        doc["extra_metadata"] = extras
    return doc


def calibration_from_json(doc: dict) -> CalibrationSet:
    metadata = {}
    for key in ("sigma", "sample_count", "num_classes", "shadow_seeds"):
        if key in doc:
            metadata[key] = doc[key]
    metadata.update(doc.get("extra_metadata", {}))
    return CalibrationSet(
        values=np.asarray(doc["values"], dtype=float),
        m=int(doc["m"]),
        metadata=metadata,
    )
