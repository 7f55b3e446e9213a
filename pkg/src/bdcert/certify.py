"""Detection certificates for smoothed backdoor detection.

An attack with trigger-robustness floor pi and trigger magnitude delta is
guaranteed to raise a conformal alarm at level alpha whenever

    delta < sigma * (quantile(1 - S) - quantile(1 - pi))

where S is the alarm-threshold order statistic of the calibration set and
quantile is the standard normal quantile. The bound degenerates to +inf
when pi = 1 with S < 1 (any finite trigger is caught) and to -inf when
S = 1 (the calibration ceiling leaves nothing to exceed, so no guarantee
is possible; the pi = 1 and S = 1 corner is resolved the same way).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conformal import CalibrationSet, alarm_threshold
from .errors import ContractError
from .smoothing import AttackMargins, binomial_upper_bound
from .statfun import gaussian_cdf, gaussian_quantile

__all__ = [
    "Certificate",
    "CertifiedRegionGrid",
    "certification_bound",
    "certify_attack",
    "ldp_lower_bound",
    "certified_region",
    "certificate_to_json",
    "certificate_from_json",
    "region_to_json",
    "region_csv_rows",
]


@dataclass(frozen=True)
class Certificate:
    """Outcome of one certification query, with full provenance."""

    pi: float
    delta: float
    sigma: float
    threshold_quantile: float
    bound: float
    certified: bool
    alpha: float
    calibration_size: int
    outlier_count: int
    conservative: bool = False

    def __post_init__(self):
        if not (0.0 <= self.pi <= 1.0):
            raise ContractError(f"pi must be in [0, 1], got {self.pi!r}")
        if not (math.isfinite(self.delta) and self.delta >= 0.0):
            raise ContractError(f"delta must be finite and >= 0, got {self.delta!r}")
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ContractError(f"sigma must be positive, got {self.sigma!r}")
        if math.isnan(self.bound):
            raise ContractError("certification bound must not be NaN")
        if self.certified != (self.delta < self.bound):
            raise ContractError(
                "certificate inconsistency: certified flag must equal delta < bound"
            )


@dataclass(frozen=True)
class CertifiedRegionGrid:
    """Per-pi certified trigger-magnitude bounds in a fixed detection context.

    Every (pi, delta) pair with delta below the bound at that pi is
    guaranteed detection; the bounds are nondecreasing in pi.
    """

    pi_grid: np.ndarray
    delta_bounds: np.ndarray
    sigma: float
    alpha: float
    threshold_quantile: float
    calibration_size: int
    outlier_count: int

    def __post_init__(self):
        pis = np.asarray(self.pi_grid, dtype=float)
        bounds = np.asarray(self.delta_bounds, dtype=float)
        if pis.ndim != 1 or pis.size < 1 or bounds.shape != pis.shape:
            raise ContractError("pi grid and bounds must be matching 1-D arrays")
        if np.any(np.diff(pis) <= 0):
            raise ContractError("pi grid must be strictly ascending")
        if pis[0] < 0.0 or pis[-1] > 1.0:
            raise ContractError("pi grid must lie in [0, 1]")
        if np.any(np.diff(bounds) < 0):
            raise ContractError("delta bounds must be nondecreasing in pi")
        object.__setattr__(self, "pi_grid", pis)
        object.__setattr__(self, "delta_bounds", bounds)


def _conservative_threshold(cal: CalibrationSet, threshold: float) -> float:
    """95% upper confidence bound on the threshold order statistic, treating
    it as the binomial proportion its Monte Carlo counts came from."""
    sample_count = cal.metadata.get("sample_count")
    num_classes = cal.metadata.get("num_classes")
    if not sample_count or not num_classes:
        raise ContractError(
            "conservative certification needs sample_count and num_classes "
            "in the calibration metadata"
        )
    total = int(sample_count) * int(num_classes)
    successes = int(round(threshold * total))
    return binomial_upper_bound(successes, total, confidence=0.95)


def certification_bound(
    cal: CalibrationSet,
    alpha: float,
    sigma: float,
    pi: float,
    conservative: bool = False,
) -> float:
    """Largest certifiable trigger magnitude for robustness floor pi.

    Returns sigma * (quantile(1 - S) - quantile(1 - pi)) with S the alarm
    threshold at level alpha; +inf when pi = 1 and S < 1, -inf whenever
    S = 1 (including the pi = 1 corner, where no statistic can exceed the
    ceiling). With conservative=True the threshold is inflated to its 95%
    binomial upper confidence bound before taking quantiles.
    """
    if not (0.0 <= pi <= 1.0):
        raise ContractError(f"pi must be in [0, 1], got {pi!r}")
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise ContractError(f"sigma must be positive, got {sigma!r}")
    threshold, _ = alarm_threshold(cal, alpha)
    if conservative:
        threshold = _conservative_threshold(cal, threshold)
    if threshold >= 1.0:
        return float("-inf")
    if pi == 1.0:
        return float("inf")
    return sigma * (gaussian_quantile(1.0 - threshold) - gaussian_quantile(1.0 - pi))


def certify_attack(
    cal: CalibrationSet,
    alpha: float,
    sigma: float,
    margins: AttackMargins,
    conservative: bool = False,
) -> Certificate:
    """Certificate for measured attack margins in a detection context.

    The margins must come from the same K samples, noise scale, and noise
    budget used for detection; pass margins measured conservatively
    together with conservative=True for a fully conservative certificate.
    """
    threshold, _ = alarm_threshold(cal, alpha)
    if conservative:
        threshold_used = _conservative_threshold(cal, threshold)
    else:
        threshold_used = threshold
    bound = certification_bound(cal, alpha, sigma, margins.pi,
                                conservative=conservative)
    return Certificate(
        pi=margins.pi,
        delta=margins.delta,
        sigma=float(sigma),
        threshold_quantile=threshold_used,
        bound=bound,
        certified=bool(margins.delta < bound),
        alpha=float(alpha),
        calibration_size=cal.size,
        outlier_count=cal.m,
        conservative=bool(conservative),
    )


def ldp_lower_bound(pi: float, delta: float, sigma: float) -> float:
    """Guaranteed LDP of an attacked model: 1 - Phi(Phi^-1(1 - pi) + delta/sigma).

    At delta = 0 this is exactly pi; it decreases toward 0 as the trigger
    magnitude grows and increases with pi.
    """
    if not (0.0 <= pi <= 1.0):
        raise ContractError(f"pi must be in [0, 1], got {pi!r}")
    if not (math.isfinite(delta) and delta >= 0.0):
        raise ContractError(f"delta must be finite and >= 0, got {delta!r}")
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise ContractError(f"sigma must be positive, got {sigma!r}")
    if delta == 0.0:
        return float(pi)
    shifted = gaussian_quantile(1.0 - pi) + delta / sigma
    if math.isnan(shifted):
        # quantile(0) = -inf plus +inf shift cannot happen for finite delta
        raise ContractError("degenerate quantile shift")
    return 1.0 - gaussian_cdf(shifted)


def certified_region(
    cal: CalibrationSet,
    alpha: float,
    sigma: float,
    pi_grid,
    conservative: bool = False,
) -> CertifiedRegionGrid:
    """Certified (pi, delta) region: the trigger-magnitude bound at each
    robustness floor on the grid."""
    pis = np.asarray(list(pi_grid), dtype=float)
    if pis.ndim != 1 or pis.size < 1:
        raise ContractError("pi grid must be a nonempty 1-D sequence")
    threshold, _ = alarm_threshold(cal, alpha)
    bounds = np.array(
        [certification_bound(cal, alpha, sigma, float(p), conservative)
         for p in pis]
    )
    return CertifiedRegionGrid(
        pi_grid=pis,
        delta_bounds=bounds,
        sigma=float(sigma),
        alpha=float(alpha),
        threshold_quantile=threshold,
        calibration_size=cal.size,
        outlier_count=cal.m,
    )


# -------------------------------------------------------------- serialization


def _encode_extended(value: float):
    if value == float("inf"):
        return "+inf"
    if value == float("-inf"):
        return "-inf"
    return float(value)


def _decode_extended(value) -> float:
    if value == "+inf":
        return float("inf")
    if value == "-inf":
        return float("-inf")
    return float(value)


def certificate_to_json(cert: Certificate) -> dict:
    return {
        "pi": cert.pi,
        "delta": cert.delta,
        "sigma": cert.sigma,
        "threshold_quantile": cert.threshold_quantile,
        "bound": _encode_extended(cert.bound),
        "certified": cert.certified,
        "alpha": cert.alpha,
        "calibration_size": cert.calibration_size,
        "outlier_count": cert.outlier_count,
        "conservative": cert.conservative,
    }


def certificate_from_json(doc: dict) -> Certificate:
    return Certificate(
        pi=float(doc["pi"]),
        delta=float(doc["delta"]),
        sigma=float(doc["sigma"]),
        threshold_quantile=float(doc["threshold_quantile"]),
        bound=_decode_extended(doc["bound"]),
        certified=bool(doc["certified"]),
        alpha=float(doc["alpha"]),
        calibration_size=int(doc["calibration_size"]),
        outlier_count=int(doc["outlier_count"]),
        conservative=bool(doc.get("conservative", False)),
    )


def region_to_json(grid: CertifiedRegionGrid) -> dict:
    return {
        "pi_grid": [float(p) for p in grid.pi_grid],
        "delta_bounds": [_encode_extended(b) for b in grid.delta_bounds],
        "sigma": grid.sigma,
        "alpha": grid.alpha,
        "threshold_quantile": grid.threshold_quantile,
        "calibration_size": grid.calibration_size,
        "outlier_count": grid.outlier_count,
    }


def region_csv_rows(grid: CertifiedRegionGrid) -> list:
    """Flat (pi, delta_bound) rows for CSV export; infinities are encoded
    as the strings +inf/-inf."""
    rows = [("pi", "delta_bound")]
    for p, b in zip(grid.pi_grid, grid.delta_bounds):
        rows.append((repr(float(p)), str(_encode_extended(b))))
    return rows
