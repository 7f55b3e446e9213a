"""False-positive-rate guarantees for the conformal detector.

Under exchangeability with m assumed outliers discarded, the detector's
FPR is first-order stochastically dominated by Beta(m+l+1, N-m-l) with
l = floor(alpha*(N-m+1)). This module exposes that bound, its large-N
ceiling tau = alpha + (1-alpha)*beta + xi, and a Monte Carlo harness that
resamples calibration sets from an LDP pool and checks the dominance
claim against the empirical FPR distribution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .smoothing import NoiseStream
from .statfun import regularized_incomplete_beta

__all__ = [
    "BetaBound",
    "EmpiricalCdf",
    "fpr_beta_bound",
    "asymptotic_fpr_level",
    "simulate_fpr_distribution",
    "dkw_tolerance",
    "check_stochastic_dominance",
    "dominance_report",
    "dominance_csv_rows",
    "dominance_precondition_gap",
    "warn_if_dominance_violated",
]

DEFAULT_GRID_POINTS = 512
DEFAULT_TRIALS = 500


@dataclass(frozen=True)
class BetaBound:
    """Beta(a, b) upper bound on the detector's FPR distribution.

    a = m + l + 1 and b = N - m - l with l = floor(alpha*(N-m+1)), so
    a + b = N + 1 always.
    """

    a: int
    b: int
    l: int
    calibration_size: int
    outlier_count: int
    alpha: float

    def __post_init__(self):
        if self.a < 1 or self.b < 1:
            raise ContractError(
                f"degenerate Beta parameters a={self.a}, b={self.b}"
            )
        if self.a + self.b != self.calibration_size + 1:
            raise ContractError("Beta parameters must satisfy a + b = N + 1")

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def cdf(self, q):
        """P(B <= q), evaluated through the regularized incomplete beta."""
        arr = np.asarray(q, dtype=float)
        flat = np.clip(arr.ravel(), 0.0, 1.0)
        out = np.array(
            [regularized_incomplete_beta(self.a, self.b, float(z)) for z in flat]
        )
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "l": self.l,
            "calibration_size": self.calibration_size,
            "outlier_count": self.outlier_count,
            "alpha": self.alpha,
        }


class EmpiricalCdf:
    """Step CDF of an equally weighted sample."""

    def __init__(self, values):
        arr = np.sort(np.asarray(values, dtype=float))
        if arr.ndim != 1 or arr.size < 1:
            raise ContractError("empirical CDF needs a nonempty 1-D sample")
        if not np.all(np.isfinite(arr)):
            raise ContractError("empirical CDF values must be finite")
        self.values = arr
        self.size = int(arr.size)

    def evaluate(self, q):
        """Fraction of the sample at or below q (nondecreasing, in [0, 1])."""
        arr = np.asarray(q, dtype=float)
        counts = np.searchsorted(self.values, arr.ravel(), side="right")
        out = counts / self.size
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def quantile(self, p: float) -> float:
        """Smallest sample value whose CDF reaches p."""
        if not (0.0 < p <= 1.0):
            raise ContractError(f"quantile level must be in (0, 1], got {p!r}")
        index = math.ceil(p * self.size) - 1
        return float(self.values[index])

    def __eq__(self, other):
        return (
            isinstance(other, EmpiricalCdf)
            and self.values.shape == other.values.shape
            and bool(np.all(self.values == other.values))
        )


def fpr_beta_bound(N: int, m: int, alpha: float) -> BetaBound:
    """The Beta(m+l+1, N-m-l) FPR bound for an N-value calibration with m
    assumed outliers at detection level alpha."""
    if not (0 <= m < N):
        raise ContractError(f"need 0 <= m < N, got m={m}, N={N}")
    if not (0.0 < alpha < 1.0):
        raise ContractError(f"alpha must be in (0, 1), got {alpha!r}")
    l = math.floor(alpha * (N - m + 1))
    b = N - m - l
    if b < 1:
        raise ContractError(
            f"alpha={alpha} too large for N={N}, m={m}: bound shape "
            f"parameter b={b} is degenerate"
        )
    return BetaBound(a=m + l + 1, b=b, l=l, calibration_size=N,
                     outlier_count=m, alpha=float(alpha))


def asymptotic_fpr_level(alpha: float, beta_ratio: float, xi: float) -> float:
    """Large-N FPR ceiling tau = alpha + (1 - alpha) * beta + xi."""
    if not (0.0 < alpha < 1.0):
        raise ContractError(f"alpha must be in (0, 1), got {alpha!r}")
    if not (0.0 <= beta_ratio <= 1.0):
        raise ContractError(f"beta_ratio must be in [0, 1], got {beta_ratio!r}")
    if not (xi > 0.0 and math.isfinite(xi)):
        raise ContractError(f"xi must be positive, got {xi!r}")
    return alpha + (1.0 - alpha) * beta_ratio + xi


def simulate_fpr_distribution(
    ldp_pool,
    N: int,
    m: int,
    alpha: float,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> EmpiricalCdf:
    """Empirical FPR distribution from repeated calibration resampling.

    Each trial draws N pool values without replacement as the calibration
    set and scores every held-out value with the adjusted conformal
    p-value; the trial's FPR is the alarmed fraction. Per-trial generators
    are derived from (seed, trial index), so the result is independent of
    evaluation order.
    """
    pool = np.asarray(ldp_pool, dtype=float)
    if pool.ndim != 1 or pool.size <= N:
        raise ContractError(
            f"pool must be 1-D with more than N={N} values, got {pool.shape}"
        )
    if not np.all(np.isfinite(pool)):
        raise ContractError("pool values must be finite")
    if trials < 1:
        raise ContractError(f"trials must be >= 1, got {trials}")
    fpr_beta_bound(N, m, alpha)  # validates (N, m, alpha) jointly
    kept = N - m
    rates = np.empty(trials)
    for trial in range(trials):
        gen = NoiseStream(seed, (trial,)).generator()
        order = gen.permutation(pool.size)
        calibration = np.sort(pool[order[:N]])
        held_out = pool[order[N:]]
        below = np.searchsorted(calibration, held_out, side="left")
        capped = np.minimum(below, kept)
        p_values = 1.0 - (1.0 + capped) / (kept + 1.0)
        rates[trial] = np.mean(p_values <= alpha)
    return EmpiricalCdf(rates)


def dkw_tolerance(trials: int, confidence: float = 0.99) -> float:
    """Dvoretzky-Kiefer-Wolfowitz uniform CDF band at the given confidence."""
    if trials < 1:
        raise ContractError(f"trials must be >= 1, got {trials}")
    if not (0.0 < confidence < 1.0):
        raise ContractError(f"confidence must be in (0, 1), got {confidence!r}")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * trials))


def _default_grid():
    return np.linspace(0.0, 1.0, DEFAULT_GRID_POINTS)


def check_stochastic_dominance(
    empirical: EmpiricalCdf,
    bound: BetaBound,
    grid=None,
    tolerance: float | None = None,
) -> tuple:
    """Does the empirical FPR CDF dominate the Beta bound CDF?

    Dominance here means empirical(q) >= bound.cdf(q) - tolerance at every
    grid point (the bound variable is stochastically larger). Returns
    (holds, worst_gap) where worst_gap is the most negative value of
    empirical(q) - bound.cdf(q); tolerance defaults to the 99% DKW band
    for the empirical sample size.
    """
    if grid is None:
        grid = _default_grid()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ContractError("grid must be a nonempty 1-D array")
    if grid.min() < 0.0 or grid.max() > 1.0:
        raise ContractError("grid points must lie in [0, 1]")
    if tolerance is None:
        tolerance = dkw_tolerance(empirical.size)
    gaps = empirical.evaluate(grid) - bound.cdf(grid)
    worst_gap = float(np.min(gaps))
    return worst_gap >= -tolerance, worst_gap


def dominance_report(
    empirical: EmpiricalCdf,
    bound: BetaBound,
    grid=None,
    tolerance: float | None = None,
) -> dict:
    """JSON-ready verdict for the dominance check."""
    if tolerance is None:
        tolerance = dkw_tolerance(empirical.size)
    holds, worst_gap = check_stochastic_dominance(empirical, bound, grid,
                                                  tolerance)
    return {
        "holds": bool(holds),
        "worst_gap": worst_gap,
        "tolerance": tolerance,
        "trials": empirical.size,
        "fpr_quantile_095": empirical.quantile(0.95),
        "params": bound.to_json(),
    }


def dominance_csv_rows(empirical: EmpiricalCdf, bound: BetaBound, grid=None):
    """(q, empirical_cdf, beta_cdf) rows for CSV export."""
    if grid is None:
        grid = _default_grid()
    grid = np.asarray(grid, dtype=float)
    emp = empirical.evaluate(grid)
    ref = bound.cdf(grid)
    rows = [("q", "empirical_cdf", "beta_cdf")]
    for q, e, r in zip(grid, emp, ref):
        rows.append((repr(float(q)), repr(float(e)), repr(float(r))))
    return rows


def dominance_precondition_gap(calibration_values, benign_values, grid=None) -> float:
    """Worst violation of the exchangeability precondition that shadow
    (calibration) LDPs are stochastically larger than well-trained benign
    LDPs.

    Positive return: the shadow CDF rises above the benign CDF somewhere
    by that much, i.e. shadow values fail to dominate there. Zero or
    negative: the precondition holds on the grid.
    """
    shadow = EmpiricalCdf(calibration_values)
    benign = EmpiricalCdf(benign_values)
    if grid is None:
        lo = min(shadow.values[0], benign.values[0])
        hi = max(shadow.values[-1], benign.values[-1])
        grid = np.linspace(lo, hi, DEFAULT_GRID_POINTS)
    grid = np.asarray(grid, dtype=float)
    return float(np.max(shadow.evaluate(grid) - benign.evaluate(grid)))


def warn_if_dominance_violated(
    calibration_values, benign_values, tolerance: float = 0.05
) -> float:
    """Measure the dominance precondition and warn (never abort) when the
    violation exceeds the tolerance."""
    gap = dominance_precondition_gap(calibration_values, benign_values)
    if gap > tolerance:
        warnings.warn(
            f"shadow LDPs fail to dominate benign LDPs by up to {gap:.4f}; "
            "the FPR bound's exchangeability precondition looks violated",
            RuntimeWarning,
            stacklevel=2,
        )
    return gap
