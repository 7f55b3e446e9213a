"""Scalar special functions backing the detection and certification math.

Self-contained on purpose: the toolkit needs exactly three functions (the
standard normal CDF, its inverse, and the regularized incomplete beta) at
tolerances tight enough to sit inside certified bounds, with no dependency
beyond the standard library. Everything here is scalar float -> float.
"""

from __future__ import annotations

import math

from .errors import ContractError

__all__ = ["gaussian_cdf", "gaussian_quantile", "regularized_incomplete_beta"]

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def gaussian_cdf(z: float) -> float:
    """Standard normal CDF.

    Rides on math.erfc, which keeps the relative error near machine epsilon
    even deep in the lower tail, so the absolute error is below 1e-14
    everywhere. Accepts +-inf and returns exact 0.0 / 1.0 there.
    """
    z = float(z)
    if math.isnan(z):
        raise ContractError("gaussian_cdf: z must not be NaN")
    return 0.5 * math.erfc(-z / _SQRT2)


# Rational initial guess for the normal quantile (Acklam's coefficients),
# accurate to ~1.2e-9 on its own; two Halley corrections against
# gaussian_cdf then push the error to the few-ulp level.
_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_P_LOW = 0.02425


def _quantile_initial_guess(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -(
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (
        (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5])
        * q
        / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    )


def gaussian_quantile(p: float) -> float:
    """Inverse standard normal CDF.

    p must lie in [0, 1]; the endpoints map to -inf / +inf. Absolute error
    is below 1e-9 across [1e-12, 1 - 1e-12] (the refinement leaves it near
    machine precision).
    """
    p = float(p)
    if math.isnan(p) or p < 0.0 or p > 1.0:
        raise ContractError(f"gaussian_quantile: p must be in [0, 1], got {p!r}")
    if p == 0.0:
        return float("-inf")
    if p == 1.0:
        return float("inf")
    # Reflect the upper half down: 1 - p is exact for p >= 0.5, and erfc
    # keeps full relative precision in the lower tail, so the refinement
    # never fights cancellation against 1.0.
    if p > 0.5:
        return -_refined_lower_quantile(1.0 - p)
    return _refined_lower_quantile(p)


def _refined_lower_quantile(p: float) -> float:
    x = _quantile_initial_guess(p)
    # Halley's method on Phi(x) - p; the exp(x*x/2) factor is safe for any
    # p representable as a positive double (|x| < 39).
    for _ in range(2):
        err = gaussian_cdf(x) - p
        u = err * _SQRT_2PI * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


def regularized_incomplete_beta(a: float, b: float, z: float) -> float:
    """Regularized incomplete beta I_z(a, b) = P(Beta(a, b) <= z).

    Continued-fraction evaluation (modified Lentz); the complementary
    identity I_z(a,b) = 1 - I_{1-z}(b,a) is applied when
    z > (a+1)/(a+b+2) so the fraction always runs on its fast side.
    Requires a > 0, b > 0, 0 <= z <= 1.
    """
    a = float(a)
    b = float(b)
    z = float(z)
    if not (a > 0.0 and math.isfinite(a)) or not (b > 0.0 and math.isfinite(b)):
        raise ContractError(
            f"regularized_incomplete_beta: a and b must be finite and > 0, "
            f"got a={a!r}, b={b!r}"
        )
    if math.isnan(z) or z < 0.0 or z > 1.0:
        raise ContractError(
            f"regularized_incomplete_beta: z must be in [0, 1], got {z!r}"
        )
    if z == 0.0:
        return 0.0
    if z == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(z)
        + b * math.log1p(-z)
    )
    front = math.exp(log_front)
    if z < (a + 1.0) / (a + b + 2.0):
        result = front * _beta_continued_fraction(a, b, z) / a
    else:
        result = 1.0 - front * _beta_continued_fraction(b, a, 1.0 - z) / b
    # the fraction can overshoot the closed interval by an ulp or two
    return min(1.0, max(0.0, result))


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Lentz evaluation of the incomplete beta continued fraction at x,
    assuming x is on the convergent side of the symmetry switch."""
    max_iterations = 500
    eps = 1e-16
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        numer = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numer * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numer / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numer = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numer * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numer / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < eps:
            return h
    raise ContractError(
        f"incomplete beta continued fraction did not converge "
        f"(a={a}, b={b}, x={x})"
    )
