"""Exponential integral Ei and error function erf at double precision.

The closed-form sampling trajectories need Ei on the negative real axis
(arguments of the form -2*eta*tau*sigma^2) and erf for the flow-matching
variance integral.  Target accuracy is a combined absolute/relative
tolerance of 1e-12, which is what the downstream formulas require.

Ei is evaluated by the standard three-regime split:

* power series  Ei(x) = gamma + ln|x| + sum_n x^n / (n * n!)
  on -6 <= x < 0 and 0 < x <= 40 (all-positive terms for x > 0, mild
  alternating cancellation on the negative side, summed with fsum);
* continued fraction for E1(-x) (modified Lentz) for x < -6, using
  Ei(x) = -E1(-x);
* divergent asymptotic series e^x/x * sum_n n!/x^n, truncated at the
  smallest term, for x > 40 (no continued fraction exists on the
  positive axis; the series/CF crossover at |x| = 6 applies to the
  negative axis only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["ToleranceConfig", "expint_ei", "erf", "EULER_GAMMA"]

EULER_GAMMA = 0.57721566490153286060651209008240243


@dataclass(frozen=True)
class ToleranceConfig:
    """Termination control for the series / continued-fraction loops."""

    abs_tol: float = 1e-17
    rel_tol: float = 1e-16
    max_terms: int = 500

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


_DEFAULT_TOL = ToleranceConfig()

# Negative-axis series/continued-fraction crossover.
_CF_CROSSOVER = 6.0
# Positive-axis series/asymptotic crossover.
_ASYMPTOTIC_CROSSOVER = 40.0


def _ei_series(x: float, tol: ToleranceConfig) -> float:
    """Power series around 0; valid for any x != 0, used for |x| moderate."""
    terms = []
    p = 1.0
    run = 0.0
    for n in range(1, tol.max_terms + 1):
        p *= x / n
        t = p / n
        terms.append(t)
        run += t
        if n > abs(x) and abs(t) <= tol.abs_tol + tol.rel_tol * abs(run):
            break
    return EULER_GAMMA + math.log(abs(x)) + math.fsum(terms)


def _e1_continued_fraction(x: float, tol: ToleranceConfig) -> float:
    """E1(x) for x > 0 via the modified Lentz continued fraction.

    E1(x) = e^-x / (x + 1 - 1^2/(x + 3 - 2^2/(x + 5 - ...)))
    """
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, tol.max_terms + 1):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < tol.rel_tol:
            break
    return math.exp(-x) * h


def _ei_asymptotic(x: float, tol: ToleranceConfig) -> float:
    """Asymptotic series e^x/x * (1 + 1!/x + 2!/x^2 + ...), x large."""
    s = 1.0
    t = 1.0
    for n in range(1, tol.max_terms + 1):
        t_next = t * n / x
        if t_next >= t:
            break  # past the smallest term of the divergent series
        t = t_next
        s += t
        if t <= tol.rel_tol * s:
            break
    # e^x alone overflows before e^x/x * s does only marginally; split safely.
    return math.exp(x - math.log(x)) * s


def expint_ei(x: float, tol: ToleranceConfig = _DEFAULT_TOL) -> float:
    """Exponential integral Ei(x) for real x != 0.

    Raises ValueError at x = 0 (logarithmic singularity).  Ei(x) -> 0-
    as x -> -inf and grows like e^x/x as x -> +inf.
    """
    x = float(x)
    if x == 0.0:
        raise ValueError("Ei has a logarithmic singularity at x = 0")
    if math.isnan(x):
        return math.nan
    if x < 0.0:
        if x < -745.0:
            return -0.0  # |Ei(x)| < e^x underflows
        if x < -_CF_CROSSOVER:
            return -_e1_continued_fraction(-x, tol)
        return _ei_series(x, tol)
    if x <= _ASYMPTOTIC_CROSSOVER:
        return _ei_series(x, tol)
    if x > 716.0:
        return math.inf  # e^x/x overflows double precision
    return _ei_asymptotic(x, tol)


def erf(x: float) -> float:
    """Error function; odd, saturates at +-1.

    Delegates to the C library implementation exposed by ``math.erf``,
    which is accurate to well under the 1e-12 contract everywhere.
    """
    return math.erf(x)
