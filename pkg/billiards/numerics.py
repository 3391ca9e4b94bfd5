"""
Numerical helpers: compensated summation, sequence acceleration and rate fits
"""

import logging
import math
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import FitUnstable, InsufficientDecayWindow

logger = logging.getLogger(__name__)


class CompensatedSum:
    """Running sum that keeps the rounding error of every addition.

    The pair (total, error) represents the exact sum of the added terms up to
    one rounding of the low word.
    """

    def __init__(self, value: float = 0.0):
        self._total = float(value)
        self._error = 0.0

    @staticmethod
    def two_sum(u: float, v: float) -> Tuple[float, float]:
        # u + v == s + t exactly
        s = u + v
        up = s - v
        vpp = s - up
        up -= u
        vpp -= v
        return s, -(up + vpp)

    def add(self, value: float) -> 'CompensatedSum':
        y, u = self.two_sum(float(value), self._error)
        self._total, self._error = self.two_sum(y, self._total)
        if self._total == 0.0:
            self._total = u
        else:
            self._error += u
        return self

    def extend(self, values: Iterable[float]) -> 'CompensatedSum':
        for value in values:
            self.add(value)
        return self

    @property
    def value(self) -> float:
        return self._total + self._error

    def __float__(self) -> float:
        return self.value


def compensated_sum(values: Iterable[float]) -> float:
    return CompensatedSum().extend(values).value


def geometric_limit(d0: float, d1: float, d2: float) -> Tuple[float, float]:
    """Limit and ratio of an equally spaced, exactly geometric triple.

    Returns (limit, ratio) with d_k = limit + c * ratio**k.
    """
    delta1 = d1 - d0
    delta2 = d2 - d1
    denominator = delta2 - delta1
    scale = max(abs(d0), abs(d1), abs(d2), 1e-300)
    if delta1 == 0.0 or abs(denominator) <= 1e-15 * scale:
        raise FitUnstable("Acceleration denominator vanishes",
                          {'d': [d0, d1, d2]})
    ratio = delta2 / delta1
    if not 0.0 < ratio < 1.0:
        raise FitUnstable(f"Sequence is not geometrically convergent (ratio {ratio:.6g})",
                          {'d': [d0, d1, d2], 'ratio': ratio})
    return d2 - delta2 * delta2 / denominator, ratio


def aitken_sequence(values: Sequence[float]) -> List[Tuple[float, float]]:
    """Aitken delta-squared estimates for every consecutive triple."""
    if len(values) < 3:
        raise FitUnstable(f"Aitken acceleration needs 3 values, got {len(values)}")
    return [geometric_limit(values[i], values[i + 1], values[i + 2])
            for i in range(len(values) - 2)]


def richardson_limit(step_ratio: float, values: Sequence[float]) -> float:
    """Richardson table for values whose error shrinks by step_ratio per step."""
    level = list(values)
    if len(level) == 1:
        return level[0]
    for m in range(1, len(values)):
        mult = step_ratio ** m
        factor = 1.0 / (mult - 1.0)
        level = [factor * (mult * level[i + 1] - level[i]) for i in range(len(level) - 1)]
    return level[0]


def loglinear_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """Fit log|y| = intercept + slope * x.

    Returns (slope, intercept, rms residual).
    """
    x = np.asarray(x, dtype=float)
    magnitude = np.abs(np.asarray(y, dtype=float))
    if len(x) < 2 or np.any(magnitude == 0.0):
        raise InsufficientDecayWindow(f"Log-linear fit needs 2 nonzero values, got {len(x)}")
    logs = np.log(magnitude)
    slope, intercept = np.polyfit(x, logs, 1)
    residual = logs - (intercept + slope * x)
    return float(slope), float(intercept), float(np.sqrt(np.mean(residual ** 2)))


def inverse_n_fit(n: Sequence[float], values: Sequence[float]) -> Tuple[float, float]:
    """Weighted fit of values = intercept + slope / n with variance weights n**2.

    Returns (intercept, slope).
    """
    n = np.asarray(n, dtype=float)
    values = np.asarray(values, dtype=float)
    # polyfit weights multiply the unsquared residuals
    slope, intercept = np.polyfit(1.0 / n, values, 1, w=n)
    return float(intercept), float(slope)


def median_constant(values: Sequence[float], scale: Sequence[float]) -> float:
    """Median of values * scale, the leading constant of a geometric decay."""
    return float(np.median(np.asarray(values, dtype=float) * np.asarray(scale, dtype=float)))


def decay_window(length: int, log_rate: float, order: int = 1,
                 transient: float = 5e-3, noise: float = 1e-13,
                 shadow_length: int = None) -> List[int]:
    """Indices x = 0..length-1 where a decay like rate**(-order*x) is usable.

    Skips the first points (nonlinear transient) and stops before the signal
    reaches the noise floor or the shadowing correction of a finite orbit.
    """
    if log_rate <= 0:
        raise FitUnstable(f"Decay rate must exceed 1, got log rate {log_rate}")
    x_lo = math.ceil(math.log(1.0 / transient) / (order * log_rate))
    x_hi = math.floor(math.log(transient / noise) / (order * log_rate))
    if shadow_length is not None:
        x_hi = min(x_hi, math.floor(
            (shadow_length - math.log(1.0 / transient) / log_rate) / 2))
    x_hi = min(x_hi, length - 1)
    window = list(range(x_lo, x_hi + 1))
    if len(window) < 4:
        raise InsufficientDecayWindow(
            f"Only {len(window)} usable points before the precision floor",
            {'x_lo': x_lo, 'x_hi': x_hi, 'length': length})
    return window
