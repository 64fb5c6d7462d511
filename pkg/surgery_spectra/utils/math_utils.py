"""Small math helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


def clamp(value: float, min_value: float, max_value: float) -> float:
    """Return *value* limited to the inclusive range [min_value, max_value]."""
    if value < min_value:
        return min_value
    if value > max_value:
        return max_value
    return value


def smoothstep(x: np.ndarray | float) -> np.ndarray:
    """Cubic smoothstep 3x^2 - 2x^3, clamped to [0, 1]."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def polar(points: np.ndarray, center: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (radius, angle in [0, 2pi)) of *points* around *center*."""
    d = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    r = np.hypot(d[..., 0], d[..., 1])
    theta = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * np.pi)
    return r, theta


@dataclass(frozen=True)
class PowerFit:
    """Least-squares fit of log(value) against log(eps)."""

    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    log_slope: float | None  # exponent after dividing out |log eps|
    defined: bool
    reason: str = ""


def fit_power_law(eps: np.ndarray, values: np.ndarray, confidence: float = 0.95) -> PowerFit:
    """Fit values ~ C eps^s and, separately, values ~ C eps^s |log eps|.

    The fit is undefined (``defined=False``) when fewer than three points are
    positive or the values do not vary.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (eps > 0) & (values > 0) & np.isfinite(values)
    nan = float("nan")
    if mask.sum() < 3:
        return PowerFit(nan, nan, nan, nan, None, False, "fewer than three positive samples")
    x = np.log(eps[mask])
    y = np.log(values[mask])
    if np.ptp(y) <= 1e-14 * max(1.0, np.abs(y).max()):
        return PowerFit(0.0, float(y[0]), nan, nan, None, False, "values do not vary")

    fit = stats.linregress(x, y)
    dof = mask.sum() - 2
    half = stats.t.ppf(0.5 + confidence / 2.0, dof) * fit.stderr if dof > 0 else nan
    corrected = stats.linregress(x, y - np.log(np.abs(x)))
    return PowerFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        ci_low=float(fit.slope - half),
        ci_high=float(fit.slope + half),
        log_slope=float(corrected.slope),
        defined=True,
    )
