"""Band-limited Fourier fields on circles, necks and disks.

Mode k of every field multiplies e^{ik theta}; coefficient arrays have shape
(2K + 1, ..., d) with row K + k holding mode k, and real-valuedness means
row K - k is the conjugate of row K + k. Neck profiles u_k(t) are piecewise
Chebyshev series on panels, so energies are integrated exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev, legendre

from surgery_spectra import config

logger = logging.getLogger(__name__)

DOMAINS = ("crosscap", "handle")


def modes(K: int) -> np.ndarray:
    return np.arange(-K, K + 1)


def _as_columns(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    return values[..., None] if values.ndim == 1 else values


def fourier_fit(samples: np.ndarray, K: int) -> tuple[np.ndarray, float]:
    """Least-squares modes |k| <= K of N equispaced samples (N, d); returns (coeffs, relative residual)."""
    samples = _as_columns(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if K > n // 2 - 1:
        raise ValueError(f"band limit K={K} needs more than {2 * K + 1} samples, got {n}")
    spectrum = np.fft.fft(samples, axis=0) / n
    coeffs = spectrum[np.mod(modes(K), n)]
    theta = 2.0 * math.pi * np.arange(n) / n
    fitted = np.real(np.exp(1j * np.outer(theta, modes(K))) @ coeffs)
    scale = np.linalg.norm(samples)
    residual = float(np.linalg.norm(samples - fitted) / scale) if scale > 0 else 0.0
    return coeffs, residual


@dataclass(frozen=True, eq=False)
class CircleTrace:
    """Fourier coefficients (2K + 1, d) of a real function on the unit circle."""

    coeffs: np.ndarray

    @property
    def K(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def components(self) -> int:
        return int(self.coeffs.shape[1])

    @classmethod
    def single_mode(cls, k: int, amplitude: complex = 1.0, K: int | None = None) -> "CircleTrace":
        """Real trace amplitude e^{ik theta} + conj; for k = 0 just the constant."""
        K = abs(k) if K is None else K
        coeffs = np.zeros((2 * K + 1, 1), dtype=complex)
        coeffs[K + k, 0] += amplitude
        if k != 0:
            coeffs[K - k, 0] += np.conj(amplitude)
        return cls(coeffs)

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.real(np.exp(1j * np.multiply.outer(theta, modes(self.K))) @ self.coeffs)

    def is_real(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.abs(self.coeffs).max(initial=0.0)))
        return bool(np.abs(self.coeffs - np.conj(self.coeffs[::-1])).max(initial=0.0) <= tol * scale)


@dataclass(frozen=True, eq=False)
class CylinderField:
    """Function on a neck: Gamma_L stored on t in [0, L] or T_L on t in [-L, L].

    ``coeffs[K + k, s]`` holds the Chebyshev coefficients of u_k on panel s,
    shape (2K + 1, S, P, d). Cross-cap fields keep odd modes zero at t = 0,
    which is how the core identification (z, 0) ~ (-z, 0) shows up in modes.
    """

    domain: str
    L: float
    breakpoints: np.ndarray
    coeffs: np.ndarray
    symmetry: str = "none"

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown neck domain {self.domain!r}")

    @property
    def K(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def components(self) -> int:
        return int(self.coeffs.shape[3])

    @property
    def panels(self) -> int:
        return int(self.coeffs.shape[1])

    @property
    def t_range(self) -> tuple[float, float]:
        return (0.0 if self.domain == "crosscap" else -self.L, self.L)

    # Construction -----------------------------------------------------------

    @classmethod
    def from_profile(
        cls,
        profile: Callable[[np.ndarray], np.ndarray],
        K: int,
        L: float,
        domain: str,
        components: int = 1,
        degree: int = config.PANEL_DEGREE,
        panels: int | None = None,
    ) -> "CylinderField":
        """Interpolate mode profiles ``profile(t) -> (2K + 1, len(t), d)`` on Chebyshev points."""
        a = 0.0 if domain == "crosscap" else -L
        if panels is None:
            panels = max(1, math.ceil((L - a) * max(K, 1) / config.PANEL_STIFFNESS))
        breakpoints = np.linspace(a, L, panels + 1)
        P = degree + 1
        x = np.cos(math.pi * (np.arange(P) + 0.5) / P)
        mids = 0.5 * (breakpoints[1:] + breakpoints[:-1])
        halves = 0.5 * (breakpoints[1:] - breakpoints[:-1])
        t = (mids[:, None] + halves[:, None] * x[None, :]).ravel()
        values = np.asarray(profile(t), dtype=complex).reshape(2 * K + 1, panels, P, components)
        flat = np.moveaxis(values, 2, 0).reshape(P, -1)
        fitted = chebyshev.chebfit(x, flat.real, degree) + 1j * chebyshev.chebfit(x, flat.imag, degree)
        coeffs = np.moveaxis(fitted.reshape(P, 2 * K + 1, panels, components), 0, 2)
        return cls(domain, float(L), breakpoints, coeffs)

    @classmethod
    def from_rings(cls, values: np.ndarray, t: np.ndarray, K: int, domain: str) -> tuple["CylinderField", float]:
        """Piecewise-linear field through ring samples ``values`` (R + 1, N, d) at heights ``t``.

        Returns the field and the worst relative Fourier-fit residual over rings.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[..., None]
        fits = [fourier_fit(ring, K) for ring in values]
        ring_coeffs = np.stack([c for c, _ in fits], axis=1)  # (2K+1, R+1, d)
        residual = max(r for _, r in fits)
        left, right = ring_coeffs[:, :-1], ring_coeffs[:, 1:]
        coeffs = np.stack([0.5 * (left + right), 0.5 * (right - left)], axis=2)
        t = np.asarray(t, dtype=float)
        L = float(t[-1])
        return cls(domain, L, t.copy(), coeffs), residual

    # Evaluation ---------------------------------------------------------------

    def _locate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        s = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, self.panels - 1)
        lo, hi = self.breakpoints[s], self.breakpoints[s + 1]
        x = (2.0 * t - lo - hi) / (hi - lo)
        return s, x

    def mode_values(self, t: np.ndarray, derivative: bool = False) -> np.ndarray:
        """Mode profiles u_k(t) (or u_k'(t)) with shape (2K + 1, len(t), d)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s, x = self._locate(t)
        coeffs = self.coeffs
        if derivative:
            width = np.diff(self.breakpoints)
            coeffs = chebyshev.chebder(coeffs, axis=2) * (2.0 / width)[None, :, None, None]
        vander = chebyshev.chebvander(x, coeffs.shape[2] - 1)
        return np.einsum("tp,ktpd->ktd", vander, coeffs[:, s])

    def evaluate(self, theta: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Real values on the grid theta x t, shape (len(theta), len(t), d)."""
        phase = np.exp(1j * np.outer(np.atleast_1d(theta), modes(self.K)))
        return np.real(np.einsum("ak,ktd->atd", phase, self.mode_values(t)))

    def trace(self, t: float | None = None) -> CircleTrace:
        """Trace on the circle at height *t* (default the outer end t = L)."""
        t = self.L if t is None else t
        return CircleTrace(self.mode_values(np.array([t]))[:, 0, :])

    # Algebra ----------------------------------------------------------------

    def with_coeffs(self, coeffs: np.ndarray, symmetry: str = "none") -> "CylinderField":
        return replace(self, coeffs=coeffs, symmetry=symmetry)

    def reflected(self) -> "CylinderField":
        """u(z, -t) on symmetric breakpoints: panels reversed, odd Chebyshev terms negated."""
        if self.domain != "handle" or not np.allclose(self.breakpoints, -self.breakpoints[::-1], atol=1e-14):
            raise ValueError("reflection t -> -t needs a handle field on symmetric panels")
        signs = (-1.0) ** np.arange(self.coeffs.shape[2])
        return self.with_coeffs(self.coeffs[:, ::-1] * signs[None, None, :, None])

    def __add__(self, other: "CylinderField") -> "CylinderField":
        return self.with_coeffs(self.coeffs + other.coeffs)

    def scaled(self, factor: float) -> "CylinderField":
        return self.with_coeffs(self.coeffs * factor, self.symmetry)


def _stable_cosh_ratio(k: int, t: np.ndarray, L: float) -> np.ndarray:
    """cosh(k t) / cosh(k L) without overflow."""
    if k == 0:
        return np.ones_like(t)
    return np.exp(k * (np.abs(t) - L)) * (1.0 + np.exp(-2.0 * k * np.abs(t))) / (1.0 + math.exp(-2.0 * k * L))


def cosh_mode(k: int, L: float, domain: str = "crosscap", amplitude: complex = 1.0, K: int | None = None) -> CylinderField:
    """Energy-minimizing profile a cosh(k t) / cosh(k L) in mode k (plus its conjugate mode)."""
    K = abs(k) if K is None else K

    def profile(t: np.ndarray) -> np.ndarray:
        out = np.zeros((2 * K + 1, len(t), 1), dtype=complex)
        shape = _stable_cosh_ratio(abs(k), t, L)
        out[K + k, :, 0] += amplitude * shape
        if k != 0:
            out[K - k, :, 0] += np.conj(amplitude) * shape
        return out

    return CylinderField.from_profile(profile, K, L, domain)


def random_band_limited(
    K: int,
    L: float,
    domain: str = "crosscap",
    components: int = 1,
    seed: int = config.SEED,
    degree: int = 5,
) -> CylinderField:
    """Random smooth real field: each mode profile is a polynomial in t / L of *degree*.

    Amplitudes decay like 1 / (1 + |k|)^2. Cross-cap odd modes vanish at t = 0.
    """
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((K + 1, degree + 1, components, 2))
    poly = (raw[..., 0] + 1j * raw[..., 1]) / (1.0 + np.arange(K + 1))[:, None, None] ** 2
    poly[0] = poly[0].real
    if domain == "crosscap":
        poly[1::2, 0] = 0.0

    def profile(t: np.ndarray) -> np.ndarray:
        tau = np.asarray(t) / L
        powers = tau[None, :] ** np.arange(degree + 1)[:, None]  # (deg+1, T)
        half = np.einsum("kmd,mt->ktd", poly, powers)
        out = np.zeros((2 * K + 1, len(tau), components), dtype=complex)
        out[K:] = half
        out[:K] = np.conj(half[1:][::-1])
        return out

    return CylinderField.from_profile(profile, K, L, domain, components=components)


@dataclass(frozen=True, eq=False)
class DiskField:
    """Function on the unit disk: harmonic modes r^{|k|} plus an optional pulled-back neck field.

    The pulled part lives on e^{-L} <= r <= 1 at neck height t = t_sign (L + log r)
    and vanishes inside. With ``reflect`` = alpha the neck angle is 2 alpha - phi,
    so disk mode m carries neck mode -m times e^{-2 i m alpha}.
    """

    harmonic: np.ndarray
    pulled: CylinderField | None = None
    t_sign: int = 1
    reflect: float | None = None
    L: float = 1.0

    @property
    def K(self) -> int:
        return (self.harmonic.shape[0] - 1) // 2

    @property
    def components(self) -> int:
        return int(self.harmonic.shape[1])

    def pulled_modes(self, s: np.ndarray, derivative: bool = False) -> np.ndarray:
        """Disk-mode profiles of the pulled part at s = log r, shape (2K + 1, len(s), d)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros((2 * self.K + 1, len(s), self.components), dtype=complex)
        if self.pulled is None:
            return out
        t = self.t_sign * (self.L + np.maximum(s, -self.L))
        values = self.pulled.mode_values(t, derivative=derivative)
        if derivative:
            values = values * self.t_sign
        if self.reflect is not None:
            m = modes(self.K)
            values = values[::-1] * np.exp(-2j * m * self.reflect)[:, None, None]
        inside = s >= -self.L - 1e-15
        out[:, inside] = values[:, inside]
        return out

    def mode_values(self, r: np.ndarray) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        k = np.abs(modes(self.K))
        radial = r[None, :] ** k[:, None]
        values = self.harmonic[:, None, :] * radial[..., None]
        with np.errstate(divide="ignore"):
            s = np.where(r > 0, np.log(np.maximum(r, 1e-300)), -np.inf)
        return values + self.pulled_modes(s)

    def evaluate(self, r: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """Real values at polar points (r, phi) of equal shape, shape (..., d)."""
        r = np.asarray(r, dtype=float)
        phi = np.asarray(phi, dtype=float)
        flat_r, flat_phi = r.ravel(), phi.ravel()
        profiles = self.mode_values(flat_r)  # (2K+1, n, d)
        phase = np.exp(1j * np.outer(flat_phi, modes(self.K)))  # (n, 2K+1)
        values = np.real(np.einsum("nk,knd->nd", phase, profiles))
        return values.reshape(r.shape + (self.components,))

    def trace(self) -> CircleTrace:
        return CircleTrace(self.mode_values(np.array([1.0]))[:, 0, :])

    def harmonic_part(self) -> "DiskField":
        return DiskField(self.harmonic, None, L=self.L)

    def pulled_part(self) -> "DiskField":
        return DiskField(np.zeros_like(self.harmonic), self.pulled, self.t_sign, self.reflect, self.L)


def panel_quadrature(breaks: np.ndarray, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights over consecutive intervals."""
    x, w = legendre.leggauss(points)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def dyadic_breaks(L: float, extra: np.ndarray | None = None) -> np.ndarray:
    """Breakpoints in s = log r over [-L, 0]: dyadic rings plus any *extra* points."""
    count = max(1, math.ceil(L / math.log(2.0)))
    breaks = -math.log(2.0) * np.arange(count + 1, dtype=float)
    breaks = np.clip(breaks, -L, 0.0)
    if extra is not None:
        breaks = np.concatenate([breaks, np.asarray(extra, dtype=float)[(extra > -L) & (extra < 0)]])
    return np.unique(np.append(breaks, -L))
