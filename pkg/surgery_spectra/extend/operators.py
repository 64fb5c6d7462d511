"""Harmonic extension, refined extension operators and their energy identities.

Everything here is mode-diagonal: energies are sums over k of one-dimensional
integrals, computed on the Chebyshev panels of the neck profiles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from surgery_spectra import config
from surgery_spectra.extend.fields import (
    CircleTrace,
    CylinderField,
    DiskField,
    cosh_mode,
    dyadic_breaks,
    modes,
    panel_quadrature,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def split_even_odd(u: CylinderField, symmetry: str | None = None) -> tuple[CylinderField, CylinderField]:
    """Orthogonal splitting u = u_E + u_O.

    ``rotation`` (cross-caps, z -> -z) splits by the parity of k;
    ``reflection`` (handles, t -> -t) splits each profile into even and odd parts in t.
    """
    symmetry = symmetry or ("rotation" if u.domain == "crosscap" else "reflection")
    if symmetry == "rotation":
        even = (modes(u.K) % 2 == 0)[:, None, None, None]
        return u.with_coeffs(np.where(even, u.coeffs, 0.0), "even"), u.with_coeffs(np.where(even, 0.0, u.coeffs), "odd")
    if symmetry == "reflection":
        mirrored = u.reflected().coeffs
        return u.with_coeffs(0.5 * (u.coeffs + mirrored), "even"), u.with_coeffs(0.5 * (u.coeffs - mirrored), "odd")
    raise ValueError(f"unknown symmetry {symmetry!r}")


def _mode_energy(k: np.ndarray, values: np.ndarray, derivs: np.ndarray, weights: np.ndarray) -> float:
    density = np.abs(derivs) ** 2 + (k.astype(float) ** 2)[:, None, None] * np.abs(values) ** 2
    return float(TWO_PI * np.einsum("ktd,t->", density, weights))


def dirichlet_energy(u: CylinderField | DiskField) -> float:
    """Dirichlet energy, summed over components.

    Neck: 2 pi sum_k int |u_k'|^2 + k^2 |u_k|^2 dt over the stored t range.
    Disk: closed form 2 pi |k| |b_k|^2 e^{-2|k|L} inside r = e^{-L}, plus
    Gauss-Legendre quadrature in s = log r over the annulus.
    """
    if isinstance(u, CylinderField):
        nodes, weights = panel_quadrature(u.breakpoints, u.coeffs.shape[2] + 1)
        return _mode_energy(modes(u.K), u.mode_values(nodes), u.mode_values(nodes, derivative=True), weights)

    k = np.abs(modes(u.K))
    inner = TWO_PI * float(np.sum(k[:, None] * np.abs(u.harmonic) ** 2 * np.exp(-2.0 * k * u.L)[:, None]))
    extra, degree = None, 1
    if u.pulled is not None:
        extra = u.t_sign * u.pulled.breakpoints - u.L
        degree = u.pulled.coeffs.shape[2]
    points = max(config.RADIAL_GAUSS_POINTS, 8 + 2 * u.K, degree + 1)
    nodes, weights = panel_quadrature(dyadic_breaks(u.L, extra), points)
    growth = np.exp(np.outer(k, nodes))  # (2K+1, Q)
    values = u.harmonic[:, None, :] * growth[..., None] + u.pulled_modes(nodes)
    derivs = (k[:, None] * growth)[..., None] * u.harmonic[:, None, :] + u.pulled_modes(nodes, derivative=True)
    return inner + _mode_energy(modes(u.K), values, derivs, weights)


def harmonic_extend(trace: CircleTrace, L: float = 1.0) -> DiskField:
    """H(u): mode k extends as r^{|k|}; *L* only fixes where the energy quadrature switches to closed form."""
    return DiskField(np.array(trace.coeffs, dtype=complex), None, L=L)


def min_cylinder_energy(k: int, L: float, a: complex = 1.0) -> float:
    """2 pi k tanh(k L) |a|^2, attained by a cosh(k t) / cosh(k L) on [0, L]."""
    k = abs(int(k))
    if k == 0:
        return 0.0
    return TWO_PI * k * math.tanh(k * L) * abs(a) ** 2


def extension_ratio(k: int, L: float) -> float:
    """Exact energy(H(u)) / min_cylinder_energy for a pure mode: coth(k L)."""
    return 1.0 / math.tanh(abs(k) * L)


def explicit_bound(L: float) -> float:
    """1 + C e^{-2L} with C = 2 / (1 - e^{-2L}); equals coth(L)."""
    q = math.exp(-2.0 * L)
    return 1.0 + 2.0 * q / (1.0 - q)


def _is_odd(u: CylinderField, tol: float) -> bool:
    scale = max(1.0, float(np.abs(u.coeffs).max(initial=0.0)))
    if u.domain == "crosscap":
        even = modes(u.K) % 2 == 0
        if np.abs(u.coeffs[even]).max(initial=0.0) > tol * scale:
            return False
        core = u.mode_values(np.array([0.0]))
        return bool(np.abs(core).max(initial=0.0) <= tol * scale)
    return bool(np.abs(u.coeffs + u.reflected().coeffs).max(initial=0.0) <= tol * scale)


def conformal_log_pullback(
    u_odd: CylinderField, t_sign: int = 1, reflect: float | None = None, tol: float = 1e-9
) -> DiskField:
    """K(u_O) = u_O o F with F(z) = (z / |z|, L + log |z|) on the annulus, zero inside r = e^{-L}."""
    if not _is_odd(u_odd, tol):
        raise ValueError("conformal pullback needs a pure odd part vanishing on the core circle")
    harmonic = np.zeros((2 * u_odd.K + 1, u_odd.components), dtype=complex)
    return DiskField(harmonic, u_odd, t_sign=t_sign, reflect=reflect, L=u_odd.L)


def refined_extend_crosscap(u: CylinderField) -> DiskField:
    """K(u) = H(u_E) + K(u_O) for a field on Gamma_L; its trace on r = 1 is u(., L)."""
    if u.domain != "crosscap":
        raise ValueError("refined_extend_crosscap needs a Gamma_L field")
    u_even, u_odd = split_even_odd(u, "rotation")
    pulled = conformal_log_pullback(u_odd)
    return DiskField(u_even.trace(u.L).coeffs, pulled.pulled, t_sign=1, L=u.L)


def refined_extend_handle(u: CylinderField, v: float = 0.0) -> tuple[DiskField, DiskField]:
    """Extensions into D_eps(p) and D_eps(q) for a field on T_L.

    The p disk sees t = -(L + log r) with the band angle; the q disk sees
    t = L + log r with the band angle reflected across direction *v*.
    """
    if u.domain != "handle":
        raise ValueError("refined_extend_handle needs a T_L field")
    u_even, u_odd = split_even_odd(u, "reflection")
    p_harm = u_even.trace(-u.L).coeffs
    q_trace = u_even.trace(u.L).coeffs
    m = modes(u.K)
    q_harm = q_trace[::-1] * np.exp(-2j * m * v)[:, None]
    p_field = DiskField(p_harm, conformal_log_pullback(u_odd, t_sign=-1).pulled, t_sign=-1, L=u.L)
    q_field = DiskField(q_harm, conformal_log_pullback(u_odd, t_sign=1, reflect=v).pulled, t_sign=1, reflect=v, L=u.L)
    return p_field, q_field


@dataclass(frozen=True)
class EnergyDrop:
    """Both sides of E(K(u)) - E(u) = E(K(u)_E) - E(u_E)."""

    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


def energy_drop(u: CylinderField, v: float = 0.0) -> EnergyDrop:
    """Evaluate the energy-drop identity for a neck field (cross-cap or handle)."""
    u_even, _ = split_even_odd(u)
    if u.domain == "crosscap":
        disks = (refined_extend_crosscap(u),)
    else:
        disks = refined_extend_handle(u, v)
    extended = sum(dirichlet_energy(d) for d in disks)
    extended_even = sum(dirichlet_energy(d.harmonic_part()) for d in disks)
    return EnergyDrop(
        lhs=extended - dirichlet_energy(u),
        rhs=extended_even - dirichlet_energy(u_even),
    )


def _reflect_polar(phi: np.ndarray, v: float) -> np.ndarray:
    return np.mod(2.0 * v - phi, TWO_PI)


def equivariance_residual(p_field: DiskField, q_field: DiskField, v: float = 0.0, samples: int = 32) -> float:
    """max |K(u_E) o iota - K(u_E)| and |K(u_O) o iota + K(u_O)| over a polar grid."""
    r, phi = np.meshgrid(np.linspace(0.0, 1.0, samples), np.linspace(0.0, TWO_PI, 2 * samples, endpoint=False))
    image = _reflect_polar(phi, v)
    even = q_field.harmonic_part().evaluate(r, image) - p_field.harmonic_part().evaluate(r, phi)
    odd = q_field.pulled_part().evaluate(r, image) + p_field.pulled_part().evaluate(r, phi)
    return float(max(np.abs(even).max(), np.abs(odd).max()))


def sup_norm(field: CylinderField | DiskField, samples: int = 64) -> float:
    """Sampled sup of the pointwise Euclidean norm."""
    theta = np.linspace(0.0, TWO_PI, max(samples, 4 * field.K + 4), endpoint=False)
    if isinstance(field, CylinderField):
        lo, hi = field.t_range
        values = field.evaluate(theta, np.linspace(lo, hi, samples * field.panels + 1))
    else:
        r = np.concatenate([np.linspace(0.0, 1.0, samples), np.exp(-field.L * np.linspace(0.0, 1.0, samples))])
        rr, pp = np.meshgrid(r, theta)
        values = field.evaluate(rr, pp)
    return float(np.linalg.norm(values, axis=-1).max())


def verification_rows(K: int, Ls: Sequence[float]) -> list[dict]:
    """Per-mode extension certificate rows: measured energies against coth(kL) and the explicit bound."""
    rows = []
    for L in Ls:
        bound = explicit_bound(L)
        for k in range(1, K + 1):
            disk = dirichlet_energy(harmonic_extend(CircleTrace.single_mode(k), L=L))
            cyl = dirichlet_energy(cosh_mode(k, L))
            ratio = disk / cyl
            exact = extension_ratio(k, L)
            passed = abs(ratio - exact) <= 1e-10 * exact and ratio <= bound * (1.0 + 1e-12)
            rows.append(
                {
                    "k": k,
                    "L": float(L),
                    "disk_energy": disk,
                    "cylinder_energy": cyl,
                    "ratio": ratio,
                    "coth": exact,
                    "bound": bound,
                    "pass": bool(passed),
                }
            )
    failed = sum(not row["pass"] for row in rows)
    if failed:
        logger.warning("%d of %d extension certificate rows failed", failed, len(rows))
    return rows
