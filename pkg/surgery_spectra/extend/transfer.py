"""Transfer of functions from a glued surface back to its base surface.

Away from the surgery disks the function is copied. Inside D_eps the neck
restriction is fitted by a band-limited field and extended with the refined
operator; the thin annulus eps <= r < 2 eps, remeshed by the surgery, is
interpolated linearly over the glued disk faces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from surgery_spectra import config
from surgery_spectra.extend.fields import CylinderField, DiskField
from surgery_spectra.extend.operators import (
    dirichlet_energy,
    refined_extend_crosscap,
    refined_extend_handle,
    split_even_odd,
)
from surgery_spectra.glue.surgery import GluedSurface, Seam, chart_array, barycentric
from surgery_spectra.spectrum.assembly import assemble_stiffness
from surgery_spectra.utils.math_utils import polar

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TransferResult:
    """T(u) on the base vertices and both sides of the transferred energy identity.

    lhs = |dT(u)|^2 on the base; rhs = |du|^2 on the glued surface plus the
    even-part energy gained in the disks minus the even neck energy.
    """

    values: np.ndarray
    lhs: float
    rhs: float
    fit_residual: float
    warned: bool
    neck: CylinderField
    disks: tuple[DiskField, ...]


def neck_field(u: np.ndarray, glued: GluedSurface, K: int | None = None) -> tuple[CylinderField, float]:
    """Band-limited field through the band ring samples of *u*; returns (field, fit residual)."""
    u = np.asarray(u, dtype=float)
    n = glued.spec.n
    K = n // 4 if K is None else K
    samples = u[glued.band_grid]
    return CylinderField.from_rings(samples, glued.band_t, K, glued.kind)


def _energy(S, u: np.ndarray) -> float:
    return float(np.sum(u * (S @ u)))


def _interpolate(glued: GluedSurface, u: np.ndarray, points: np.ndarray, patch: int) -> np.ndarray:
    """P1 interpolation of *u* at chart points over the glued disk faces."""
    chart, _ = chart_array(glued.mesh, patch)
    faces = glued.mesh.faces[glued.disk_faces]
    tri = chart[faces]
    out = np.empty((len(points), u.shape[1]))
    for i, x in enumerate(points):
        bary = barycentric(tri, x)
        best = int(np.nanargmax(np.nanmin(bary, axis=1)))
        if np.nanmin(bary[best]) < -1e-8:
            logger.debug("Chart point %s lies %.3g outside the nearest disk face", tuple(x), -bary[best].min())
        out[i] = bary[best] @ u[faces[best]]
    return out


def _seam_for(seams: tuple[Seam, ...], xy: np.ndarray) -> np.ndarray:
    gaps = np.stack([np.hypot(*(xy - np.asarray(s.center)).T) for s in seams], axis=1)
    return np.argmin(gaps, axis=1)


def transfer(u: np.ndarray, glued: GluedSurface, K: int | None = None) -> TransferResult:
    """T(u) (cross-cap) or S(u) (handle) for vertex values *u* (V') or (V', d) on the glued mesh."""
    u = np.asarray(u, dtype=float)
    vector = u.ndim == 2
    U = u if vector else u[:, None]
    neck, residual = neck_field(U, glued, K)
    warned = residual > config.TRACE_FIT_WARN
    if warned:
        logger.warning("Neck trace fit residual %.3g exceeds %.3g (K=%d, N=%d)", residual, config.TRACE_FIT_WARN, neck.K, glued.spec.n)

    if glued.kind == "crosscap":
        disks: tuple[DiskField, ...] = (refined_extend_crosscap(neck),)
    else:
        disks = refined_extend_handle(neck, glued.spec.v)

    base = glued.base
    values = np.zeros((base.vertex_count, U.shape[1]))
    kept = glued.base_to_glued >= 0
    values[kept] = U[glued.base_to_glued[kept]]

    removed = np.where(~kept)[0]
    if len(removed):
        patch = glued.seams[0].patch
        base_chart, _ = chart_array(base, patch)
        xy = base_chart[removed]
        if np.isnan(xy).any():
            raise ValueError("removed base vertices lie outside the surgery patch chart")
        owner = _seam_for(glued.seams, xy)
        for index, (seam, disk) in enumerate(zip(glued.seams, disks)):
            mine = owner == index
            r, phi = polar(xy[mine], seam.center)
            inner = r < seam.radius
            ids = removed[mine]
            values[ids[inner]] = disk.evaluate(r[inner] / seam.radius, phi[inner])
            values[ids[~inner]] = _interpolate(glued, U, xy[mine][~inner], patch)

    even, _ = split_even_odd(neck)
    lhs = _energy(assemble_stiffness(base), values)
    rhs = (
        _energy(assemble_stiffness(glued.mesh), U)
        + sum(dirichlet_energy(d.harmonic_part()) for d in disks)
        - dirichlet_energy(even)
    )
    logger.info("Transfer %s: lhs=%.6g rhs=%.6g fit residual %.3g", glued.kind, lhs, rhs, residual)
    return TransferResult(
        values=values if vector else values[:, 0],
        lhs=lhs,
        rhs=rhs,
        fit_residual=residual,
        warned=bool(warned),
        neck=neck,
        disks=disks,
    )
