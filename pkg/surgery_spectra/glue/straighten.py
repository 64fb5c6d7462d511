"""Conformal straightening of the disk-side collars of a glued surface.

Around each seam of radius eps the flat metric dr^2 + r^2 dtheta^2 is
multiplied by f = chi psi + (1 - chi), psi = eps^2 / r^2, where chi falls from
1 on the seam to 0 at r = eps e^c. Where chi = 1 the collar is isometric to the
product cylinder, so the metric matches the band smoothly across the seam.
The original metric is rho times the straightened one with rho = 1 / f.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from surgery_spectra import config
from surgery_spectra.errors import GluingError
from surgery_spectra.glue.surgery import GluedSurface
from surgery_spectra.mesh.intrinsic import IntrinsicMesh
from surgery_spectra.utils.math_utils import smoothstep

logger = logging.getLogger(__name__)


def collar_factor(r: np.ndarray, eps: float, width: float = config.COLLAR_LOG_WIDTH) -> np.ndarray:
    """Conformal factor f(r) applied to the flat metric at chart distance *r* from a seam centre."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        s = np.log(np.maximum(r, eps) / eps) / width
    chi = 1.0 - smoothstep(s)
    psi = eps**2 / np.maximum(r, eps) ** 2
    return chi * psi + (1.0 - chi)


def straighten(glued: GluedSurface, width: float = config.COLLAR_LOG_WIDTH) -> tuple[IntrinsicMesh, np.ndarray]:
    """Smooth-metric mesh and density rho with (original metric) = rho * (straightened metric).

    Edge lengths scale by (f_i f_j)^(1/4); rho = 1 / f per vertex, 1 away from collars.
    """
    mesh = glued.mesh
    factor = np.ones(mesh.vertex_count)
    for seam in glued.seams:
        patch = mesh.flat_patches[seam.patch]
        outer = seam.radius * math.exp(width)
        if math.hypot(*seam.center) + outer > patch.radius:
            raise GluingError(f"collar of outer radius {outer:.4g} does not fit in flat patch {seam.patch}")
        ids = np.asarray(patch.vertices)
        r = np.hypot(*(patch.coords - np.asarray(seam.center)).T)
        collar = (r >= seam.radius * (1.0 - 1e-12)) & (r < outer)
        factor[ids[collar]] *= collar_factor(r[collar], seam.radius, width)

    ends = mesh.edges
    lengths = mesh.lengths * (factor[ends[:, 0]] * factor[ends[:, 1]]) ** 0.25
    changed = factor != 1.0
    patches = tuple(
        p.relabel(np.where(changed, -1, np.arange(mesh.vertex_count))) if changed.any() else p for p in mesh.flat_patches
    )
    logger.info(
        "Straightened %d collar vertices, factor range [%.4g, %.4g]", int(changed.sum()), factor.min(), factor.max()
    )
    straight = IntrinsicMesh(
        vertex_count=mesh.vertex_count,
        faces=mesh.faces,
        edges=mesh.edges,
        lengths=lengths,
        boundary_loops=mesh.boundary_loops,
        flat_patches=patches,
        orientable=mesh.orientable,
        name=f"{mesh.name}+straight",
    )
    return straight, 1.0 / factor
