"""Cotangent stiffness and lumped, density-weighted mass matrices."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from scipy import sparse

from surgery_spectra import config
from surgery_spectra.errors import MeshError
from surgery_spectra.mesh.intrinsic import IntrinsicMesh, check_density

logger = logging.getLogger(__name__)


def _check_angles(mesh: IntrinsicMesh) -> None:
    angles = mesh.corner_angles
    tol = config.DEGENERATE_ANGLE_TOL
    bad = np.where(~np.isfinite(angles).all(axis=1) | (angles < tol).any(axis=1) | (angles > np.pi - tol).any(axis=1))[0]
    if len(bad):
        raise MeshError(f"{len(bad)} numerically degenerate triangles, first is face {bad[0]}")


def assemble_stiffness(mesh: IntrinsicMesh) -> sparse.csr_matrix:
    """Symmetric PSD matrix with off-diagonal -w_ij, w_ij = (cot a_ij + cot b_ij) / 2.

    Boundary edges pick up the single adjacent cotangent.
    """
    _check_angles(mesh)
    half_cot = 0.5 * mesh.corner_cotangents
    ends = mesh.side_vertices  # side s is opposite corner s
    i = ends[..., 0].ravel()
    j = ends[..., 1].ravel()
    w = half_cot.ravel()
    V = mesh.vertex_count
    off = sparse.coo_matrix((np.concatenate([-w, -w]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(V, V))
    off = off.tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    S = (off + sparse.diags(diag)).tocsr()
    S.sum_duplicates()
    return S


def assemble_mass(mesh: IntrinsicMesh, rho: np.ndarray | None = None) -> sparse.dia_matrix:
    """Lumped mass m_i = sum over faces at i of area/3 times the face-averaged density."""
    if rho is None:
        face_weight = mesh.face_areas / 3.0
    else:
        rho = check_density(mesh, rho)
        if not rho.any():
            raise ValueError("density vanishes everywhere")
        face_weight = mesh.face_areas * rho[mesh.faces].mean(axis=1) / 3.0
    m = np.bincount(mesh.faces.ravel(), weights=np.repeat(face_weight, 3), minlength=mesh.vertex_count)
    return sparse.diags(m)


def export_coo(matrix: sparse.spmatrix, path: str | Path) -> Path:
    """Write the nonzeros of *matrix* as ``i j value`` lines, row-major."""
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            handle.write(f"{r} {c} {v:.17g}\n")
    logger.debug("Exported %d nonzeros to %s", coo.nnz, path)
    return path
