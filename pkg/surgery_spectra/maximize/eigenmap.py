"""Sphere-valued maps by first eigenfunctions and discrete gradient probes."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse

from surgery_spectra import config
from surgery_spectra.errors import EigenspaceError, MeshError
from surgery_spectra.mesh.intrinsic import IntrinsicMesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EigenMap:
    """Phi = basis @ coefficients, fitted so that |Phi| is as close to 1 as the eigenspace allows.

    ``gram`` is the PSD matrix A with |Phi(x)|^2 = phi(x)^T A phi(x).
    """

    components: np.ndarray  # (V, n + 1)
    gram: np.ndarray  # (k, k)
    coefficients: np.ndarray  # (k, n + 1)
    unit_defect: float
    fit_residual: float

    @property
    def rank(self) -> int:
        return int(self.components.shape[1])


def _psd_projection(A: np.ndarray) -> np.ndarray:
    w, Q = linalg.eigh(0.5 * (A + A.T))
    return (Q * np.maximum(w, 0.0)) @ Q.T


def extract_eigenmap(basis: np.ndarray, mass: sparse.spmatrix | np.ndarray) -> EigenMap:
    """Fit PSD A minimizing sum_x w_x (phi(x)^T A phi(x) - 1)^2 and return Phi = A^{1/2} phi.

    Starts from the unconstrained weighted least-squares solution and runs
    projected gradient on the PSD cone when that solution is indefinite.
    The target dimension n + 1 is the numerical rank of A.
    """
    phi = np.asarray(basis, dtype=float)
    if phi.ndim != 2 or phi.shape[1] < 2:
        raise EigenspaceError("an eigenmap needs a first eigenspace of dimension at least 2")
    w = np.asarray(mass.diagonal() if sparse.issparse(mass) else mass, dtype=float)
    if w.ndim == 2:
        w = np.diag(w)
    k = phi.shape[1]
    rows, cols = np.triu_indices(k)
    design = phi[:, rows] * phi[:, cols] * np.where(rows == cols, 1.0, 2.0)
    root = np.sqrt(np.maximum(w, 0.0))
    coef, *_ = np.linalg.lstsq(design * root[:, None], root, rcond=None)
    A = np.zeros((k, k))
    A[rows, cols] = coef
    A = A + np.triu(A, 1).T

    if linalg.eigvalsh(A)[0] < 0:
        step = 0.5 / max(float(np.sum(w * np.sum(phi**2, axis=1) ** 2)), 1e-300)
        A = _psd_projection(A)
        for _ in range(config.GRAM_ITERATIONS):
            r = np.einsum("xi,ij,xj->x", phi, A, phi) - 1.0
            grad = 2.0 * (phi * (w * r)[:, None]).T @ phi
            A = _psd_projection(A - step * grad)

    values, Q = linalg.eigh(A)
    keep = values > config.GRAM_RANK_TOL * max(values.max(), 0.0)
    if not keep.any() or values.max() <= 0:
        raise EigenspaceError("Gram fit collapsed to zero")
    coefficients = Q[:, keep][:, ::-1] * np.sqrt(values[keep][::-1])
    components = phi @ coefficients
    norms = np.sum(components**2, axis=1)
    residual = float(np.sqrt(np.sum(w * (norms - 1.0) ** 2) / max(w.sum(), 1e-300)))
    defect = float(np.abs(1.0 - norms).max())
    logger.debug("Eigenmap: k=%d rank=%d unit defect %.3g", k, int(keep.sum()), defect)
    return EigenMap(components, A, coefficients, defect, residual)


def face_gradient_energy(mesh: IntrinsicMesh, U: np.ndarray) -> np.ndarray:
    """|dU|^2 on each face for P1 vertex data U (V,) or (V, d), summed over components.

    Uses int_f |grad u|^2 = 1/2 sum_sides cot(opposite angle) (u_i - u_j)^2.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    ends = mesh.side_vertices
    diff = U[ends[..., 0]] - U[ends[..., 1]]  # (F, 3, d)
    energy = 0.5 * np.einsum("fs,fsd->f", mesh.corner_cotangents, diff**2)
    return energy / mesh.face_areas


def vertex_gradient_density(mesh: IntrinsicMesh, U: np.ndarray) -> np.ndarray:
    """Area-weighted average of face |dU|^2 over the faces around each vertex."""
    weighted = face_gradient_energy(mesh, U) * mesh.face_areas
    total = np.bincount(mesh.faces.ravel(), weights=np.repeat(weighted, 3), minlength=mesh.vertex_count)
    return total / (3.0 * mesh.vertex_areas)


def gradient_at_point(mesh: IntrinsicMesh, U: np.ndarray, p: int) -> float:
    """|dU(p)|^2 as the area-weighted one-ring average; *p* must be an interior vertex."""
    if not 0 <= p < mesh.vertex_count:
        raise MeshError(f"vertex {p} out of range")
    if mesh.boundary_vertices[p]:
        raise MeshError(f"vertex {p} lies on the boundary")
    ring = np.where((mesh.faces == p).any(axis=1))[0]
    if not len(ring):
        raise MeshError(f"vertex {p} has no faces")
    energy = face_gradient_energy(mesh, U)[ring]
    areas = mesh.face_areas[ring]
    return float(np.dot(energy, areas) / areas.sum())


def extremal_residual(mesh: IntrinsicMesh, rho: np.ndarray | None, Phi: np.ndarray, lambda1: float) -> float:
    """max_f |lambda_1 rho_f - |dPhi|^2_f| / (lambda_1 max rho)."""
    rho = np.ones(mesh.vertex_count) if rho is None else np.asarray(rho, dtype=float)
    face_rho = rho[mesh.faces].mean(axis=1)
    gap = np.abs(lambda1 * face_rho - face_gradient_energy(mesh, Phi))
    return float(gap.max() / (lambda1 * rho.max()))
