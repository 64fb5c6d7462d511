"""Smallest eigenpairs of the stiffness / weighted-mass pencil S phi = lambda M phi."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from surgery_spectra import config
from surgery_spectra.errors import EigenspaceError, SolverError
from surgery_spectra.mesh.intrinsic import IntrinsicMesh, area
from surgery_spectra.spectrum.assembly import assemble_mass, assemble_stiffness

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Ascending eigenvalues with mass-orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    first_multiplicity: int
    gap_certified: bool

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def lambda_next(self) -> float:
        """lambda_{k+1}, the first eigenvalue above the first cluster (nan when not computed)."""
        index = 1 + self.first_multiplicity
        return float(self.eigenvalues[index]) if index < len(self.eigenvalues) else float("nan")


def _cluster_size(eigenvalues: np.ndarray, rel_tol: float) -> int:
    lam1 = eigenvalues[1]
    threshold = lam1 * (1.0 + rel_tol) + 1e-10 * abs(eigenvalues[-1])
    return int(np.count_nonzero(eigenvalues[1:] <= threshold))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _rayleigh_ritz(S: sparse.spmatrix, M: sparse.spmatrix, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A = Q.T @ (S @ Q)
    B = Q.T @ (M @ Q)
    theta, Y = linalg.eigh(0.5 * (A + A.T), 0.5 * (B + B.T))
    return theta, Q @ Y


def _dense_solve(S: sparse.spmatrix, m: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense pencil solve; zero-mass vertices are eliminated by a Schur complement."""
    Sd = S.toarray()
    positive = m > 0
    P, Z = np.where(positive)[0], np.where(~positive)[0]
    count = min(count, len(P))
    if len(Z) == 0:
        values, vectors = linalg.eigh(Sd, np.diag(m), subset_by_index=[0, count - 1])
        return values, vectors
    S_zz = Sd[np.ix_(Z, Z)]
    S_zp = Sd[np.ix_(Z, P)]
    coupling = linalg.solve(S_zz, S_zp, assume_a="pos")
    reduced = Sd[np.ix_(P, P)] - S_zp.T @ coupling
    values, sub = linalg.eigh(0.5 * (reduced + reduced.T), np.diag(m[P]), subset_by_index=[0, count - 1])
    vectors = np.zeros((len(m), count))
    vectors[P] = sub
    vectors[Z] = -coupling @ sub
    return values, vectors


def _residuals(S: sparse.spmatrix, M: sparse.spmatrix, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.linalg.norm(S @ vectors - (M @ vectors) * values, axis=0)


def solve_smallest(
    S: sparse.spmatrix,
    M: sparse.spmatrix,
    count: int = config.EIGEN_COUNT,
    tol: float = config.EIGEN_TOL,
    seed: int = config.SEED,
    rel_tol: float = config.MULTIPLICITY_REL_TOL,
) -> SpectrumResult:
    """The *count* smallest eigenpairs of the pencil (S, M).

    M may be singular (density vanishing at vertices); the shift
    sigma = -SHIFT_FACTOR * mean(diag S) keeps S - sigma M definite.
    """
    n = S.shape[0]
    if M.shape != S.shape:
        raise ValueError(f"stiffness {S.shape} and mass {M.shape} differ in size")
    m = np.asarray(M.diagonal(), dtype=float)
    if not (m > 0).any():
        raise ValueError("mass matrix vanishes")
    count = min(count, n - 1)
    if count < 2:
        raise ValueError("need at least two eigenpairs")

    if n <= config.DENSE_SOLVE_LIMIT:
        values, vectors = _dense_solve(S, m, count)
    else:
        sigma = -config.SHIFT_FACTOR * float(np.mean(S.diagonal()))
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            values, vectors = eigsh(
                sparse.csc_matrix(S), k=count, M=sparse.csc_matrix(M), sigma=sigma, which="LM", v0=v0, tol=tol
            )
        except ArpackNoConvergence as exc:
            best = _residuals(S, M, exc.eigenvalues, exc.eigenvectors) if len(exc.eigenvalues) else []
            raise SolverError(f"eigsh did not converge for {count} pairs", residuals=best) from exc
        values, vectors = _rayleigh_ritz(S, M, vectors)

    order = np.argsort(values)
    values, vectors = values[order], _fix_signs(vectors[:, order])
    residuals = _residuals(S, M, values, vectors)
    scale = float(abs(S).sum(axis=1).max()) * np.linalg.norm(vectors, axis=0)
    if np.any(residuals > config.RESIDUAL_CHECK_TOL * np.maximum(scale, 1e-300)):
        raise SolverError("eigenpair residuals above tolerance", residuals=residuals)

    k = _cluster_size(values, rel_tol)
    certified = 1 + k < len(values)
    logger.debug("Spectrum: lambda_1=%.10g, multiplicity %d, max residual %.3g", values[1], k, residuals.max())
    return SpectrumResult(values, vectors, residuals, k, certified)


def solve_mesh(
    mesh: IntrinsicMesh,
    rho: np.ndarray | None = None,
    count: int = config.EIGEN_COUNT,
    seed: int = config.SEED,
    rel_tol: float = config.MULTIPLICITY_REL_TOL,
) -> tuple[sparse.csr_matrix, sparse.dia_matrix, SpectrumResult]:
    """Assemble and solve in one go; returns (S, M, result)."""
    S = assemble_stiffness(mesh)
    M = assemble_mass(mesh, rho)
    return S, M, solve_smallest(S, M, count=count, seed=seed, rel_tol=rel_tol)


def normalized_lambda1(
    mesh: IntrinsicMesh,
    rho: np.ndarray | None = None,
    count: int = config.EIGEN_COUNT,
    seed: int = config.SEED,
) -> float:
    """lambda_1 times area(mesh, rho)."""
    _, _, result = solve_mesh(mesh, rho, count=count, seed=seed)
    return result.lambda1 * area(mesh, rho)


def first_eigenspace(result: SpectrumResult, rel_tol: float = config.MULTIPLICITY_REL_TOL) -> tuple[np.ndarray, int]:
    """Basis (V, k) of the lambda_1 cluster and its size k."""
    k = _cluster_size(result.eigenvalues, rel_tol)
    if 1 + k >= len(result.eigenvalues):
        raise EigenspaceError(
            f"all {len(result.eigenvalues) - 1} nonzero-index eigenvalues cluster with lambda_1; request a larger count"
        )
    return result.eigenvectors[:, 1 : 1 + k], k


def quadratic_form_Q(
    S: sparse.spmatrix, M: sparse.spmatrix, lambda1: float, u: np.ndarray, v: np.ndarray
) -> float:
    """Q(u, v) = u^T S v - lambda_1 u^T M v, summed over components for vector-valued input."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(np.sum(u * (S @ v)) - lambda1 * np.sum(u * (M @ v)))


def project_first_eigenspace(
    result: SpectrumResult, M: sparse.spmatrix, u: np.ndarray, rel_tol: float = config.MULTIPLICITY_REL_TOL
) -> np.ndarray:
    """Mass-orthogonal projection of u (V,) or U (V, d) onto the first eigenspace."""
    basis, _ = first_eigenspace(result, rel_tol)
    u = np.asarray(u, dtype=float)
    return basis @ (basis.T @ (M @ u))


@dataclass(frozen=True)
class GapCheck:
    """Both sides of Q(w, w) >= (1 - lambda_1 / lambda_{k+1}) |dw|^2 for w = u - Phi."""

    q_value: float
    bound: float
    slack: float


def projection_gap(
    S: sparse.spmatrix,
    M: sparse.spmatrix,
    result: SpectrumResult,
    u: np.ndarray,
    rel_tol: float = config.MULTIPLICITY_REL_TOL,
) -> GapCheck:
    """Evaluate the eigenspace projection gap for *u* after removing its mean."""
    u = np.asarray(u, dtype=float)
    kernel = result.eigenvectors[:, :1]
    u = u - kernel @ (kernel.T @ (M @ u))
    w = u - project_first_eigenspace(result, M, u, rel_tol)
    q_value = quadratic_form_Q(S, M, result.lambda1, w, w)
    bound = (1.0 - result.lambda1 / result.lambda_next) * float(np.sum(w * (S @ w)))
    return GapCheck(q_value=q_value, bound=bound, slack=q_value - bound)
