"""Maximization of lambda_1 times area over densities in a fixed conformal class.

The density rho lives on vertices and is kept at unit area, a . rho = 1 with
a the vertex areas. With a first eigenspace of dimension k, the superdifferential
of lambda_1 is the set of lambda_1 (1 - B w_C / a), w_C = sum C_ij phi_i phi_j,
over trace-one PSD matrices C, where M_rho = diag(B rho). Each step moves along
the minimum-norm element of that set projected onto the unit-area tangent space.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse

from surgery_spectra import config
from surgery_spectra.errors import EigenspaceError
from surgery_spectra.maximize.eigenmap import extract_eigenmap, vertex_gradient_density
from surgery_spectra.mesh.intrinsic import IntrinsicMesh, check_density
from surgery_spectra.spectrum.assembly import assemble_mass, assemble_stiffness
from surgery_spectra.spectrum.solver import SpectrumResult, first_eigenspace, solve_smallest

logger = logging.getLogger(__name__)

MODES = ("supergradient", "fixed_point")


@dataclass(frozen=True)
class AscentOptions:
    max_iter: int = config.ASCENT_MAX_ITER
    tol: float = config.ASCENT_TOL
    step: float = config.ASCENT_STEP
    mode: str = "supergradient"
    count: int = config.EIGEN_COUNT
    cluster_tol: float = config.ASCENT_CLUSTER_TOL
    seed: int = config.SEED

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown ascent mode {self.mode!r}; expected one of {MODES}")
        if self.max_iter < 0 or not self.tol > 0 or not 0 < self.step <= 1:
            raise ValueError("ascent options out of range")


@dataclass(frozen=True)
class AscentStep:
    iteration: int
    value: float
    step: float
    multiplicity: int
    direction_norm: float
    density_hash: str


@dataclass
class AscentTrace:
    """Accepted iterates of one ascent, in order."""

    steps: list[AscentStep] = field(default_factory=list)
    converged: bool = False
    partial: bool = False
    reason: str = ""

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.steps])

    @property
    def final_value(self) -> float:
        return self.steps[-1].value

    def is_monotone(self, tol: float = config.MONOTONE_TOL) -> bool:
        v = self.values
        return bool(np.all(np.diff(v) >= -tol * np.maximum(1.0, np.abs(v[:-1]))))


def density_hash(rho: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(rho, dtype=np.float64).tobytes()).hexdigest()[:16]


def mass_operator(mesh: IntrinsicMesh) -> sparse.csr_matrix:
    """B with assemble_mass(mesh, rho) = diag(B rho)."""
    f = mesh.faces
    rows = np.repeat(f, 3, axis=1).ravel()
    cols = np.tile(f, (1, 3)).ravel()
    vals = np.repeat(mesh.face_areas / 9.0, 9)
    return sparse.coo_matrix((vals, (rows, cols)), shape=(mesh.vertex_count,) * 2).tocsr()


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    index = np.arange(1, len(v) + 1)
    r = index[u - css / index > 0][-1]
    return np.maximum(v - css[r - 1] / r, 0.0)


def project_spectraplex(C: np.ndarray) -> np.ndarray:
    """Nearest trace-one PSD matrix in the Frobenius norm."""
    w, Q = linalg.eigh(0.5 * (C + C.T))
    return (Q * _project_simplex(w)) @ Q.T


def min_norm_direction(
    basis: np.ndarray, B: sparse.spmatrix, a: np.ndarray, lambda1: float, iterations: int = config.QP_ITERATIONS
) -> tuple[np.ndarray, np.ndarray, float]:
    """Minimum a-norm element of the projected superdifferential.

    Returns (direction on vertices, optimal C, a-norm of the direction).
    """
    k = basis.shape[1]
    pairs = np.einsum("xi,xj->xij", basis, basis).reshape(len(a), k * k)
    h = np.asarray(B @ pairs) / a[:, None]
    h -= (a @ h) / a.sum()
    G = h.T @ (h * a[:, None])
    lipschitz = 2.0 * max(float(linalg.eigvalsh(G)[-1]), 1e-300)
    C = np.eye(k) / k
    for _ in range(iterations):
        grad = (2.0 * G @ C.ravel()).reshape(k, k)
        C = project_spectraplex(C - grad / lipschitz)
    direction = -lambda1 * (h @ C.ravel())
    norm = float(np.sqrt(np.sum(a * direction**2)))
    return direction, C, norm


def _solve(S: sparse.spmatrix, mesh: IntrinsicMesh, rho: np.ndarray, opts: AscentOptions) -> SpectrumResult:
    count = min(opts.count, mesh.vertex_count - 1)
    while True:
        result = solve_smallest(S, assemble_mass(mesh, rho), count=count, seed=opts.seed, rel_tol=opts.cluster_tol)
        try:
            first_eigenspace(result, opts.cluster_tol)
            return result
        except EigenspaceError:
            if count >= mesh.vertex_count - 1:
                raise
            count = min(2 * count, mesh.vertex_count - 1)
            logger.debug("Cluster fills the requested spectrum, retrying with %d pairs", count)


def _normalize(rho: np.ndarray, a: np.ndarray) -> np.ndarray:
    total = float(a @ rho)
    if not total > 0:
        raise ValueError("density has zero total mass")
    return rho / total


def maximize_conformal(
    mesh: IntrinsicMesh, rho0: np.ndarray | None = None, opts: AscentOptions | None = None
) -> tuple[np.ndarray, AscentTrace]:
    """Ascend lambda_1-bar over densities on *mesh* starting from *rho0*; returns (rho*, trace)."""
    opts = opts or AscentOptions()
    opts.validate()
    a = mesh.vertex_areas
    rho = np.ones(mesh.vertex_count) if rho0 is None else check_density(mesh, rho0)
    rho = _normalize(rho, a)
    S = assemble_stiffness(mesh)
    B = mass_operator(mesh)
    trace = AscentTrace()

    result = _solve(S, mesh, rho, opts)
    value = result.lambda1
    scale = 1.0
    for iteration in range(opts.max_iter + 1):
        basis, k = first_eigenspace(result, opts.cluster_tol)
        direction, _, norm = min_norm_direction(basis, B, a, result.lambda1)
        trace.steps.append(AscentStep(iteration, value, scale, k, norm / value, density_hash(rho)))
        logger.debug("Ascent %d: value=%.10g k=%d direction=%.3g", iteration, value, k, norm / value)
        if norm / value < opts.tol:
            trace.converged, trace.reason = True, "stationary"
            break
        if iteration == opts.max_iter:
            trace.partial, trace.reason = True, "iteration cap"
            break

        # a simple lambda_1 has no eigenmap, so fixed_point takes the supergradient step there
        if opts.mode == "fixed_point" and k >= 2:
            phi = extract_eigenmap(basis, assemble_mass(mesh, rho)).components
            target = _normalize(np.maximum(vertex_gradient_density(mesh, phi), 0.0), a)
            move = target - rho
        else:
            move = direction * (opts.step * float(rho.mean()) / float(np.abs(direction).max()))

        while True:
            candidate = _normalize(np.maximum(rho + scale * move, 0.0), a)
            trial = _solve(S, mesh, candidate, opts)
            if trial.lambda1 >= value - config.MONOTONE_TOL * value:
                break
            scale *= 0.5
            if scale < config.BACKTRACK_MIN_STEP:
                break
        if scale < config.BACKTRACK_MIN_STEP:
            trace.converged, trace.reason = True, "step underflow"
            break
        gain = (trial.lambda1 - value) / value
        rho, result, value = candidate, trial, trial.lambda1
        scale = min(1.0, 2.0 * scale)
        if 0 <= gain < opts.tol:
            trace.steps.append(AscentStep(iteration + 1, value, scale, result.first_multiplicity, float("nan"), density_hash(rho)))
            trace.converged, trace.reason = True, "relative improvement below tolerance"
            break

    if trace.partial:
        logger.warning("Ascent stopped at the iteration cap with value %.10g", value)
    logger.info("Ascent on %s: %.10g -> %.10g in %d steps (%s)", mesh.name, trace.steps[0].value, value, len(trace.steps) - 1, trace.reason)
    return rho, trace
