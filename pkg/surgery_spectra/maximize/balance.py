"""Balancing sphere-valued maps by conformal dilations of the target sphere.

For |a| < 1 the dilation toward a is

    G_a(x) = ((1 - |a|^2) x + 2 (1 + <a, x>) a) / (1 + 2 <a, x> + |a|^2),

a conformal diffeomorphism of S^n with G_0 = id. Balancing seeks a with
sum_x mu_x G_a(Phi(x)) = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from surgery_spectra import config
from surgery_spectra.mesh.intrinsic import IntrinsicMesh
from surgery_spectra.spectrum.assembly import assemble_stiffness

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BalanceResult:
    a: np.ndarray
    samples: np.ndarray  # G_a o Phi, (V, n + 1)
    residual: float  # max-coordinate of the mu-average of G_a o Phi
    iterations: int
    converged: bool
    degenerate: bool
    energy_before: float | None = None
    energy_after: float | None = None

    @property
    def energy_increased(self) -> bool:
        if self.energy_before is None or self.energy_after is None:
            return False
        return self.energy_after > self.energy_before * (1.0 + 1e-9)


def dilation(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """G_a applied to the rows of *x*."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    s = float(a @ a)
    t = x @ a
    return ((1.0 - s) * x + (2.0 * (1.0 + t))[:, None] * a) / (1.0 + 2.0 * t + s)[:, None]


def _average(a: np.ndarray, phi: np.ndarray, mu: np.ndarray) -> np.ndarray:
    return mu @ dilation(a, phi)


def mobius_balance(
    phi: np.ndarray,
    mu: np.ndarray,
    tol: float = config.BALANCE_TOL,
    mesh: IntrinsicMesh | None = None,
    max_iter: int = config.BALANCE_MAX_ITER,
) -> BalanceResult:
    """Find a with |a| < 1 balancing G_a o Phi against the vertex measure *mu*.

    Damped fixed-point iteration a <- a - tau * average(a), halving tau
    whenever the residual grows, finished with a hybrid Powell solve once
    the residual is small. With *mesh* the Dirichlet energies of Phi and
    G_a o Phi are reported.
    """
    phi = np.asarray(phi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if (mu < 0).any() or not mu.sum() > 0:
        raise ValueError("balancing measure must be nonnegative and nonzero")
    norms = np.linalg.norm(phi, axis=1)
    if np.abs(1.0 - norms).max() > config.BALANCE_UNIT_TOL:
        raise ValueError(f"map is {np.abs(1.0 - norms).max():.3g} away from the unit sphere")
    phi = phi / norms[:, None]
    mu = mu / mu.sum()
    moment = (phi * mu[:, None]).T @ phi
    degenerate = bool(np.linalg.eigvalsh(moment)[0] < 1e-12)
    if degenerate:
        logger.warning("Map image lies in a great sphere; balancing may not exist")

    a = np.zeros(phi.shape[1])
    avg = _average(a, phi, mu)
    residual = float(np.abs(avg).max())
    tau, iterations = 1.0, 0
    while residual >= tol and iterations < max_iter:
        iterations += 1
        candidate = a - tau * avg
        inside = np.linalg.norm(candidate) < 1.0
        cand_avg = _average(candidate, phi, mu) if inside else avg
        cand_res = float(np.abs(cand_avg).max())
        if inside and cand_res < residual:
            a, avg, residual = candidate, cand_avg, cand_res
            tau = min(1.0, 1.5 * tau)
        else:
            tau *= 0.5
            if tau < 1e-12:
                break
        if 0 < residual < 1e-4:
            solved = optimize.root(lambda b: _average(b, phi, mu), a, method="hybr", tol=tol * 1e-2)
            polished = float(np.abs(_average(solved.x, phi, mu)).max())
            if np.linalg.norm(solved.x) < 1.0 and polished < residual:
                a, avg, residual = solved.x, _average(solved.x, phi, mu), polished
    converged = residual < tol
    if not converged:
        logger.warning("Balancing stopped after %d iterations with residual %.3g", iterations, residual)
    samples = dilation(a, phi)

    energy_before = energy_after = None
    if mesh is not None:
        S = assemble_stiffness(mesh)
        energy_before = float(np.sum(phi * (S @ phi)))
        energy_after = float(np.sum(samples * (S @ samples)))
        if energy_after > energy_before * (1.0 + 1e-9):
            logger.warning("Balancing raised the energy from %.6g to %.6g", energy_before, energy_after)
    logger.debug("Balanced in %d iterations: |a|=%.4g residual %.3g", iterations, np.linalg.norm(a), residual)
    return BalanceResult(a, samples, residual, iterations, converged, degenerate, energy_before, energy_after)
