"""Experiment drivers: conformal gaps after surgery and small-eps scaling of eigenmaps."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from surgery_spectra.extend.transfer import transfer
from surgery_spectra.glue.straighten import straighten
from surgery_spectra.glue.surgery import GluedSurface, GluingSpec, glue, refilled_base
from surgery_spectra.maximize.ascent import AscentOptions, maximize_conformal
from surgery_spectra.maximize.eigenmap import extract_eigenmap, gradient_at_point
from surgery_spectra.mesh.intrinsic import IntrinsicMesh, area
from surgery_spectra.spectrum.solver import first_eigenspace, project_first_eigenspace, solve_mesh
from surgery_spectra.utils.math_utils import PowerFit, fit_power_law

logger = logging.getLogger(__name__)


def carry_density(rho: np.ndarray, mapping: np.ndarray, vertex_count: int, fill: float) -> np.ndarray:
    """Density on a surgered mesh: copied along *mapping*, *fill* on vertices with no preimage."""
    out = np.full(vertex_count, float(fill))
    kept = mapping >= 0
    out[mapping[kept]] = np.asarray(rho, dtype=float)[kept]
    return out


def glued_start(glued: GluedSurface, rho_base: np.ndarray) -> tuple[IntrinsicMesh, np.ndarray]:
    """Straightened glued mesh and the density reproducing the glued metric times the base density."""
    straight, collar = straighten(glued)
    carried = carry_density(rho_base, glued.base_to_glued, glued.mesh.vertex_count, rho_base[glued.spec.p])
    return straight, carried * collar


def _lambda_bar(mesh: IntrinsicMesh, rho: np.ndarray) -> float:
    _, _, result = solve_mesh(mesh, rho)
    return result.lambda1 * area(mesh, rho)


@dataclass(frozen=True)
class GapRow:
    kind: str
    eps: float
    L: float
    n: int
    base_value: float
    glued_initial: float
    glued_value: float
    gap: float
    iterations: int
    multiplicity: int
    converged: bool


@dataclass(frozen=True)
class GapReport:
    rows: tuple[GapRow, ...]
    density_at_p: float

    @property
    def best(self) -> GapRow:
        return max(self.rows, key=lambda row: row.gap)

    @property
    def max_gap(self) -> float:
        return self.best.gap

    @property
    def positive(self) -> bool:
        return self.max_gap > 0

    def to_dict(self) -> dict:
        return {
            "density_at_p": self.density_at_p,
            "max_gap": self.max_gap,
            "best": {"eps": self.best.eps, "L": self.best.L},
            "rows": [asdict(row) for row in self.rows],
        }


def _gap_point(base: IntrinsicMesh, rho_base: np.ndarray, spec: GluingSpec, opts: AscentOptions) -> GapRow:
    refilled, mapping = refilled_base(base, spec)
    base_value = _lambda_bar(refilled, carry_density(rho_base, mapping, refilled.vertex_count, rho_base[spec.p]))
    straight, rho0 = glued_start(glue(base, spec), rho_base)
    _, trace = maximize_conformal(straight, rho0, opts)
    last = trace.steps[-1]
    row = GapRow(
        kind=spec.kind,
        eps=spec.eps,
        L=spec.L,
        n=spec.n,
        base_value=base_value,
        glued_initial=trace.steps[0].value,
        glued_value=trace.final_value,
        gap=trace.final_value - base_value,
        iterations=len(trace.steps) - 1,
        multiplicity=last.multiplicity,
        converged=trace.converged,
    )
    logger.info("Gap %s eps=%g L=%g: %.8g - %.8g = %.4g", spec.kind, spec.eps, spec.L, row.glued_value, base_value, row.gap)
    return row


def gap_experiment(
    base: IntrinsicMesh,
    rho_base: np.ndarray | None,
    specs: Sequence[GluingSpec],
    opts: AscentOptions | None = None,
    threads: int = 1,
) -> GapReport:
    """Maximized lambda_1-bar of each glued surface minus lambda_1-bar of the refilled base.

    Grid points run in parallel on *threads* workers; rows keep grid order.
    """
    if not specs:
        raise ValueError("gap experiment needs at least one gluing spec")
    rho_base = np.ones(base.vertex_count) if rho_base is None else np.asarray(rho_base, dtype=float)
    opts = opts or AscentOptions()
    density_at_p = float(rho_base[specs[0].p])
    if density_at_p == 0:
        logger.warning("Base density vanishes at the surgery point; no gap is expected")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = tuple(pool.map(lambda spec: _gap_point(base, rho_base, spec, opts), specs))
    return GapReport(rows, density_at_p)


@dataclass(frozen=True)
class ScalingRow:
    eps: float
    lambda_bar: float
    unit_defect: float  # mean of (1 - |Phi_eps|)^2 over the base mass
    gradient_at_p: float  # |d Phi_eps(p)|^2
    rank: int
    fit_residual: float


@dataclass(frozen=True)
class ScalingReport:
    kind: str
    rows: tuple[ScalingRow, ...]
    unit_fit: PowerFit
    gradient_fit: PowerFit

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rows": [asdict(row) for row in self.rows],
            "unit_fit": asdict(self.unit_fit),
            "gradient_fit": asdict(self.gradient_fit),
        }


def unit_defect(phi: np.ndarray, mass: np.ndarray) -> float:
    """Mass-weighted mean of (1 - |phi|)^2; unchanged when the mass is rescaled."""
    mass = np.asarray(mass, dtype=float)
    return float(np.sum(mass * (1.0 - np.linalg.norm(phi, axis=1)) ** 2) / mass.sum())


def scaling_study(
    base: IntrinsicMesh,
    rho_base: np.ndarray | None,
    specs: Sequence[GluingSpec],
    opts: AscentOptions | None = None,
    K: int | None = None,
    threads: int = 1,
) -> ScalingReport:
    """For each eps: maximize on the glued surface, carry its eigenmap to the base and measure it.

    The eps values should form a geometric grid of at least four points.
    """
    if len(specs) < 4:
        raise ValueError("scaling study needs at least four eps values")
    kinds = {spec.kind for spec in specs}
    if len(kinds) != 1:
        raise ValueError("scaling study mixes surgery kinds")
    rho_base = np.ones(base.vertex_count) if rho_base is None else np.asarray(rho_base, dtype=float)
    opts = opts or AscentOptions()
    _, M_base, base_result = solve_mesh(base, rho_base)

    def measure(spec: GluingSpec) -> ScalingRow:
        glued = glue(base, spec)
        straight, rho0 = glued_start(glued, rho_base)
        rho, trace = maximize_conformal(straight, rho0, opts)
        _, M, result = solve_mesh(straight, rho)
        basis, _ = first_eigenspace(result, opts.cluster_tol)
        eigenmap = extract_eigenmap(basis, M)
        carried = transfer(eigenmap.components, glued, K)
        phi = project_first_eigenspace(base_result, M_base, carried.values)
        return ScalingRow(
            eps=spec.eps,
            lambda_bar=trace.final_value,
            unit_defect=unit_defect(phi, M_base.diagonal()),
            gradient_at_p=gradient_at_point(base, phi, spec.p),
            rank=eigenmap.rank,
            fit_residual=carried.fit_residual,
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = tuple(pool.map(measure, specs))
    eps = np.array([row.eps for row in rows])
    unit_fit = fit_power_law(eps, np.array([row.unit_defect for row in rows]))
    gradient_fit = fit_power_law(eps, np.array([row.gradient_at_p for row in rows]))
    for name, fit in (("unit defect", unit_fit), ("gradient", gradient_fit)):
        if fit.defined:
            logger.info("Scaling of %s: slope %.3f [%.3f, %.3f]", name, fit.slope, fit.ci_low, fit.ci_high)
        else:
            logger.warning("Scaling of %s undefined: %s", name, fit.reason)
    return ScalingReport(kinds.pop(), rows, unit_fit, gradient_fit)
