"""Command-line driver for the surgery experiments."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from surgery_spectra import config
from surgery_spectra.errors import ConfigError, EigenspaceError, SurgerySpectraError
from surgery_spectra.extend.fields import random_band_limited
from surgery_spectra.extend.operators import energy_drop, verification_rows
from surgery_spectra.glue.straighten import straighten
from surgery_spectra.glue.surgery import GluedSurface, GluingSpec, glue
from surgery_spectra.maximize.ascent import MODES, AscentOptions, maximize_conformal
from surgery_spectra.maximize.eigenmap import extract_eigenmap, extremal_residual
from surgery_spectra.maximize.experiments import carry_density, gap_experiment, scaling_study
from surgery_spectra.mesh.files import list_mesh_files, load, save
from surgery_spectra.mesh.intrinsic import IntrinsicMesh, area, euler_char, validate
from surgery_spectra.mesh.primitives import PRIMITIVES, build_primitive, round_cap_density
from surgery_spectra.reports.summary import format_table, report_summary
from surgery_spectra.reports.writers import config_hash, write_csv, write_json, write_meta
from surgery_spectra.spectrum.assembly import export_coo
from surgery_spectra.spectrum.solver import first_eigenspace, solve_mesh
from surgery_spectra.utils.math_utils import clamp

logger = logging.getLogger(__name__)

COMMANDS = ("spectrum", "glue", "verify-extend", "maximize", "gap", "scaling", "summary")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


def _int(low: int | None = None) -> Callable[[str], int]:
    def parse(text: str) -> int:
        value = int(text)
        if low is not None and value < low:
            raise ValueError(f"must be >= {low}")
        return value

    return parse


def _float(positive: bool = False) -> Callable[[str], float]:
    def parse(text: str) -> float:
        value = float(text)
        if not math.isfinite(value) or (positive and value <= 0):
            raise ValueError("must be a positive number" if positive else "must be finite")
        return value

    return parse


def _floats(positive: bool = True) -> Callable[[str], tuple[float, ...]]:
    item = _float(positive)

    def parse(text: str) -> tuple[float, ...]:
        values = tuple(item(part.strip()) for part in text.split(",") if part.strip())
        if not values:
            raise ValueError("empty list")
        return values

    return parse


def _or_none(item: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str) -> Any:
        return None if text.lower() == "none" else item(text)

    return parse


def _choice(options: Sequence[str]) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _even_n(text: str) -> int:
    value = int(text)
    if value % 2 or value < config.MIN_MOEBIUS_RESOLUTION:
        raise ValueError(f"must be even and >= {config.MIN_MOEBIUS_RESOLUTION}")
    return value


KEYS: dict[str, Callable[[str], Any]] = {
    "mesh": _choice(tuple(PRIMITIVES) + ("file",)),
    "mesh_file": str,
    "subdiv": _int(0),
    "flat_cap": _or_none(_float(positive=True)),
    "resolution": _int(2),
    "lattice_b": _floats(positive=False),
    "length": _float(positive=True),
    "circle": _int(3),
    "density": _choice(("uniform", "round_cap")),
    "count": _int(2),
    "rel_tol": _float(positive=True),
    "matrices": _choice(("no", "yes")),
    "kind": _choice(("crosscap", "handle")),
    "p": _int(0),
    "eps": _floats(),
    "L": _floats(),
    "n": _even_n,
    "v": _float(),
    "K": _int(1),
    "fields": _int(0),
    "max_iter": _int(0),
    "ascent_tol": _float(positive=True),
    "mode": _choice(MODES),
    "seed": _int(0),
}

REQUIRED: dict[str, tuple[str, ...]] = {
    "glue": ("kind", "eps", "L", "n"),
    "verify-extend": ("K", "L"),
    "gap": ("kind", "eps", "L", "n"),
    "scaling": ("kind", "eps", "L", "n"),
}

DEFAULTS: dict[str, Any] = {
    "mesh": "icosphere",
    "subdiv": 3,
    "flat_cap": config.DELTA0,
    "resolution": 32,
    "length": 2.0,
    "circle": 16,
    "density": "uniform",
    "count": config.EIGEN_COUNT,
    "rel_tol": config.MULTIPLICITY_REL_TOL,
    "matrices": "no",
    "p": 0,
    "v": 0.0,
    "K": 16,
    "fields": 100,
    "max_iter": config.ASCENT_MAX_ITER,
    "ascent_tol": config.ASCENT_TOL,
    "mode": "supergradient",
    "seed": config.SEED,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated key=value settings for one command; ``text`` is the canonical form."""

    command: str
    raw: tuple[tuple[str, str], ...] = ()
    values: dict[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def parse(cls, text: str, command: str, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        raw: dict[str, str] = {}
        values: dict[str, Any] = {}
        entries = [(lineno, line) for lineno, line in enumerate(text.splitlines(), start=1)]
        entries += [(None, f"{k}={v}") for k, v in (overrides or {}).items()]
        for lineno, line in entries:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected key=value", line=lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in KEYS:
                raise ConfigError("unknown key", line=lineno, key=key)
            try:
                values[key] = KEYS[key](value)
            except ValueError as exc:
                raise ConfigError(f"invalid value {value!r}: {exc}", line=lineno, key=key) from None
            raw[key] = value
        for key in REQUIRED.get(command, ()):
            if key not in values:
                raise ConfigError(f"required by '{command}'", key=key)
        if command == "scaling" and len(values["eps"]) < 4:
            raise ConfigError("scaling needs at least four eps values", key="eps")
        if values.get("mesh") == "file" and "mesh_file" not in values:
            raise ConfigError("mesh=file needs mesh_file", key="mesh_file")
        return cls(command, tuple(sorted(raw.items())), values)

    @classmethod
    def from_file(cls, path: str | Path | None, command: str, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        text = Path(path).read_text(encoding="utf-8") if path else ""
        return cls.parse(text, command, overrides)

    def get(self, key: str) -> Any:
        return self.values.get(key, DEFAULTS.get(key))

    @property
    def text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in (("command", self.command),) + self.raw)

    @property
    def hash(self) -> str:
        return config_hash(self.text)

    def specs(self) -> list[GluingSpec]:
        """Gluing specs over the eps x L grid, in file order."""
        return [
            GluingSpec(self.get("kind"), self.get("p"), eps, L, self.get("n"), self.get("v"))
            for eps in self.get("eps")
            for L in self.get("L")
        ]


class ExperimentApp:
    def __init__(self, experiment: ExperimentConfig, out_dir: str | Path, threads: int = 1) -> None:
        self.config = experiment
        self.out_dir = Path(out_dir)
        self.threads = clamp(threads, 1, os.cpu_count() or 1)

    # Inputs -----------------------------------------------------------------

    def _mesh(self) -> IntrinsicMesh:
        kind = self.config.get("mesh")
        if kind == "file":
            return load(self.config.get("mesh_file"))
        if kind == "icosphere":
            return build_primitive(kind, subdiv=self.config.get("subdiv"), flat_cap=self.config.get("flat_cap"))
        if kind == "flat_torus":
            b = self.config.get("lattice_b") or (0.0, 1.0)
            if len(b) != 2:
                raise ConfigError("expected two numbers", key="lattice_b")
            return build_primitive(kind, n=self.config.get("resolution"), b=(b[0], b[1]))
        if kind == "flat_disk":
            return build_primitive(kind, rings=self.config.get("resolution"), n=self.config.get("circle"))
        return build_primitive(kind, L=self.config.get("length"), n=self.config.get("circle"))

    def _density(self, mesh: IntrinsicMesh) -> np.ndarray:
        if self.config.get("density") == "round_cap":
            return round_cap_density(mesh)
        return np.ones(mesh.vertex_count)

    def _ascent(self) -> AscentOptions:
        return AscentOptions(
            max_iter=self.config.get("max_iter"),
            tol=self.config.get("ascent_tol"),
            mode=self.config.get("mode"),
            count=self.config.get("count"),
            seed=self.config.get("seed"),
        )

    # Commands ---------------------------------------------------------------

    def _run_spectrum(self) -> dict:
        mesh = self._mesh()
        rho = self._density(mesh)
        S, M, result = solve_mesh(mesh, rho, count=self.config.get("count"), seed=self.config.get("seed"), rel_tol=self.config.get("rel_tol"))
        total = area(mesh, rho)
        headline = {"lambda_bar": result.lambda1 * total, "multiplicity": result.first_multiplicity}
        matrices = []
        if self.config.get("matrices") == "yes":
            matrices = [export_coo(S, self.out_dir / "stiffness.coo").name, export_coo(M, self.out_dir / "mass.coo").name]
        return {
            "passed": True,
            "headline": headline,
            "mesh": mesh.name,
            "vertices": mesh.vertex_count,
            "area": total,
            "eigenvalues": result.eigenvalues,
            "residuals": result.residuals,
            "gap_certified": result.gap_certified,
            "matrices": matrices,
        }

    def _run_glue(self) -> dict:
        base = self._mesh()
        spec = self.config.specs()[0]
        glued = glue(base, spec)
        straight, collar = straighten(glued)
        rho = collar * self._carried_density(base, glued)
        _, _, result = solve_mesh(straight, rho, count=self.config.get("count"), seed=self.config.get("seed"))
        violations = validate(glued.mesh)
        save(glued.mesh, self.out_dir / "glued.imesh", comments=glued.provenance)
        return {
            "passed": not violations,
            "headline": {"euler_char": euler_char(glued.mesh), "lambda_bar": result.lambda1 * area(straight, rho)},
            "orientable": glued.mesh.orientable,
            "vertices": glued.mesh.vertex_count,
            "faces": glued.mesh.face_count,
            "violations": [f"{v.kind}: {v.detail}" for v in violations],
        }

    def _carried_density(self, base: IntrinsicMesh, glued: GluedSurface) -> np.ndarray:
        rho = self._density(base)
        return carry_density(rho, glued.base_to_glued, glued.mesh.vertex_count, rho[glued.spec.p])

    def _run_verify_extend(self) -> dict:
        K, Ls = self.config.get("K"), self.config.get("L")
        rows = verification_rows(K, Ls)
        write_csv(self.out_dir / "verify-extend.csv", rows, ["k", "L", "disk_energy", "cylinder_energy", "ratio", "coth", "bound", "pass"])
        drops = []
        for index in range(self.config.get("fields")):
            domain = "crosscap" if index % 2 == 0 else "handle"
            u = random_band_limited(min(K, 8), Ls[index % len(Ls)], domain, seed=self.config.get("seed") + index)
            drop = energy_drop(u)
            drops.append(drop.residual / max(1.0, abs(drop.lhs)))
        worst = max(drops, default=0.0)
        return {
            "passed": all(row["pass"] for row in rows) and worst < 1e-8,
            "headline": {"modes": len(rows), "worst_energy_drop": worst},
            "failed_rows": [row for row in rows if not row["pass"]],
        }

    def _run_maximize(self) -> dict:
        mesh = self._mesh()
        rho, trace = maximize_conformal(mesh, self._density(mesh), self._ascent())
        rows = [vars(step) for step in trace.steps]
        write_csv(self.out_dir / "maximize.csv", rows)
        write_csv(self.out_dir / "density.csv", [{"vertex": i, "rho": r} for i, r in enumerate(rho)])
        return {
            "passed": trace.is_monotone(),
            "headline": {"initial": trace.steps[0].value, "final": trace.final_value},
            "converged": trace.converged,
            "partial": trace.partial,
            "reason": trace.reason,
            "extremal_residual": self._extremal_residual(mesh, rho),
        }

    def _extremal_residual(self, mesh: IntrinsicMesh, rho: np.ndarray) -> float | None:
        """max |lambda_1 rho - |dPhi|^2| relative to lambda_1 max rho, for the final eigenmap."""
        tol = config.ASCENT_CLUSTER_TOL
        _, M, result = solve_mesh(mesh, rho, count=self.config.get("count"), seed=self.config.get("seed"), rel_tol=tol)
        try:
            basis, _ = first_eigenspace(result, tol)
            phi = extract_eigenmap(basis, M).components
        except EigenspaceError as exc:
            logger.warning("No eigenmap for the maximizer: %s", exc)
            return None
        return extremal_residual(mesh, rho, phi, result.lambda1)

    def _run_gap(self) -> dict:
        base = self._mesh()
        report = gap_experiment(base, self._density(base), self.config.specs(), self._ascent(), threads=self.threads)
        payload = report.to_dict()
        write_csv(self.out_dir / "gap.csv", payload["rows"])
        expect_gap = report.density_at_p > 0
        payload.update(
            passed=report.positive or not expect_gap,
            headline={"max_gap": report.max_gap, "eps": report.best.eps, "L": report.best.L},
        )
        return payload

    def _run_scaling(self) -> dict:
        base = self._mesh()
        specs = [GluingSpec(self.config.get("kind"), self.config.get("p"), eps, self.config.get("L")[0], self.config.get("n"), self.config.get("v")) for eps in self.config.get("eps")]
        report = scaling_study(base, self._density(base), specs, self._ascent(), K=self.config.values.get("K"), threads=self.threads)
        payload = report.to_dict()
        write_csv(self.out_dir / "scaling.csv", payload["rows"])
        payload.update(
            passed=True,
            headline={"unit_slope": report.unit_fit.slope, "gradient_slope": report.gradient_fit.slope},
        )
        return payload

    def run(self) -> int:
        started = datetime.now(timezone.utc)
        handlers = {
            "spectrum": self._run_spectrum,
            "glue": self._run_glue,
            "verify-extend": self._run_verify_extend,
            "maximize": self._run_maximize,
            "gap": self._run_gap,
            "scaling": self._run_scaling,
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        logger.info("Running %s (config %s)", self.config.command, self.config.hash[:12])
        payload = handlers[self.config.command]()
        payload.update(command=self.config.command, config=self.config.text, config_hash=self.config.hash)
        write_json(self.out_dir / f"{self.config.command}.json", payload)
        write_meta(self.out_dir, self.config.command, started, {"threads": self.threads})
        return EXIT_OK if payload["passed"] else EXIT_NUMERICAL


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surgery-spectra", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("directory", nargs="?", help="report directory for 'summary'")
    parser.add_argument("--config", help="key=value experiment file")
    parser.add_argument("--out", default="reports", help="output directory")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--threads", type=int, default=1)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true")
    verbosity.add_argument("--quiet", "-q", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "summary":
        rows = report_summary(args.directory or args.out)
        sys.stdout.write(format_table(rows))
        meshes = list_mesh_files(args.directory or args.out)
        if meshes:
            sys.stdout.write(f"meshes: {', '.join(p.name for p in meshes)}\n")
        return EXIT_OK if all(row.passed for row in rows) else EXIT_VALIDATION

    try:
        overrides = {"seed": str(args.seed)} if args.seed is not None else None
        experiment = ExperimentConfig.from_file(args.config, args.command, overrides)
        return ExperimentApp(experiment, args.out, args.threads).run()
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except (RuntimeError, SurgerySpectraError, np.linalg.LinAlgError) as exc:
        logger.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
