"""Exception hierarchy shared by every module.

Validation problems derive from ``ValueError`` (exit code 1 on the command
line); numerical failures derive from ``RuntimeError`` (exit code 2).
"""

from __future__ import annotations

from typing import Sequence


class SurgerySpectraError(Exception):
    """Base class for all library errors."""


class MeshError(SurgerySpectraError, ValueError):
    """Malformed or invalid intrinsic mesh, including file parse errors."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GluingError(SurgerySpectraError, ValueError):
    """Surgery parameters incompatible with the mesh (patch too small, odd N, ...)."""


class ConfigError(SurgerySpectraError, ValueError):
    """Experiment configuration rejected; carries the offending line and key."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if key is not None:
            prefix.append(f"key '{key}'")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class SolverError(SurgerySpectraError, RuntimeError):
    """Eigensolver did not converge; ``residuals`` holds the best residuals seen."""

    def __init__(self, message: str, residuals: Sequence[float] = ()):
        self.residuals = tuple(float(r) for r in residuals)
        super().__init__(message)


class EigenspaceError(SurgerySpectraError, RuntimeError):
    """The computed spectrum cannot certify what was asked of the first eigenspace."""
