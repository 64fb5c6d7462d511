"""Plain-text IMESH v1 reading and writing.

Layout::

    IMESH v1 <V> <F> <B>
    # free comments (provenance blocks)
    o yes|no|unknown
    f i j k                      (F lines)
    e i j <length>               (one per edge, 17 significant digits)
    b n v_0 .. v_n-1 | a_0 .. a_n-1 | cx cy radius patch   (B lines, '-' for unset)
    p center radius n v_0 .. v_n-1 | x_0 y_0 .. x_n-1 y_n-1
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from surgery_spectra import config
from surgery_spectra.errors import MeshError
from surgery_spectra.mesh.intrinsic import BoundaryLoop, FlatPatch, IntrinsicMesh

logger = logging.getLogger(__name__)

HEADER = "IMESH v1"
_ORIENTATION = {True: "yes", False: "no", None: "unknown"}


def _num(value: float) -> str:
    return "%.*g" % (config.MESH_FLOAT_DIGITS, value)


def _opt(value) -> str:
    return "-" if value is None else _num(value) if isinstance(value, float) else str(value)


def dumps(mesh: IntrinsicMesh, comments: Iterable[str] = ()) -> str:
    """Serialize *mesh*; identical meshes give identical text."""
    lines = [f"{HEADER} {mesh.vertex_count} {mesh.face_count} {len(mesh.boundary_loops)}"]
    lines.append(f"# name: {mesh.name}")
    lines.extend(f"# {c}" for c in comments)
    lines.append(f"o {_ORIENTATION[mesh.orientable]}")
    lines.extend(f"f {i} {j} {k}" for i, j, k in mesh.faces.tolist())
    lines.extend(f"e {i} {j} {_num(l)}" for (i, j), l in zip(mesh.edges.tolist(), mesh.lengths.tolist()))
    for loop in mesh.boundary_loops:
        cx, cy = loop.center if loop.center is not None else (None, None)
        lines.append(
            f"b {len(loop)} {' '.join(map(str, loop.vertices))} | {' '.join(_num(a) for a in loop.angles)}"
            f" | {_opt(cx)} {_opt(cy)} {_opt(loop.radius)} {_opt(loop.patch)}"
        )
    for patch in mesh.flat_patches:
        coords = " ".join(_num(x) for x in patch.coords.ravel().tolist())
        lines.append(
            f"p {patch.center} {_num(patch.radius)} {len(patch.vertices)} {' '.join(map(str, patch.vertices))} | {coords}"
        )
    return "\n".join(lines) + "\n"


def save(mesh: IntrinsicMesh, path: str | Path, comments: Iterable[str] = ()) -> Path:
    """Write *mesh* to *path* in IMESH v1 format (UTF-8)."""
    path = Path(path)
    path.write_text(dumps(mesh, comments), encoding="utf-8")
    logger.info("Saved %s (%d vertices, %d faces) to %s", mesh.name, mesh.vertex_count, mesh.face_count, path)
    return path


def _ints(tokens: Sequence[str], lineno: int) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MeshError(f"expected integers, got {' '.join(tokens)!r}", line=lineno) from None


def _floats(tokens: Sequence[str], lineno: int) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise MeshError(f"expected numbers, got {' '.join(tokens)!r}", line=lineno) from None


def _optional(token: str, kind: type, lineno: int):
    if token == "-":
        return None
    try:
        return kind(token)
    except ValueError:
        raise MeshError(f"bad value {token!r}", line=lineno) from None


def _check_index(indices: Sequence[int], vertex_count: int, lineno: int) -> None:
    for v in indices:
        if not 0 <= v < vertex_count:
            raise MeshError(f"vertex index {v} outside [0, {vertex_count})", line=lineno)


def loads(text: str) -> IntrinsicMesh:
    """Parse IMESH v1 text; raises :class:`MeshError` carrying the offending line number."""
    lines = text.splitlines()
    if not lines:
        raise MeshError("empty mesh file", line=1)
    head = lines[0].split()
    if head[:2] != HEADER.split() or len(head) != 5:
        raise MeshError(f"expected header '{HEADER} <V> <F> <B>', got {lines[0]!r}", line=1)
    vertex_count, face_count, loop_count = _ints(head[2:], 1)

    name = "mesh"
    orientable: bool | None = None
    faces: list[list[int]] = []
    lengths: dict[tuple[int, int], float] = {}
    loops: list[BoundaryLoop] = []
    patches: list[FlatPatch] = []

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# name: "):
                name = line[len("# name: "):]
            continue
        tag, *rest = line.split()
        if tag == "o":
            flags = {"yes": True, "no": False, "unknown": None}
            if len(rest) != 1 or rest[0] not in flags:
                raise MeshError(f"bad orientability line {line!r}", line=lineno)
            orientable = flags[rest[0]]
        elif tag == "f":
            face = _ints(rest, lineno)
            if len(face) != 3:
                raise MeshError("face lines need exactly three indices", line=lineno)
            _check_index(face, vertex_count, lineno)
            faces.append(face)
        elif tag == "e":
            if len(rest) != 3:
                raise MeshError("edge lines need 'e i j length'", line=lineno)
            i, j = _ints(rest[:2], lineno)
            (length,) = _floats(rest[2:], lineno)
            _check_index((i, j), vertex_count, lineno)
            if not np.isfinite(length) or length <= 0:
                raise MeshError(f"edge ({i}, {j}) has non-positive length {length!r}", line=lineno)
            key = (min(i, j), max(i, j))
            if key in lengths:
                raise MeshError(f"edge {key} listed twice", line=lineno)
            lengths[key] = length
        elif tag == "b":
            loops.append(_parse_loop(rest, vertex_count, lineno))
        elif tag == "p":
            patches.append(_parse_patch(rest, vertex_count, lineno))
        else:
            raise MeshError(f"unknown line tag {tag!r}", line=lineno)

    if len(faces) != face_count:
        raise MeshError(f"header declares {face_count} faces, found {len(faces)}", line=1)
    if len(loops) != loop_count:
        raise MeshError(f"header declares {loop_count} boundary loops, found {len(loops)}", line=1)
    return IntrinsicMesh.from_lengths(
        vertex_count, np.array(faces, dtype=np.int64).reshape(-1, 3), lengths,
        boundary_loops=loops, flat_patches=patches, orientable=orientable, name=name,
    )


def _parse_loop(tokens: list[str], vertex_count: int, lineno: int) -> BoundaryLoop:
    parts = " ".join(tokens).split("|")
    if len(parts) != 3:
        raise MeshError("boundary lines need 'b n verts | angles | cx cy radius patch'", line=lineno)
    head = _ints(parts[0].split(), lineno)
    if not head or len(head) != head[0] + 1:
        raise MeshError("boundary vertex count does not match", line=lineno)
    vertices = head[1:]
    _check_index(vertices, vertex_count, lineno)
    angles = _floats(parts[1].split(), lineno)
    if len(angles) != len(vertices):
        raise MeshError("boundary angle count does not match", line=lineno)
    extra = parts[2].split()
    if len(extra) != 4:
        raise MeshError("boundary lines need four chart fields", line=lineno)
    cx, cy, radius = (_optional(t, float, lineno) for t in extra[:3])
    patch = _optional(extra[3], int, lineno)
    center = None if cx is None or cy is None else (cx, cy)
    return BoundaryLoop(vertices=tuple(vertices), angles=tuple(angles), center=center, radius=radius, patch=patch)


def _parse_patch(tokens: list[str], vertex_count: int, lineno: int) -> FlatPatch:
    parts = " ".join(tokens).split("|")
    if len(parts) != 2:
        raise MeshError("patch lines need 'p center radius n verts | coords'", line=lineno)
    head = parts[0].split()
    if len(head) < 3:
        raise MeshError("patch header is incomplete", line=lineno)
    center, count = _ints([head[0], head[2]], lineno)
    (radius,) = _floats([head[1]], lineno)
    vertices = _ints(head[3:], lineno)
    if len(vertices) != count:
        raise MeshError("patch vertex count does not match", line=lineno)
    _check_index(vertices, vertex_count, lineno)
    coords = _floats(parts[1].split(), lineno)
    if len(coords) != 2 * count:
        raise MeshError("patch needs two chart coordinates per vertex", line=lineno)
    return FlatPatch(center=center, radius=radius, vertices=tuple(vertices), coords=np.array(coords).reshape(-1, 2))


def load(path: str | Path) -> IntrinsicMesh:
    """Read an IMESH v1 file."""
    path = Path(path)
    mesh = loads(path.read_text(encoding="utf-8"))
    logger.info("Loaded %s from %s", mesh.name, path)
    return mesh


def list_mesh_files(folder: str | Path) -> list[Path]:
    """Return sorted ``.imesh`` files in *folder* (empty when it does not exist)."""
    folder = Path(folder)
    if not folder.is_dir():
        return []
    return sorted(p for p in folder.iterdir() if p.suffix.lower() == ".imesh")
