"""Primitive surfaces: icosphere, flat tori, flat disk, flat cylinder and Moebius band."""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np

from surgery_spectra import config
from surgery_spectra.errors import MeshError
from surgery_spectra.mesh.intrinsic import BoundaryLoop, FlatPatch, IntrinsicMesh

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def _side_lengths(points: np.ndarray) -> np.ndarray:
    """(F, 3, d) corner positions -> (F, 3) side lengths, side s opposite corner s."""
    p0, p1, p2 = points[:, 0], points[:, 1], points[:, 2]
    return np.stack(
        [np.linalg.norm(p2 - p1, axis=1), np.linalg.norm(p0 - p2, axis=1), np.linalg.norm(p1 - p0, axis=1)], axis=1
    )


def _circle_angles(n: int) -> tuple[float, ...]:
    return tuple(TWO_PI * j / n for j in range(n))


# Icosphere ------------------------------------------------------------------


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return verts / np.linalg.norm(verts, axis=1, keepdims=True), faces


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cache: dict[tuple[int, int], int] = {}
    points = list(verts)

    def midpoint(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        if key not in cache:
            m = points[i] + points[j]
            points.append(m / np.linalg.norm(m))
            cache[key] = len(points) - 1
        return cache[key]

    new_faces = []
    for a, b, c in faces.tolist():
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(points), np.array(new_faces, dtype=np.int64)


def icosphere_points(subdiv: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-sphere vertex positions and faces of the subdivided icosahedron."""
    if subdiv < 0:
        raise MeshError(f"icosphere subdivision must be >= 0, got {subdiv}")
    verts, faces = _icosahedron()
    for _ in range(subdiv):
        verts, faces = _subdivide(verts, faces)
    return verts, faces


def icosphere(subdiv: int, flat_cap: float | None = config.DELTA0) -> IntrinsicMesh:
    """Unit sphere whose cap of geodesic radius *flat_cap* around vertex 0 is made exactly flat.

    Pass ``flat_cap=None`` for the plain round sphere. The patch radius is the
    usable chart radius: the cap chart radius less its longest face side.

    The flat cap uses the stereographic chart x = 2 tan(r/2) u around the pole,
    so the flattened metric stays in the round conformal class with factor
    (1 + |x|^2/4)^-2 (see :func:`round_cap_density`).
    """
    verts, faces = icosphere_points(subdiv)
    points = verts[faces]
    face_lengths = _side_lengths(points)
    patches: tuple[FlatPatch, ...] = ()

    if flat_cap is not None:
        if not 0.0 < flat_cap < math.pi / 2:
            raise MeshError(f"flat cap radius must lie in (0, pi/2), got {flat_cap}")
        pole = verts[0]
        e1 = np.cross(pole, [0.0, 0.0, 1.0])
        if np.linalg.norm(e1) < 1e-8:
            e1 = np.cross(pole, [1.0, 0.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(pole, e1)
        geodesic = np.arccos(np.clip(verts @ pole, -1.0, 1.0))
        inside = np.where(geodesic <= flat_cap)[0]
        azimuth = np.arctan2(verts[inside] @ e2, verts[inside] @ e1)
        radius = 2.0 * np.tan(geodesic[inside] / 2.0)
        coords = np.stack([radius * np.cos(azimuth), radius * np.sin(azimuth)], axis=1)
        coords[inside == 0] = 0.0

        chart = np.full((len(verts), 2), np.nan)
        chart[inside] = coords
        in_cap = np.zeros(len(verts), dtype=bool)
        in_cap[inside] = True
        chart_lengths = _side_lengths(np.nan_to_num(chart[faces]))
        for s in range(3):
            flat_side = in_cap[faces[:, (s + 1) % 3]] & in_cap[faces[:, (s + 2) % 3]]
            face_lengths[flat_side, s] = chart_lengths[flat_side, s]
        cap_faces = in_cap[faces].all(axis=1)
        longest = float(face_lengths[cap_faces].max()) if cap_faces.any() else math.inf
        patch_radius = 2.0 * math.tan(flat_cap / 2.0) - longest
        if patch_radius > 0:
            patches = (FlatPatch(center=0, radius=patch_radius, vertices=tuple(int(v) for v in inside), coords=coords),)
            logger.debug("Flat cap: %d vertices, usable chart radius %.4f", len(inside), patch_radius)
        else:
            logger.warning("Flat cap of radius %.3g is too small for subdivision %d; no flat patch", flat_cap, subdiv)

    return IntrinsicMesh.from_face_lengths(
        len(verts), faces, face_lengths, flat_patches=patches, orientable=True, name=f"icosphere({subdiv})"
    )


def round_cap_density(mesh: IntrinsicMesh) -> np.ndarray:
    """Density restoring the round area element on a flattened stereographic cap.

    Vertices in the first flat patch get (1 + |x|^2/4)^-2 at chart position x,
    everything else 1.
    """
    rho = np.ones(mesh.vertex_count)
    if mesh.flat_patches:
        patch = mesh.flat_patches[0]
        sq = np.sum(patch.coords**2, axis=1)
        rho[list(patch.vertices)] = (1.0 + sq / 4.0) ** -2
    return rho


# Flat tori -------------------------------------------------------------------


def _minimal_image(displacements: np.ndarray, periods: list[np.ndarray]) -> np.ndarray:
    best = displacements.copy()
    best_norm = np.linalg.norm(best, axis=1)
    shifts = [np.zeros(2)]
    for p in periods:
        shifts = [s + c * p for s in shifts for c in (-1, 0, 1)]
    for s in shifts:
        cand = displacements + s
        norm = np.linalg.norm(cand, axis=1)
        better = norm < best_norm
        best[better] = cand[better]
        best_norm[better] = norm[better]
    return best


def flat_torus(
    n: int,
    m: int | None = None,
    a: tuple[float, float] = (1.0, 0.0),
    b: tuple[float, float] = (0.0, 1.0),
) -> IntrinsicMesh:
    """Flat torus R^2 / (Z a + Z b) on an n x m grid of lattice points.

    Each cell (i, j) is split into (i,j),(i+1,j),(i,j+1) and (i+1,j),(i+1,j+1),(i,j+1),
    which makes every triangle equilateral for the hexagonal lattice.
    """
    m = n if m is None else m
    if n < 3 or m < 3:
        raise MeshError(f"flat torus needs at least 3 x 3 cells, got {n} x {m}")
    a_vec, b_vec = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if abs(a_vec[0] * b_vec[1] - a_vec[1] * b_vec[0]) < 1e-12:
        raise MeshError("torus lattice vectors are parallel")

    def vid(i: int, j: int) -> int:
        return (i % n) * m + (j % m)

    def pos(i: int, j: int) -> np.ndarray:
        return (i / n) * a_vec + (j / m) * b_vec

    faces, corners = [], []
    for i in range(n):
        for j in range(m):
            for tri in (((i, j), (i + 1, j), (i, j + 1)), ((i + 1, j), (i + 1, j + 1), (i, j + 1))):
                faces.append([vid(*c) for c in tri])
                corners.append([pos(*c) for c in tri])
    face_lengths = _side_lengths(np.array(corners))

    periods = [a_vec, b_vec]
    shortest = min(np.linalg.norm(p) for p in (a_vec, b_vec, a_vec + b_vec, a_vec - b_vec))
    radius = config.TORUS_PATCH_FRACTION * shortest
    all_pos = np.array([pos(i, j) for i in range(n) for j in range(m)])
    disp = _minimal_image(all_pos - all_pos[0], periods)
    inside = np.where(np.linalg.norm(disp, axis=1) <= radius + 1e-12)[0]
    patch = FlatPatch(center=0, radius=radius, vertices=tuple(int(v) for v in inside), coords=disp[inside])
    return IntrinsicMesh.from_face_lengths(
        n * m, np.array(faces), face_lengths, flat_patches=(patch,), orientable=True, name=f"flat_torus({n}x{m})"
    )


# Flat disk -------------------------------------------------------------------


def polar_rings(radii: np.ndarray, n: int, offset: int) -> tuple[np.ndarray, np.ndarray]:
    """Faces joining consecutive rings of *n* vertices, ring r starting at offset + r n.

    Polar quads are isosceles trapezoids, so either diagonal serves. Returns (faces, ring angles).
    """
    theta = np.array(_circle_angles(n))
    faces = []
    for r in range(len(radii) - 1):
        for j in range(n):
            i0, i1 = offset + r * n + j, offset + r * n + (j + 1) % n
            o0, o1 = offset + (r + 1) * n + j, offset + (r + 1) * n + (j + 1) % n
            faces.extend([[i0, o1, i1], [i0, o0, o1]])
    return np.array(faces, dtype=np.int64).reshape(-1, 3), theta


def flat_disk(radius: float = 1.0, rings: int = 8, n: int = 16) -> IntrinsicMesh:
    """Flat polar-grid disk with a center vertex and *rings* rings of *n* vertices."""
    if radius <= 0 or rings < 1 or n < 3:
        raise MeshError("flat disk needs radius > 0, rings >= 1 and n >= 3")
    radii = radius * np.arange(1, rings + 1) / rings
    ring_faces, theta = polar_rings(radii, n, offset=1)
    fan = np.array([[0, 1 + j, 1 + (j + 1) % n] for j in range(n)], dtype=np.int64)
    faces = np.vstack([fan, ring_faces])

    coords = np.zeros((1 + rings * n, 2))
    for r in range(rings):
        coords[1 + r * n : 1 + (r + 1) * n] = radii[r] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    face_lengths = _side_lengths(coords[faces])
    outer = tuple(range(1 + (rings - 1) * n, 1 + rings * n))
    loop = BoundaryLoop(vertices=outer, angles=_circle_angles(n), center=(0.0, 0.0), radius=float(radius), patch=0)
    patch = FlatPatch(center=0, radius=float(radius), vertices=tuple(range(len(coords))), coords=coords)
    return IntrinsicMesh.from_face_lengths(
        len(coords), faces, face_lengths, boundary_loops=(loop,), flat_patches=(patch,), orientable=True, name="flat_disk"
    )


# Cylinder and Moebius band ---------------------------------------------------


def default_rings(length: float, n: int, width: float) -> int:
    """Axial intervals so that the axial spacing is at most BAND_ASPECT times the circumferential one."""
    return max(1, math.ceil(length / (config.BAND_ASPECT * width / n)))


def _band_patch(coords: np.ndarray, vertices: list[int], center: int, radius: float, width: float) -> FlatPatch:
    disp = _minimal_image(coords - coords[center], [np.array([width, 0.0])])
    inside = [v for v in vertices if np.linalg.norm(disp[v]) <= radius + 1e-12]
    return FlatPatch(center=center, radius=radius, vertices=tuple(inside), coords=disp[inside])


def cylinder(L: float, n: int, rings: int | None = None, width: float = TWO_PI) -> IntrinsicMesh:
    """Flat cylinder T_L of circumference *width* and axial extent [-L, L].

    Ring r sits at t = -L + 2 L r / rings; vertex (r, j) has id r n + j and
    angle 2 pi j / n. Boundary loops: t = -L first, t = +L second.
    """
    if L <= 0 or n < 3:
        raise MeshError(f"cylinder needs L > 0 and n >= 3, got L={L}, n={n}")
    rings = default_rings(2 * L, n, width) if rings is None else rings
    if rings < 1:
        raise MeshError("cylinder needs at least one axial interval")
    t = -L + 2.0 * L * np.arange(rings + 1) / rings
    faces, corners = [], []
    for r in range(rings):
        for j in range(n):
            i0, i1 = r * n + j, r * n + (j + 1) % n
            o0, o1 = (r + 1) * n + j, (r + 1) * n + (j + 1) % n
            x0, x1 = width * j / n, width * (j + 1) / n
            faces.extend([[i0, i1, o1], [i0, o1, o0]])
            corners.append([(x0, t[r]), (x1, t[r]), (x1, t[r + 1])])
            corners.append([(x0, t[r]), (x1, t[r + 1]), (x0, t[r + 1])])
    face_lengths = _side_lengths(np.array(corners))
    angles = _circle_angles(n)
    loops = (
        BoundaryLoop(vertices=tuple(range(n)), angles=angles),
        BoundaryLoop(vertices=tuple(range(rings * n, (rings + 1) * n)), angles=angles),
    )
    coords = np.array([(width * j / n, t[r]) for r in range(rings + 1) for j in range(n)])
    center = (rings // 2) * n
    patch = _band_patch(coords, list(range(len(coords))), center, 0.45 * min(L, width / 2), width)
    return IntrinsicMesh.from_face_lengths(
        (rings + 1) * n, np.array(faces), face_lengths, boundary_loops=loops, flat_patches=(patch,),
        orientable=True, name=f"cylinder(L={L},n={n})",
    )


def moebius(L: float, n: int, rings: int | None = None, width: float = TWO_PI) -> IntrinsicMesh:
    """Flat Moebius band Gamma_L = S^1 x [-L, L] / (z, t) ~ (-z, -t).

    Stored on the fundamental domain t in [0, L]: the core ring t = 0 keeps
    n/2 vertices (ring vertex j is identified with j + n/2), ring r >= 1 has
    n vertices with ids n/2 + (r - 1) n + j. The single boundary loop is t = L.
    """
    if n % 2:
        raise MeshError(f"Moebius band needs an even circle resolution, got n={n}")
    if n < config.MIN_MOEBIUS_RESOLUTION:
        raise MeshError(f"Moebius band needs n >= {config.MIN_MOEBIUS_RESOLUTION}, got n={n}")
    if L <= 0:
        raise MeshError(f"Moebius band needs L > 0, got L={L}")
    rings = default_rings(L, n, width) if rings is None else rings
    if rings < 1:
        raise MeshError("Moebius band needs at least one axial interval")
    half = n // 2
    t = L * np.arange(rings + 1) / rings

    def vid(r: int, j: int) -> int:
        return (j % half) if r == 0 else half + (r - 1) * n + (j % n)

    faces, corners = [], []
    for r in range(rings):
        for j in range(n):
            x0, x1 = width * j / n, width * (j + 1) / n
            faces.append([vid(r, j), vid(r, j + 1), vid(r + 1, j + 1)])
            corners.append([(x0, t[r]), (x1, t[r]), (x1, t[r + 1])])
            faces.append([vid(r, j), vid(r + 1, j + 1), vid(r + 1, j)])
            corners.append([(x0, t[r]), (x1, t[r + 1]), (x0, t[r + 1])])
    face_lengths = _side_lengths(np.array(corners))
    vertex_count = half + rings * n
    loop = BoundaryLoop(vertices=tuple(vid(rings, j) for j in range(n)), angles=_circle_angles(n))

    coords = np.zeros((vertex_count, 2))
    for r in range(rings + 1):
        for j in range(half if r == 0 else n):
            coords[vid(r, j)] = (width * j / n, t[r])
    mid = max(1, rings // 2)
    radius = 0.45 * min(L / 2.0, width / 2.0)
    off_core = [v for v in range(half, vertex_count)]
    patch = _band_patch(coords, off_core, vid(mid, 0), radius, width)
    return IntrinsicMesh.from_face_lengths(
        vertex_count, np.array(faces), face_lengths, boundary_loops=(loop,), flat_patches=(patch,),
        orientable=False, name=f"moebius(L={L},n={n})",
    )


PRIMITIVES: dict[str, Callable[..., IntrinsicMesh]] = {
    "icosphere": icosphere,
    "flat_torus": flat_torus,
    "flat_disk": flat_disk,
    "cylinder": cylinder,
    "moebius": moebius,
}


def build_primitive(kind: str, **params) -> IntrinsicMesh:
    """Dispatch to the named primitive constructor."""
    try:
        builder = PRIMITIVES[kind]
    except KeyError:
        raise MeshError(f"unknown primitive kind {kind!r}; expected one of {sorted(PRIMITIVES)}") from None
    return builder(**params)


__all__ = [
    "build_primitive",
    "cylinder",
    "default_rings",
    "flat_disk",
    "flat_torus",
    "icosphere",
    "icosphere_points",
    "moebius",
    "polar_rings",
    "round_cap_density",
]
