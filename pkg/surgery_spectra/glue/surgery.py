"""Disk removal and band attachment: cross-caps (Moebius bands) and handles (cylinders).

All surgery happens inside a flat patch, in its planar chart. A removed disk
leaves an exact regular N-gon of radius epsilon whose vertex j sits at angle
2 pi j / N; bands are attached by matching those indices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from surgery_spectra import config
from surgery_spectra.errors import GluingError
from surgery_spectra.mesh.intrinsic import (
    BoundaryLoop,
    IntrinsicMesh,
    append_faces,
    compact,
    euler_char,
    orientability,
)
from surgery_spectra.mesh.primitives import cylinder, moebius

logger = logging.getLogger(__name__)

KINDS = ("crosscap", "handle")


@dataclass(frozen=True)
class GluingSpec:
    """Where and how to operate: disk radius *eps*, neck half-length *L*, seam resolution *n*.

    *p* is a vertex of a flat patch; the handle's second disk is centred at
    p + sqrt(eps) (cos v, sin v) in that patch's chart.
    """

    kind: str
    p: int
    eps: float
    L: float
    n: int
    v: float = 0.0
    rings: int | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise GluingError(f"unknown surgery kind {self.kind!r}; expected one of {KINDS}")
        if self.n % 2 or self.n < config.MIN_MOEBIUS_RESOLUTION:
            raise GluingError(f"seam resolution must be even and >= {config.MIN_MOEBIUS_RESOLUTION}, got {self.n}")
        if not self.eps > 0:
            raise GluingError(f"eps must be positive, got {self.eps}")
        if self.L < config.MIN_NECK_LENGTH - 1e-12:
            raise GluingError(f"neck half-length must be >= {config.MIN_NECK_LENGTH:.6f}, got {self.L}")
        if self.kind == "handle" and not self.eps < config.DELTA0**2 / 4.0:
            raise GluingError(f"handle eps must be < delta0^2/4 = {config.DELTA0**2 / 4.0}, got {self.eps}")
        if self.kind == "handle":
            steps = self.v * self.n / math.pi
            if abs(steps - round(steps)) > 1e-9:
                raise GluingError(f"handle direction must be a multiple of pi/{self.n}, got {self.v}")

    @property
    def reflection_shift(self) -> int:
        """Index offset s with A_v(theta_j) = theta_{s - j}."""
        return int(round(self.v * self.n / math.pi)) % self.n

    def to_lines(self) -> list[str]:
        """key=value lines for configs and provenance comments."""
        lines = [f"kind={self.kind}", f"p={self.p}", f"eps={self.eps!r}", f"L={self.L!r}", f"n={self.n}", f"v={self.v!r}"]
        if self.rings is not None:
            lines.append(f"rings={self.rings}")
        return lines


@dataclass(frozen=True, eq=False)
class DiskCut:
    """Result of one disk removal."""

    mesh: IntrinsicMesh
    old_to_new: np.ndarray  # -1 for removed vertices
    new_faces: np.ndarray  # face indices created by the remesh
    removed_vertices: np.ndarray  # ids in the input mesh

    @property
    def loop(self) -> BoundaryLoop:
        return self.mesh.boundary_loops[-1]


@dataclass(frozen=True, eq=False)
class Seam:
    """A glued circle: glued-mesh vertex j sits at angle 2 pi j / N on the disk side."""

    vertices: tuple[int, ...]
    angles: tuple[float, ...]
    center: tuple[float, float]
    radius: float
    patch: int
    end: str  # "core" (cross-cap), "p" or "q" (handle)
    index_map: np.ndarray  # band column j -> seam index


@dataclass(frozen=True, eq=False)
class GluedSurface:
    """Closed surface produced by one surgery, with everything needed to map back to the base."""

    mesh: IntrinsicMesh
    spec: GluingSpec
    base: IntrinsicMesh
    seams: tuple[Seam, ...]
    neck_faces: np.ndarray
    disk_faces: np.ndarray
    base_to_glued: np.ndarray  # -1 for base vertices inside the removed disks
    band_grid: np.ndarray  # (rings + 1, n) glued ids of band vertex (r, j)
    band_t: np.ndarray  # band coordinate of each ring, unscaled
    provenance: tuple[str, ...] = field(default=())

    @property
    def kind(self) -> str:
        return self.spec.kind


def chart_band_width(n: int) -> float:
    """Circumference of the regular n-gon inscribed in the unit circle."""
    return n * 2.0 * math.sin(math.pi / n)


def _patch_index(mesh: IntrinsicMesh, p: int) -> int:
    try:
        return mesh.patch_of(p)
    except KeyError:
        raise GluingError(f"vertex {p} is not inside any flat patch") from None


def barycentric(tri: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of x in each chart triangle (F, 3)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    v0, v1, v2 = b - a, c - a, x - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom = d00 * d11 - d01 * d01
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = (d11 * d20 - d01 * d21) / denom
        gamma = (d00 * d21 - d01 * d20) / denom
    return np.stack([1.0 - beta - gamma, beta, gamma], axis=1)


def chart_array(mesh: IntrinsicMesh, patch_index: int) -> tuple[np.ndarray, np.ndarray]:
    patch = mesh.flat_patches[patch_index]
    chart = np.full((mesh.vertex_count, 2), np.nan)
    chart[list(patch.vertices)] = patch.coords
    inside = ~np.isnan(chart[:, 0])
    return chart, inside


def _walk_loop(edges: list[tuple[int, int]]) -> list[int]:
    neighbors: dict[int, list[int]] = {}
    for a, b in edges:
        neighbors.setdefault(a, []).append(b)
        neighbors.setdefault(b, []).append(a)
    if any(len(n) != 2 for n in neighbors.values()):
        raise GluingError("removed region is not a topological disk")
    start = min(neighbors)
    loop, previous, current = [start], None, start
    while True:
        a, b = neighbors[current]
        nxt = a if a != previous else b
        if nxt == start:
            break
        loop.append(nxt)
        previous, current = current, nxt
    if len(loop) != len(neighbors):
        raise GluingError("removed region has more than one boundary component")
    return loop


def _zipper(inner: list[int], inner_angles: np.ndarray, outer: list[int], outer_angles: np.ndarray) -> list[list[int]]:
    """Counter-clockwise triangles between a regular inner ring and an irregular outer loop.

    Both sequences run counter-clockwise with increasing (unwrapped) angles;
    inner[0] has the smallest inner angle, outer[0] the smallest outer angle.
    """
    n, m = len(inner), len(outer)
    inner_next = np.append(inner_angles[1:], inner_angles[0] + 2.0 * math.pi)
    outer_next = np.append(outer_angles[1:], outer_angles[0] + 2.0 * math.pi)
    faces, i, j = [], 0, 0
    while i < n or j < m:
        advance_inner = j == m or (i < n and inner_next[i] <= outer_next[j])
        if advance_inner:
            faces.append([inner[i], outer[j % m], inner[(i + 1) % n]])
            i += 1
        else:
            faces.append([inner[i % n], outer[j], outer[(j + 1) % m]])
            j += 1
    return faces


def cut_disk(
    mesh: IntrinsicMesh,
    center: int | tuple[float, float],
    eps: float,
    n: int,
    patch: int | None = None,
) -> DiskCut:
    """Remove the geodesic disk of radius *eps* around *center* from a flat patch.

    *center* is a vertex id or a point in the chart of *patch*. Faces touching
    the disk of radius REMOVAL_FACTOR * eps are replaced by regular polar rings
    (radii eps * exp(2 pi i / n)) zipped to the remaining mesh.
    """
    if n % 2 or n < config.MIN_MOEBIUS_RESOLUTION:
        raise GluingError(f"seam resolution must be even and >= {config.MIN_MOEBIUS_RESOLUTION}, got {n}")
    if eps <= 0:
        raise GluingError(f"eps must be positive, got {eps}")
    if isinstance(center, (int, np.integer)):
        patch = _patch_index(mesh, int(center)) if patch is None else patch
        c = np.asarray(mesh.flat_patches[patch].chart[int(center)], dtype=float)
    else:
        patch = 0 if patch is None else patch
        c = np.asarray(center, dtype=float)
    if not 0 <= patch < len(mesh.flat_patches):
        raise GluingError(f"mesh has no flat patch {patch}")
    flat = mesh.flat_patches[patch]
    reach = config.REMOVAL_FACTOR * eps
    if np.hypot(*c) + reach > flat.radius:
        raise GluingError(f"disk of radius {reach:.4g} around {tuple(c)} leaves flat patch of radius {flat.radius:.4g}")

    chart, in_chart = chart_array(mesh, patch)
    near = np.zeros(mesh.vertex_count, dtype=bool)
    near[in_chart] = np.hypot(*(chart[in_chart] - c).T) < reach
    remove = near[mesh.faces].any(axis=1)
    chart_faces = np.where(in_chart[mesh.faces].all(axis=1))[0]
    bary = barycentric(chart[mesh.faces[chart_faces]], c)
    holder = chart_faces[(bary >= -1e-12).all(axis=1)]
    if not len(holder):
        raise GluingError(f"point {tuple(c)} is not covered by the patch chart")
    remove[holder] = True
    if not in_chart[mesh.faces[remove]].all():
        raise GluingError("removal region extends past the flat patch chart")
    touched = np.unique(mesh.faces[remove])
    existing = set()
    for loop in mesh.boundary_loops:
        existing.update(loop.vertices)
    if existing.intersection(touched.tolist()) or mesh.boundary_vertices[touched].any():
        raise GluingError("removal region touches an existing boundary")

    # Hole boundary: edges seen once among removed faces and at least once among kept faces.
    sides = mesh.side_vertices[remove].reshape(-1, 2)
    keys, counts = np.unique(np.sort(sides, axis=1), axis=0, return_counts=True)
    hole_edges = [tuple(k) for k, cnt in zip(keys.tolist(), counts) if cnt == 1]
    hole = _walk_loop(hole_edges)

    def turning(loop: list[int]) -> tuple[np.ndarray, np.ndarray]:
        rel = chart[loop] - c
        theta = np.arctan2(rel[:, 1], rel[:, 0])
        return theta, np.angle(np.exp(1j * (np.roll(theta, -1) - theta)))

    theta, step = turning(hole)
    if step.sum() < 0:
        hole = hole[::-1]
        theta, step = turning(hole)
    if not (step > 0).all() or abs(step.sum() - 2.0 * math.pi) > 1e-9:
        raise GluingError("hole boundary is not star-shaped around the disk centre")
    theta = np.mod(theta, 2.0 * math.pi)
    first = int(np.argmin(theta))
    hole = hole[first:] + hole[:first]
    outer_angles = theta[first] + np.concatenate([[0.0], np.cumsum(np.roll(step, -first)[:-1])])
    r_out = float(np.hypot(*(chart[hole] - c).T).min())

    ring_count = 1
    growth = math.exp(2.0 * math.pi / n)
    while eps * growth**ring_count < config.RING_FILL_FRACTION * r_out:
        ring_count += 1
    radii = eps * growth ** np.arange(ring_count)
    angles = 2.0 * math.pi * np.arange(n) / n
    V = mesh.vertex_count
    ring_ids = V + np.arange(ring_count * n).reshape(ring_count, n)
    ring_xy = c + radii[:, None, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)[None]

    new_faces: list[list[int]] = []
    for r in range(ring_count - 1):
        for j in range(n):
            i0, i1 = ring_ids[r, j], ring_ids[r, (j + 1) % n]
            o0, o1 = ring_ids[r + 1, j], ring_ids[r + 1, (j + 1) % n]
            new_faces.extend([[i0, o1, i1], [i0, o0, o1]])
    new_faces.extend(_zipper(list(ring_ids[-1]), angles, hole, outer_angles))
    new_faces = np.array(new_faces, dtype=np.int64)

    # Match the orientation of the surrounding faces in the chart.
    kept_chart = np.where(~remove & in_chart[mesh.faces].all(axis=1))[0]
    if len(kept_chart):
        tri = chart[mesh.faces[kept_chart[0]]]
        signed = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        if signed < 0:
            new_faces = new_faces[:, ::-1].copy()

    xy = np.vstack([chart[:V], ring_xy.reshape(-1, 2)])
    lengths: dict[tuple[int, int], float] = {}
    for a, b, d in new_faces.tolist():
        for i, j in ((a, b), (b, d), (d, a)):
            key = (i, j) if i < j else (j, i)
            if key not in lengths:
                lengths[key] = float(np.hypot(*(xy[i] - xy[j])))

    loop = BoundaryLoop(
        vertices=tuple(int(v) for v in ring_ids[0]),
        angles=tuple(float(a) for a in angles),
        center=(float(c[0]), float(c[1])),
        radius=float(eps),
        patch=patch,
    )
    patches = list(mesh.flat_patches)
    patches[patch] = flat.extended(ring_ids.ravel(), ring_xy.reshape(-1, 2))
    grown = append_faces(
        mesh,
        ring_count * n,
        new_faces,
        lengths,
        boundary_loops=mesh.boundary_loops + (loop,),
        flat_patches=tuple(patches),
        orientable=mesh.orientable,
    )
    keep = np.concatenate([~remove, np.ones(len(new_faces), dtype=bool)])
    result, old_to_new = compact(grown, keep)
    new_face_ids = np.arange(int((~remove).sum()), result.face_count)
    removed = np.where(old_to_new[:V] < 0)[0]
    logger.info(
        "Removed disk eps=%.4g at %s: %d faces out, %d rings of %d vertices in",
        eps, tuple(np.round(c, 6)), int(remove.sum()), ring_count, n,
    )
    return DiskCut(mesh=result, old_to_new=old_to_new[:V], new_faces=new_face_ids, removed_vertices=removed)


def remove_disk(
    mesh: IntrinsicMesh,
    center: int | tuple[float, float],
    eps: float,
    n: int,
    patch: int | None = None,
) -> IntrinsicMesh:
    """M minus the disk D_eps(center), with one new boundary loop (last in ``boundary_loops``)."""
    return cut_disk(mesh, center, eps, n, patch).mesh


def refill_disk(mesh: IntrinsicMesh, loop_index: int = -1) -> IntrinsicMesh:
    """Close a loop left by :func:`remove_disk` with a flat polar disk.

    Rings shrink by exp(-2 pi / n) down to half the loop radius, then a fan
    closes the centre.
    """
    loop = mesh.boundary_loops[loop_index]
    if loop.center is None or loop.radius is None or loop.patch is None:
        raise GluingError("only loops created by disk removal can be refilled")
    n = len(loop)
    eps, c = loop.radius, np.asarray(loop.center)
    shrink = math.exp(-2.0 * math.pi / n)
    inner_count = max(1, int(math.floor(math.log(0.5) / math.log(shrink))))
    radii = eps * shrink ** np.arange(1, inner_count + 1)
    angles = np.asarray(loop.angles)
    V = mesh.vertex_count
    ring_ids = np.vstack([np.asarray(loop.vertices)[None], V + np.arange(inner_count * n).reshape(inner_count, n)])
    center_id = V + inner_count * n
    xy = {int(v): c + eps * np.array([math.cos(a), math.sin(a)]) for v, a in zip(loop.vertices, angles)}
    for r, rad in enumerate(radii, start=1):
        for j in range(n):
            xy[int(ring_ids[r, j])] = c + rad * np.array([math.cos(angles[j]), math.sin(angles[j])])
    xy[center_id] = c

    faces: list[list[int]] = []
    for r in range(inner_count):
        for j in range(n):
            o0, o1 = ring_ids[r, j], ring_ids[r, (j + 1) % n]
            i0, i1 = ring_ids[r + 1, j], ring_ids[r + 1, (j + 1) % n]
            faces.extend([[i0, o1, i1], [i0, o0, o1]])
    faces.extend([[center_id, ring_ids[-1, j], ring_ids[-1, (j + 1) % n]] for j in range(n)])
    faces = np.array(faces, dtype=np.int64)

    chart, in_chart = chart_array(mesh, loop.patch)
    kept = np.where(in_chart[mesh.faces].all(axis=1))[0]
    if len(kept):
        tri = chart[mesh.faces[kept[0]]]
        if np.cross(tri[1] - tri[0], tri[2] - tri[0]) < 0:
            faces = faces[:, ::-1].copy()

    lengths = {}
    for a, b, d in faces.tolist():
        for i, j in ((a, b), (b, d), (d, a)):
            key = (i, j) if i < j else (j, i)
            lengths.setdefault(key, float(np.hypot(*(xy[i] - xy[j]))))
    new_ids = list(range(V, center_id + 1))
    patches = list(mesh.flat_patches)
    patches[loop.patch] = patches[loop.patch].extended(new_ids, np.array([xy[v] for v in new_ids]))
    loops = list(mesh.boundary_loops)
    del loops[loop_index]
    logger.info("Refilled loop of %d vertices with %d inner rings", n, inner_count)
    return append_faces(
        mesh, inner_count * n + 1, faces, lengths,
        boundary_loops=tuple(loops), flat_patches=tuple(patches), orientable=mesh.orientable,
        name=f"{mesh.name}+refill",
    )


def _merge_band(
    cut: IntrinsicMesh,
    band: IntrinsicMesh,
    scale: float,
    seam_of_band: dict[int, int],
    used_loops: int,
) -> tuple[IntrinsicMesh, np.ndarray, np.ndarray]:
    """Glue *band* (lengths times *scale*) onto *cut*; returns (mesh, band->glued ids, neck faces)."""
    band_to_glued = np.full(band.vertex_count, -1, dtype=np.int64)
    for b, g in seam_of_band.items():
        band_to_glued[b] = g
    fresh = np.where(band_to_glued < 0)[0]
    band_to_glued[fresh] = cut.vertex_count + np.arange(len(fresh))
    lengths = {
        (int(band_to_glued[i]), int(band_to_glued[j])): float(scale * l)
        for (i, j), l in zip(band.edges.tolist(), band.lengths)
    }
    for (i, j), l in lengths.items():
        if i < cut.vertex_count and j < cut.vertex_count:
            existing = cut.length_of(i, j)
            if abs(existing - l) > 1e-12 * max(1.0, l) + 1e-12:
                raise GluingError(f"seam edge ({i}, {j}) has lengths {existing!r} and {l!r} on the two sides")
    loops = cut.boundary_loops[: len(cut.boundary_loops) - used_loops]
    glued = append_faces(cut, len(fresh), band_to_glued[band.faces], lengths, boundary_loops=loops)
    neck = np.arange(cut.face_count, glued.face_count)
    return glued, band_to_glued, neck


def base_map(base: IntrinsicMesh, cuts: list[DiskCut]) -> np.ndarray:
    """Base vertex id -> id after all *cuts* (-1 once removed)."""
    mapping = np.arange(base.vertex_count)
    for cut in cuts:
        mapping = np.where(mapping >= 0, cut.old_to_new[np.maximum(mapping, 0)], -1)
    return mapping


def _seam(loop: BoundaryLoop, end: str, index_map: np.ndarray) -> Seam:
    return Seam(
        vertices=loop.vertices,
        angles=loop.angles,
        center=loop.center,
        radius=loop.radius,
        patch=loop.patch,
        end=end,
        index_map=index_map,
    )


def attach_crosscap(cut: IntrinsicMesh | DiskCut, spec: GluingSpec, base: IntrinsicMesh | None = None) -> GluedSurface:
    """Glue a flat Moebius band, scaled by eps, onto the last boundary loop of *cut*.

    Band column j on the outer ring meets the loop vertex at angle 2 pi j / N.
    The band is a homothetic copy of Gamma_L with circumference equal to the
    loop perimeter, so every seam edge has the same length on both sides.
    """
    spec.validate()
    disk_cut = cut if isinstance(cut, DiskCut) else None
    mesh = cut.mesh if disk_cut else cut
    if not mesh.boundary_loops:
        raise GluingError("mesh has no boundary loop to attach to")
    loop = mesh.boundary_loops[-1]
    if len(loop) != spec.n:
        raise GluingError(f"loop has {len(loop)} vertices but the spec asks for n={spec.n}")
    width = chart_band_width(spec.n)
    stretch = width / (2.0 * math.pi)
    band = moebius(spec.L * stretch, spec.n, rings=spec.rings, width=width)
    rings = (band.vertex_count - spec.n // 2) // spec.n
    half = spec.n // 2

    def vid(r: int, j: int) -> int:
        return (j % half) if r == 0 else half + (r - 1) * spec.n + (j % spec.n)

    seam_of_band = {vid(rings, j): loop.vertices[j] for j in range(spec.n)}
    glued, band_to_glued, neck = _merge_band(mesh, band, loop.radius or spec.eps, seam_of_band, 1)
    glued = _finish(glued, f"{mesh.name}#RP2", nonorientable=True)
    grid = np.array([[band_to_glued[vid(r, j)] for j in range(spec.n)] for r in range(rings + 1)], dtype=np.int64)
    base = base if base is not None else mesh
    base_to_glued = base_map(base, [disk_cut]) if disk_cut and base is not mesh else np.arange(base.vertex_count)
    disk_faces = disk_cut.new_faces if disk_cut else np.array([], dtype=np.int64)
    return GluedSurface(
        mesh=glued,
        spec=spec,
        base=base,
        seams=(_seam(loop, "core", np.arange(spec.n)),),
        neck_faces=neck,
        disk_faces=disk_faces,
        base_to_glued=base_to_glued,
        band_grid=grid,
        band_t=spec.L * np.arange(rings + 1) / rings,
        provenance=tuple(spec.to_lines()) + (f"base={base.name}",),
    )


def attach_handle(
    cuts: IntrinsicMesh | tuple[DiskCut, DiskCut], spec: GluingSpec, base: IntrinsicMesh | None = None
) -> GluedSurface:
    """Glue a flat cylinder T_L, scaled by eps, onto the last two loops (p then q).

    At t = -L band column j meets p-loop vertex j; at t = +L it meets q-loop
    vertex s - j, the reflection theta -> 2v - theta across the direction v.
    """
    spec.validate()
    disk_cuts = list(cuts) if isinstance(cuts, tuple) else []
    mesh = disk_cuts[-1].mesh if disk_cuts else cuts
    if len(mesh.boundary_loops) < 2:
        raise GluingError("handle needs two boundary loops")
    p_loop, q_loop = mesh.boundary_loops[-2], mesh.boundary_loops[-1]
    n = spec.n
    if len(p_loop) != n or len(q_loop) != n:
        raise GluingError(f"loops have {len(p_loop)} and {len(q_loop)} vertices, expected n={n}")
    if p_loop.radius is not None and q_loop.radius is not None and abs(p_loop.radius - q_loop.radius) > 1e-12:
        raise GluingError("p and q loops are not congruent")
    if p_loop.center is not None and q_loop.center is not None:
        gap = math.dist(p_loop.center, q_loop.center)
        if abs(gap - math.sqrt(spec.eps)) > 1e-9:
            raise GluingError(f"q lies at distance {gap:.6g} from p, expected sqrt(eps) = {math.sqrt(spec.eps):.6g}")
    width = chart_band_width(n)
    stretch = width / (2.0 * math.pi)
    band = cylinder(spec.L * stretch, n, rings=spec.rings, width=width)
    rings = band.vertex_count // n - 1
    shift = spec.reflection_shift
    q_index = (shift - np.arange(n)) % n
    seam_of_band = {j: p_loop.vertices[j] for j in range(n)}
    seam_of_band.update({rings * n + j: q_loop.vertices[q_index[j]] for j in range(n)})
    scale = p_loop.radius or spec.eps
    glued, band_to_glued, neck = _merge_band(mesh, band, scale, seam_of_band, 2)
    glued = _finish(glued, f"{mesh.name}#T2", nonorientable=False)
    grid = band_to_glued[np.arange((rings + 1) * n).reshape(rings + 1, n)]
    base = base if base is not None else mesh
    if disk_cuts and base is not mesh:
        base_to_glued = base_map(base, disk_cuts)
        disk_faces = np.concatenate([disk_cuts[1].new_faces, _carry_faces(disk_cuts[0], disk_cuts[1])])
    else:
        base_to_glued = np.arange(base.vertex_count)
        disk_faces = np.array([], dtype=np.int64)
    return GluedSurface(
        mesh=glued,
        spec=spec,
        base=base,
        seams=(_seam(p_loop, "p", np.arange(n)), _seam(q_loop, "q", q_index)),
        neck_faces=neck,
        disk_faces=np.unique(disk_faces),
        base_to_glued=base_to_glued,
        band_grid=grid,
        band_t=spec.L * (2.0 * np.arange(rings + 1) / rings - 1.0),
        provenance=tuple(spec.to_lines()) + (f"base={base.name}",),
    )


def _carry_faces(first: DiskCut, second: DiskCut) -> np.ndarray:
    """Indices, after the second cut, of faces created by the first cut that survived it."""
    before = first.mesh.faces[first.new_faces]
    mapped = second.old_to_new[before]
    alive = (mapped >= 0).all(axis=1)
    lookup = {tuple(sorted(f)): i for i, f in enumerate(second.mesh.faces.tolist())}
    out = [lookup.get(tuple(sorted(f))) for f in mapped[alive].tolist()]
    return np.array([i for i in out if i is not None], dtype=np.int64)


def _finish(mesh: IntrinsicMesh, name: str, nonorientable: bool) -> IntrinsicMesh:
    oriented = orientability(mesh)
    if oriented == nonorientable:
        expected, actual = ("non-orientable", "orientable") if nonorientable else ("orientable", "non-orientable")
        raise GluingError(f"{name}: surgery left the surface {actual}, expected {expected}")
    logger.info("Glued %s: chi=%d, orientable=%s", name, euler_char(mesh), oriented)
    return replace(mesh, orientable=oriented, name=name)


def surgery_cuts(base: IntrinsicMesh, spec: GluingSpec) -> list[DiskCut]:
    """The disk removals *spec* asks for: D_eps(p), plus D_eps(q) for a handle."""
    spec.validate()
    if spec.kind == "crosscap":
        return [cut_disk(base, spec.p, spec.eps, spec.n)]
    patch = _patch_index(base, spec.p)
    p_xy = np.asarray(base.flat_patches[patch].chart[spec.p], dtype=float)
    q_xy = p_xy + math.sqrt(spec.eps) * np.array([math.cos(spec.v), math.sin(spec.v)])
    first = cut_disk(base, spec.p, spec.eps, spec.n, patch=patch)
    second = cut_disk(first.mesh, (float(q_xy[0]), float(q_xy[1])), spec.eps, spec.n, patch=patch)
    return [first, second]


def glue(base: IntrinsicMesh, spec: GluingSpec) -> GluedSurface:
    """Full surgery on *base* per *spec*: disk removal(s) then band attachment."""
    cuts = surgery_cuts(base, spec)
    if spec.kind == "crosscap":
        return attach_crosscap(cuts[0], spec, base=base)
    return attach_handle((cuts[0], cuts[1]), spec, base=base)


def refilled_base(base: IntrinsicMesh, spec: GluingSpec) -> tuple[IntrinsicMesh, np.ndarray]:
    """*base* with the surgery disks removed and refilled by flat polar disks.

    Returns the mesh and the base -> refilled vertex map; new vertices come last.
    """
    cuts = surgery_cuts(base, spec)
    mesh = cuts[-1].mesh
    for _ in cuts:
        mesh = refill_disk(mesh, -1)
    return mesh, base_map(base, cuts)


def seam_index_map(glued: GluedSurface, seam: int = -1) -> np.ndarray:
    """Permutation sending band column j to the seam loop index it is glued to."""
    return glued.seams[seam].index_map.copy()


def involution(glued: GluedSurface) -> np.ndarray:
    """Index form of iota on seam loops: p-loop index j <-> q-loop index s - j."""
    if glued.kind != "handle":
        raise GluingError("the reflection involution exists only for handles")
    n = glued.spec.n
    return (glued.spec.reflection_shift - np.arange(n)) % n
