"""Intrinsic triangle meshes: combinatorics plus one length per undirected edge.

No vertex positions are stored. Geometry (angles, areas, cotangent weights)
is recovered from the lengths alone, which is what allows Moebius bands and
other glued, possibly non-orientable, surfaces to be represented.

Face side convention: side ``s`` of face ``(f0, f1, f2)`` is the edge opposite
vertex ``f_s``, i.e. ``(f1, f2)``, ``(f2, f0)`` and ``(f0, f1)``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from surgery_spectra import config

logger = logging.getLogger(__name__)

EdgeKey = tuple[int, int]


@dataclass(frozen=True, eq=False)
class BoundaryLoop:
    """Ordered boundary cycle with angle ``angles[j]`` attached to ``vertices[j]``.

    Loops cut by disk removal also remember the chart ``center`` of the removed
    disk, its ``radius`` and the index of the flat ``patch`` they live in.
    """

    vertices: tuple[int, ...]
    angles: tuple[float, ...]
    center: tuple[float, float] | None = None
    radius: float | None = None
    patch: int | None = None

    def __len__(self) -> int:
        return len(self.vertices)

    def relabel(self, old_to_new: np.ndarray) -> "BoundaryLoop":
        return replace(self, vertices=tuple(int(old_to_new[v]) for v in self.vertices))


@dataclass(frozen=True, eq=False)
class FlatPatch:
    """Region where the metric is exactly Euclidean, with its planar chart.

    ``coords[i]`` is the chart position of ``vertices[i]``; the center vertex
    sits at the origin. Edges between patch vertices have the chart length.
    """

    center: int
    radius: float
    vertices: tuple[int, ...]
    coords: np.ndarray

    @cached_property
    def chart(self) -> dict[int, np.ndarray]:
        return {v: self.coords[i] for i, v in enumerate(self.vertices)}

    def relabel(self, old_to_new: np.ndarray) -> "FlatPatch":
        keep = [i for i, v in enumerate(self.vertices) if old_to_new[v] >= 0]
        return FlatPatch(
            center=int(old_to_new[self.center]) if self.center >= 0 and old_to_new[self.center] >= 0 else -1,
            radius=self.radius,
            vertices=tuple(int(old_to_new[self.vertices[i]]) for i in keep),
            coords=self.coords[keep].copy(),
        )

    def extended(self, vertices: Sequence[int], coords: np.ndarray) -> "FlatPatch":
        return FlatPatch(
            center=self.center,
            radius=self.radius,
            vertices=self.vertices + tuple(int(v) for v in vertices),
            coords=np.vstack([self.coords, np.asarray(coords, dtype=float).reshape(-1, 2)]),
        )


@dataclass(frozen=True)
class Violation:
    """One failed mesh invariant."""

    kind: str
    detail: str
    where: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class IntrinsicMesh:
    """Triangulated surface given by faces and per-edge lengths."""

    vertex_count: int
    faces: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    boundary_loops: tuple[BoundaryLoop, ...] = ()
    flat_patches: tuple[FlatPatch, ...] = ()
    orientable: bool | None = None
    name: str = field(default="mesh")

    @classmethod
    def from_lengths(
        cls,
        vertex_count: int,
        faces: Sequence[Sequence[int]] | np.ndarray,
        lengths: Mapping[EdgeKey, float],
        boundary_loops: Sequence[BoundaryLoop] = (),
        flat_patches: Sequence[FlatPatch] = (),
        orientable: bool | None = None,
        name: str = "mesh",
    ) -> "IntrinsicMesh":
        """Build from a mapping ``{(i, j): length}``; keys are normalized to i < j."""
        normalized: dict[EdgeKey, float] = {}
        for (i, j), length in lengths.items():
            key = (int(i), int(j)) if i < j else (int(j), int(i))
            normalized[key] = float(length)
        keys = sorted(normalized)
        edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
        values = np.array([normalized[k] for k in keys], dtype=float)
        return cls(
            vertex_count=int(vertex_count),
            faces=np.asarray(faces, dtype=np.int64).reshape(-1, 3),
            edges=edges,
            lengths=values,
            boundary_loops=tuple(boundary_loops),
            flat_patches=tuple(flat_patches),
            orientable=orientable,
            name=name,
        )

    @classmethod
    def from_face_lengths(
        cls,
        vertex_count: int,
        faces: np.ndarray,
        face_lengths: np.ndarray,
        **kwargs,
    ) -> "IntrinsicMesh":
        """Build from per-face side lengths (side s opposite vertex s); first face wins."""
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        face_lengths = np.asarray(face_lengths, dtype=float).reshape(-1, 3)
        lengths: dict[EdgeKey, float] = {}
        for f, (a, b, c) in enumerate(faces):
            for key, length in (((b, c), face_lengths[f, 0]), ((c, a), face_lengths[f, 1]), ((a, b), face_lengths[f, 2])):
                key = (int(key[0]), int(key[1])) if key[0] < key[1] else (int(key[1]), int(key[0]))
                lengths.setdefault(key, float(length))
        return cls.from_lengths(vertex_count, faces, lengths, **kwargs)

    # Derived combinatorics -------------------------------------------------

    @property
    def face_count(self) -> int:
        return int(self.faces.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def edge_keys(self) -> np.ndarray:
        return self.edges[:, 0] * self.vertex_count + self.edges[:, 1]

    @cached_property
    def side_vertices(self) -> np.ndarray:
        """(F, 3, 2) endpoints of each face side in traversal order."""
        f = self.faces
        return np.stack(
            [np.stack([f[:, 1], f[:, 2]], axis=1), np.stack([f[:, 2], f[:, 0]], axis=1), np.stack([f[:, 0], f[:, 1]], axis=1)],
            axis=1,
        )

    @cached_property
    def face_edge_index(self) -> np.ndarray:
        """(F, 3) index into ``edges`` of each face side, -1 where no length is stored."""
        ends = self.side_vertices
        lo = np.minimum(ends[..., 0], ends[..., 1])
        hi = np.maximum(ends[..., 0], ends[..., 1])
        keys = lo * self.vertex_count + hi
        if self.edge_count == 0:
            return np.full(keys.shape, -1, dtype=np.int64)
        pos = np.searchsorted(self.edge_keys, keys)
        pos = np.clip(pos, 0, self.edge_count - 1)
        found = self.edge_keys[pos] == keys
        return np.where(found, pos, -1)

    @cached_property
    def face_lengths(self) -> np.ndarray:
        idx = self.face_edge_index
        out = np.where(idx >= 0, self.lengths[np.maximum(idx, 0)], np.nan)
        return out

    @cached_property
    def edge_face_counts(self) -> np.ndarray:
        idx = self.face_edge_index.ravel()
        return np.bincount(idx[idx >= 0], minlength=self.edge_count)

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        return self.edge_face_counts == 1

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.vertex_count, dtype=bool)
        mask[self.edges[self.boundary_edge_mask].ravel()] = True
        return mask

    @cached_property
    def face_areas(self) -> np.ndarray:
        return heron(self.face_lengths)

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        return np.bincount(self.faces.ravel(), weights=np.repeat(self.face_areas / 3.0, 3), minlength=self.vertex_count)

    @cached_property
    def corner_angles(self) -> np.ndarray:
        """(F, 3) interior angle at each face corner, from the law of cosines."""
        a, b, c = self.face_lengths[:, 0], self.face_lengths[:, 1], self.face_lengths[:, 2]
        cos0 = (b * b + c * c - a * a) / (2.0 * b * c)
        cos1 = (c * c + a * a - b * b) / (2.0 * c * a)
        cos2 = (a * a + b * b - c * c) / (2.0 * a * b)
        return np.arccos(np.clip(np.stack([cos0, cos1, cos2], axis=1), -1.0, 1.0))

    @cached_property
    def corner_cotangents(self) -> np.ndarray:
        """(F, 3) cotangent of each corner angle: (b^2 + c^2 - a^2) / (4 area)."""
        sq = self.face_lengths**2
        four_area = 4.0 * self.face_areas[:, None]
        num = np.stack([sq[:, 1] + sq[:, 2] - sq[:, 0], sq[:, 2] + sq[:, 0] - sq[:, 1], sq[:, 0] + sq[:, 1] - sq[:, 2]], axis=1)
        return num / four_area

    def length_of(self, i: int, j: int) -> float:
        key = min(i, j) * self.vertex_count + max(i, j)
        pos = int(np.searchsorted(self.edge_keys, key))
        if pos >= self.edge_count or self.edge_keys[pos] != key:
            raise KeyError((i, j))
        return float(self.lengths[pos])

    def patch_of(self, vertex: int) -> int:
        """Index of the first flat patch whose chart contains *vertex*."""
        for index, patch in enumerate(self.flat_patches):
            if vertex in patch.chart:
                return index
        raise KeyError(vertex)


def heron(side_lengths: np.ndarray) -> np.ndarray:
    """Triangle areas from (F, 3) side lengths, using the cancellation-safe form."""
    s = np.sort(np.asarray(side_lengths, dtype=float), axis=1)[:, ::-1]
    a, b, c = s[:, 0], s[:, 1], s[:, 2]
    prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(prod, 0.0))


def validate(mesh: IntrinsicMesh) -> list[Violation]:
    """Return every violated mesh invariant; an empty list means the mesh is valid."""
    violations: list[Violation] = []
    faces = mesh.faces
    V = mesh.vertex_count

    bad_index = np.where((faces < 0).any(axis=1) | (faces >= V).any(axis=1))[0]
    for f in bad_index:
        violations.append(Violation("index", f"face {f} references a vertex outside [0, {V})", (int(f),)))
    if len(bad_index):
        return violations

    repeated = np.where((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2]))[0]
    for f in repeated:
        violations.append(Violation("degenerate_face", f"face {f} repeats a vertex", (int(f),)))

    bad_length = np.where(~np.isfinite(mesh.lengths) | (mesh.lengths <= 0))[0]
    for e in bad_length:
        i, j = mesh.edges[e]
        violations.append(Violation("length", f"edge ({i}, {j}) has non-positive length {mesh.lengths[e]!r}", (int(i), int(j))))

    missing = np.argwhere(mesh.face_edge_index < 0)
    for f, s in missing:
        i, j = mesh.side_vertices[f, s]
        violations.append(Violation("missing_edge", f"face {f} side ({i}, {j}) has no length", (int(f),)))
    if len(missing) or len(repeated):
        return violations

    L = mesh.face_lengths
    for s in range(3):
        others = L[:, (s + 1) % 3] + L[:, (s + 2) % 3]
        for f in np.where(L[:, s] >= others)[0]:
            violations.append(
                Violation("triangle_inequality", f"face {f}: side {s} length {L[f, s]!r} >= {others[f]!r}", (int(f),))
            )

    counts = mesh.edge_face_counts
    for e in np.where(counts > 2)[0]:
        i, j = mesh.edges[e]
        violations.append(Violation("manifold", f"edge ({i}, {j}) shared by {counts[e]} faces", (int(i), int(j))))
    for e in np.where(counts == 0)[0]:
        i, j = mesh.edges[e]
        violations.append(Violation("dangling_edge", f"edge ({i}, {j}) belongs to no face", (int(i), int(j))))

    used = np.zeros(V, dtype=bool)
    used[faces.ravel()] = True
    for v in np.where(~used)[0]:
        violations.append(Violation("isolated_vertex", f"vertex {v} belongs to no face", (int(v),)))

    violations.extend(_check_boundary_loops(mesh))
    if not violations:
        violations.extend(_check_flat_patches(mesh))
    return violations


def _check_boundary_loops(mesh: IntrinsicMesh) -> list[Violation]:
    out: list[Violation] = []
    boundary = {tuple(e) for e in mesh.edges[mesh.boundary_edge_mask].tolist()}
    covered: set[tuple[int, int]] = set()
    for index, loop in enumerate(mesh.boundary_loops):
        if len(loop.angles) != len(loop.vertices):
            out.append(Violation("boundary_loop", f"loop {index} has mismatched angle count", (index,)))
        n = len(loop.vertices)
        for j in range(n):
            a, b = loop.vertices[j], loop.vertices[(j + 1) % n]
            key = (min(a, b), max(a, b))
            if key not in boundary:
                out.append(Violation("boundary_loop", f"loop {index} step ({a}, {b}) is not a boundary edge", (index,)))
            covered.add(key)
    for key in sorted(boundary - covered):
        out.append(Violation("boundary_loop", f"boundary edge {key} is not on any declared loop", key))
    return out


def _check_flat_patches(mesh: IntrinsicMesh) -> list[Violation]:
    out: list[Violation] = []
    if not mesh.flat_patches:
        return out
    angle_sum = np.bincount(mesh.faces.ravel(), weights=mesh.corner_angles.ravel(), minlength=mesh.vertex_count)
    for index, patch in enumerate(mesh.flat_patches):
        inside = np.zeros(mesh.vertex_count, dtype=bool)
        inside[list(patch.vertices)] = True
        face_inside = inside[mesh.faces].all(axis=1)
        # a vertex is interior to the patch when all of its faces are
        touches_outside = np.zeros(mesh.vertex_count, dtype=bool)
        touches_outside[mesh.faces[~face_inside].ravel()] = True
        interior = inside & ~touches_outside & ~mesh.boundary_vertices
        for v in np.where(interior & (np.abs(angle_sum - 2.0 * np.pi) > config.FLAT_ANGLE_TOL))[0]:
            out.append(
                Violation("flat_patch", f"patch {index}: angle sum at vertex {v} is {angle_sum[v]!r}", (index, int(v)))
            )
    return out


def euler_char(mesh: IntrinsicMesh) -> int:
    """V - E + F, counting only edges used by faces."""
    used_edges = int(np.count_nonzero(mesh.edge_face_counts))
    return mesh.vertex_count - used_edges + mesh.face_count


def orientability(mesh: IntrinsicMesh) -> bool:
    """True if the faces admit a consistent orientation (each component separately)."""
    sides = mesh.side_vertices.reshape(-1, 2)
    edge_of_side = mesh.face_edge_index.ravel()
    direction = np.where(sides[:, 0] < sides[:, 1], 1, -1)
    face_of_side = np.repeat(np.arange(mesh.face_count), 3)

    order = np.argsort(edge_of_side, kind="stable")
    neighbors: list[list[tuple[int, int]]] = [[] for _ in range(mesh.face_count)]
    sorted_edges = edge_of_side[order]
    start = 0
    while start < len(order):
        stop = start
        while stop < len(order) and sorted_edges[stop] == sorted_edges[start]:
            stop += 1
        if stop - start == 2:
            s1, s2 = order[start], order[start + 1]
            f1, f2 = face_of_side[s1], face_of_side[s2]
            # consistent orientation needs opposite traversal of the shared edge
            relation = -int(direction[s1] * direction[s2])
            neighbors[f1].append((f2, relation))
            neighbors[f2].append((f1, relation))
        start = stop

    sign = np.zeros(mesh.face_count, dtype=np.int8)
    for seed in range(mesh.face_count):
        if sign[seed]:
            continue
        sign[seed] = 1
        queue = deque([seed])
        while queue:
            f = queue.popleft()
            for g, relation in neighbors[f]:
                wanted = sign[f] * relation
                if sign[g] == 0:
                    sign[g] = wanted
                    queue.append(g)
                elif sign[g] != wanted:
                    logger.debug("Orientation conflict between faces %d and %d", f, g)
                    return False
    return True


def components(mesh: IntrinsicMesh) -> tuple[int, np.ndarray]:
    """Number of connected components and the per-vertex component label."""
    e = mesh.edges[mesh.edge_face_counts > 0]
    adjacency = sparse.coo_matrix(
        (np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(mesh.vertex_count, mesh.vertex_count)
    )
    count, labels = connected_components(adjacency, directed=False)
    return int(count), labels


def area(mesh: IntrinsicMesh, rho: np.ndarray | None = None) -> float:
    """Sum over faces of Heron area times the face-averaged density."""
    if rho is None:
        return float(mesh.face_areas.sum())
    rho = np.asarray(rho, dtype=float)
    return float(np.dot(mesh.face_areas, rho[mesh.faces].mean(axis=1)))


def check_density(mesh: IntrinsicMesh, rho: np.ndarray) -> np.ndarray:
    """Return *rho* as a float array after checking shape and sign."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (mesh.vertex_count,):
        raise ValueError(f"density has shape {rho.shape}, expected ({mesh.vertex_count},)")
    if not np.all(np.isfinite(rho)) or (rho < 0).any():
        raise ValueError("density must be finite and nonnegative")
    return rho


def disjoint_union(first: IntrinsicMesh, second: IntrinsicMesh) -> IntrinsicMesh:
    """Place two meshes side by side in one vertex numbering."""
    offset = first.vertex_count
    shifted = np.arange(second.vertex_count, dtype=np.int64) + offset
    return IntrinsicMesh(
        vertex_count=first.vertex_count + second.vertex_count,
        faces=np.vstack([first.faces, second.faces + offset]),
        edges=np.vstack([first.edges, second.edges + offset]),
        lengths=np.concatenate([first.lengths, second.lengths]),
        boundary_loops=first.boundary_loops + tuple(loop.relabel(shifted) for loop in second.boundary_loops),
        flat_patches=first.flat_patches + tuple(p.relabel(shifted) for p in second.flat_patches),
        orientable=None,
        name=f"{first.name}+{second.name}",
    )


def compact(mesh: IntrinsicMesh, keep_faces: np.ndarray, **changes) -> tuple[IntrinsicMesh, np.ndarray]:
    """Drop faces not in *keep_faces* plus unreferenced vertices and edges.

    Returns the new mesh and the old-to-new vertex map (-1 for dropped vertices).
    """
    faces = mesh.faces[keep_faces]
    used = np.zeros(mesh.vertex_count, dtype=bool)
    used[faces.ravel()] = True
    old_to_new = np.full(mesh.vertex_count, -1, dtype=np.int64)
    old_to_new[used] = np.arange(int(used.sum()))
    used_edge = mesh.face_edge_index[keep_faces].ravel()
    keep_edges = np.zeros(mesh.edge_count, dtype=bool)
    keep_edges[used_edge[used_edge >= 0]] = True
    edges = old_to_new[mesh.edges[keep_edges]]
    swap = edges[:, 0] > edges[:, 1]
    edges[swap] = edges[swap][:, ::-1]
    lengths = mesh.lengths[keep_edges]
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    loops = tuple(loop.relabel(old_to_new) for loop in mesh.boundary_loops)
    patches = tuple(p.relabel(old_to_new) for p in mesh.flat_patches)
    new = IntrinsicMesh(
        vertex_count=int(used.sum()),
        faces=old_to_new[faces],
        edges=edges[order],
        lengths=lengths[order],
        boundary_loops=changes.pop("boundary_loops", loops),
        flat_patches=changes.pop("flat_patches", patches),
        orientable=changes.pop("orientable", mesh.orientable),
        name=changes.pop("name", mesh.name),
    )
    return new, old_to_new


def append_faces(
    mesh: IntrinsicMesh,
    new_vertex_count: int,
    faces: np.ndarray,
    lengths: Mapping[EdgeKey, float],
    **changes,
) -> IntrinsicMesh:
    """Add vertices, faces and edge lengths; lengths of existing edges are kept."""
    merged: dict[EdgeKey, float] = {(int(i), int(j)): float(l) for (i, j), l in zip(mesh.edges.tolist(), mesh.lengths)}
    for (i, j), length in lengths.items():
        key = (int(i), int(j)) if i < j else (int(j), int(i))
        merged.setdefault(key, float(length))
    return IntrinsicMesh.from_lengths(
        mesh.vertex_count + new_vertex_count,
        np.vstack([mesh.faces, np.asarray(faces, dtype=np.int64).reshape(-1, 3)]),
        merged,
        boundary_loops=changes.pop("boundary_loops", mesh.boundary_loops),
        flat_patches=changes.pop("flat_patches", mesh.flat_patches),
        orientable=changes.pop("orientable", None),
        name=changes.pop("name", mesh.name),
    )
