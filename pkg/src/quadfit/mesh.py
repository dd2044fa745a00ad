"""Quad-mesh and tri-surface data model, topology queries, validation.

Conventions:
  - Coordinates are millimetres, float64.
  - Quads are counter-clockwise when viewed from the outward-normal side;
    the quad normal is the normalized cross product of its diagonals.
  - Named boundary loops are vertex paths; closed loops repeat the first
    vertex at the end of the sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GeometryError,
    MeshValidationError,
    ShapeMismatchError,
    TopologyError,
)

COMPONENT_LABELS = ("wall", "leaflet0", "leaflet1", "leaflet2")
LANDMARK_NAMES = ("H0", "H1", "H2", "C01", "C12", "C20")

_TRI_AREA_TOL = 1e-12  # mm^2
_NORMAL_UNIT_TOL = 1e-9


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class QuadMesh:
    """Structured quadrilateral surface mesh with labels and landmarks.

    Fields:
        vertices: (V, 3) float positions in mm.
        quads: (Q, 4) vertex indices, CCW winding.
        component_labels: (Q,) string labels (see COMPONENT_LABELS).
        boundary_loops: name -> ordered vertex-index path; a closed loop
            repeats its first vertex at the end.
        landmarks: landmark name -> vertex index.

    Instances are immutable after construction; use ``with_vertices`` to
    produce a deformed copy sharing the topology arrays.
    """

    vertices: np.ndarray
    quads: np.ndarray
    component_labels: np.ndarray
    boundary_loops: dict = field(default_factory=dict)
    landmarks: dict = field(default_factory=dict)

    def __post_init__(self):
        verts = _freeze(np.ascontiguousarray(self.vertices, dtype=np.float64))
        quads = _freeze(np.ascontiguousarray(self.quads, dtype=np.int64))
        labels = np.asarray(self.component_labels)
        if labels.shape != (len(quads),):
            labels = np.asarray(list(self.component_labels))
        labels = _freeze(labels)
        loops = {
            str(k): _freeze(np.ascontiguousarray(v, dtype=np.int64))
            for k, v in self.boundary_loops.items()
        }
        marks = {str(k): int(v) for k, v in self.landmarks.items()}
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "quads", quads)
        object.__setattr__(self, "component_labels", labels)
        object.__setattr__(self, "boundary_loops", loops)
        object.__setattr__(self, "landmarks", marks)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_quads(self) -> int:
        return len(self.quads)

    def with_vertices(self, vertices: np.ndarray) -> "QuadMesh":
        """Copy with new vertex positions and identical topology."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise ShapeMismatchError(
                f"expected vertices of shape {self.vertices.shape}, "
                f"got {vertices.shape}"
            )
        return QuadMesh(
            vertices=vertices.copy(),
            quads=self.quads,
            component_labels=self.component_labels,
            boundary_loops=dict(self.boundary_loops),
            landmarks=dict(self.landmarks),
        )

    def same_topology(self, other: "QuadMesh") -> bool:
        """True when quads, labels, loops, and landmarks all match."""
        if self.quads.shape != other.quads.shape:
            return False
        if not np.array_equal(self.quads, other.quads):
            return False
        if not np.array_equal(self.component_labels, other.component_labels):
            return False
        if self.landmarks != other.landmarks:
            return False
        if set(self.boundary_loops) != set(other.boundary_loops):
            return False
        return all(
            np.array_equal(self.boundary_loops[k], other.boundary_loops[k])
            for k in self.boundary_loops
        )

    def quad_normals(self) -> np.ndarray:
        """(Q, 3) unit normals from the normalized cross of diagonals."""
        c = self.vertices[self.quads]
        n = np.cross(c[:, 2] - c[:, 0], c[:, 3] - c[:, 1])
        lens = np.linalg.norm(n, axis=1)
        safe = np.where(lens > 0, lens, 1.0)
        return n / safe[:, None]

    def region_vertex_indices(self, region: str) -> np.ndarray:
        """Sorted vertex indices incident to at least one quad of `region`.

        ``whole`` is the union over all labels. Seam vertices belong to
        every region they touch.
        """
        if region == "whole":
            mask = np.ones(self.n_quads, dtype=bool)
        else:
            mask = self.component_labels == region
        if not mask.any():
            return np.empty(0, dtype=np.int64)
        return np.unique(self.quads[mask])


@dataclass(frozen=True)
class TriSurface:
    """Target triangulated surface, optionally with unit vertex normals."""

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        verts = _freeze(np.ascontiguousarray(self.vertices, dtype=np.float64))
        tris = _freeze(np.ascontiguousarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        if len(tris) and (tris.min() < 0 or tris.max() >= len(verts)):
            raise GeometryError("triangle index out of range")
        if len(tris):
            p = verts[tris]
            areas = 0.5 * np.linalg.norm(
                np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1
            )
            bad = np.nonzero(areas <= _TRI_AREA_TOL)[0]
            if len(bad):
                raise GeometryError(
                    f"{len(bad)} degenerate triangle(s), first at index {bad[0]}"
                )
        if self.vertex_normals is not None:
            normals = _freeze(
                np.ascontiguousarray(self.vertex_normals, dtype=np.float64)
            )
            if normals.shape != verts.shape:
                raise GeometryError("vertex_normals shape must match vertices")
            lens = np.linalg.norm(normals, axis=1)
            if np.any(np.abs(lens - 1.0) > _NORMAL_UNIT_TOL):
                raise GeometryError("vertex normals must be unit length")
            object.__setattr__(self, "vertex_normals", normals)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


@dataclass(frozen=True)
class AdjacencyTable:
    """Edge-connected vertex neighborhoods plus boundary flags.

    ``edge_src``/``edge_dst`` hold every directed edge once (both
    directions present), sorted by (src, dst) for reproducible reductions.
    """

    neighbors: tuple
    boundary: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    degree: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.boundary)


def _quad_directed_edges(quads: np.ndarray) -> np.ndarray:
    """(4Q, 2) directed edges in winding order."""
    rolled = np.roll(quads, -1, axis=1)
    return np.stack([quads.ravel(), rolled.ravel()], axis=1)


def _edge_quad_incidence(quads: np.ndarray):
    """Map unordered edge -> list of (quad index, directed as (u, v))."""
    incidence = {}
    for qi, quad in enumerate(quads):
        for k in range(4):
            u, v = int(quad[k]), int(quad[(k + 1) % 4])
            key = (u, v) if u < v else (v, u)
            incidence.setdefault(key, []).append((qi, (u, v)))
    return incidence


def validate(mesh: QuadMesh) -> list:
    """Return the list of invariant violations; empty iff the mesh is valid."""
    violations = []
    nv = mesh.n_vertices
    quads = mesh.quads

    if len(quads) and (quads.min() < 0 or quads.max() >= nv):
        bad = np.nonzero((quads < 0) | (quads >= nv))
        violations.append(
            f"quad {bad[0][0]} references out-of-range vertex index {quads[bad][0]}"
        )
        # Index errors poison every downstream check.
        return violations

    repeats = np.array(
        [len(set(q.tolist())) != 4 for q in quads], dtype=bool
    )
    for qi in np.nonzero(repeats)[0]:
        violations.append(f"quad {qi} repeats a vertex")

    incidence = _edge_quad_incidence(quads)
    boundary_edges = set()
    for key, users in incidence.items():
        if len(users) == 1:
            boundary_edges.add(key)
        elif len(users) == 2:
            d0, d1 = users[0][1], users[1][1]
            if d0 == d1:
                violations.append(
                    f"edge {key} traversed in the same direction by quads "
                    f"{users[0][0]} and {users[1][0]} (inconsistent winding)"
                )
        else:
            violations.append(
                f"edge {key} shared by {len(users)} quads (non-manifold)"
            )

    for name, idx in mesh.landmarks.items():
        if not 0 <= idx < nv:
            violations.append(f"landmark {name} index {idx} out of range")

    covered = []
    for name, seq in mesh.boundary_loops.items():
        if len(seq) and (seq.min() < 0 or seq.max() >= nv):
            violations.append(f"boundary loop {name} has out-of-range index")
            continue
        for a, b in zip(seq[:-1], seq[1:]):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            covered.append((name, key))
    covered_keys = [k for _, k in covered]
    covered_set = set(covered_keys)
    if len(covered_keys) != len(covered_set):
        violations.append("boundary loops cover some edge more than once")
    for name, key in covered:
        if key not in boundary_edges:
            violations.append(
                f"boundary loop {name} uses non-boundary edge {key}"
            )
            break
    missing = boundary_edges - covered_set
    if missing:
        violations.append(
            f"{len(missing)} boundary edge(s) not covered by any named loop"
        )
    return violations


def require_valid(mesh: QuadMesh) -> None:
    violations = validate(mesh)
    if violations:
        raise MeshValidationError(violations)


def build_adjacency(mesh: QuadMesh) -> AdjacencyTable:
    """Edge-connected neighbor table of a valid quad mesh."""
    require_valid(mesh)
    nv = mesh.n_vertices
    directed = _quad_directed_edges(mesh.quads)
    lo = np.minimum(directed[:, 0], directed[:, 1])
    hi = np.maximum(directed[:, 0], directed[:, 1])
    undirected, counts = np.unique(
        np.stack([lo, hi], axis=1), axis=0, return_counts=True
    )

    both = np.concatenate([undirected, undirected[:, ::-1]], axis=0)
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    edge_src, edge_dst = both[:, 0].copy(), both[:, 1].copy()

    degree = np.bincount(edge_src, minlength=nv).astype(np.int64)
    neighbors = tuple(
        np.split(edge_dst, np.cumsum(degree)[:-1])
    )

    boundary = np.zeros(nv, dtype=bool)
    rim = undirected[counts == 1]
    boundary[rim.ravel()] = True

    return AdjacencyTable(
        neighbors=neighbors,
        boundary=_freeze(boundary),
        edge_src=_freeze(edge_src),
        edge_dst=_freeze(edge_dst),
        degree=_freeze(degree),
    )


def extract_boundary_loops(mesh: QuadMesh) -> list:
    """Maximal boundary cycles, ordered consistently with quad winding.

    Each cycle is returned as a vertex-index array starting at its
    smallest vertex index, without repeating the start at the end.
    """
    incidence = _edge_quad_incidence(mesh.quads)
    outgoing = {}
    for key, users in incidence.items():
        if len(users) > 2:
            raise TopologyError(f"non-manifold edge {key}")
        if len(users) == 1:
            u, v = users[0][1]
            if u in outgoing:
                raise TopologyError(
                    f"boundary branches at vertex {u} (non-manifold vertex)"
                )
            outgoing[u] = v

    loops = []
    visited = set()
    for start in sorted(outgoing):
        if start in visited:
            continue
        cycle = [start]
        visited.add(start)
        cur = outgoing[start]
        while cur != start:
            if cur in visited or cur not in outgoing:
                raise TopologyError(
                    f"boundary walk from vertex {start} did not close"
                )
            cycle.append(cur)
            visited.add(cur)
            cur = outgoing[cur]
        loops.append(np.asarray(cycle, dtype=np.int64))
    return loops


def boundary_vertex_flags(mesh: QuadMesh) -> np.ndarray:
    """(V,) bool flags for vertices on any boundary edge."""
    return build_adjacency(mesh).boundary


def mean_edge_length(vertices: np.ndarray, adj: AdjacencyTable) -> float:
    d = vertices[adj.edge_src] - vertices[adj.edge_dst]
    return float(np.mean(np.linalg.norm(d, axis=1)))
