"""Nearest-point queries between points and triangulated surfaces.

Distances are compared in squared form internally; square roots are taken
only at API boundaries. Ties between equidistant triangles or vertices are
broken toward the smallest index so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, QueryError
from .mesh import TriSurface

_DEGENERATE_AREA_TOL = 1e-12  # mm^2


@dataclass(frozen=True)
class ClosestPointResult:
    point: np.ndarray
    distance: float
    triangle: int
    barycentric: np.ndarray


def closest_points_pairwise(queries: np.ndarray, tri_corners: np.ndarray):
    """Closest point of query i on triangle i, vectorized over rows.

    Args:
        queries: (N, 3) points.
        tri_corners: (N, 3, 3) triangle corners.

    Returns:
        (points (N, 3), squared distances (N,), barycentric (N, 3)).

    Region classification follows the standard Voronoi-region walk over
    vertices, edges, and face interior.
    """
    q = np.asarray(queries, dtype=np.float64)
    t = np.asarray(tri_corners, dtype=np.float64)
    a, b, c = t[:, 0], t[:, 1], t[:, 2]

    result = np.zeros_like(q)
    bary = np.zeros_like(q)
    remain = np.ones(len(q), dtype=bool)

    ab = b - a
    ac = c - a
    ap = q - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)

    is_a = (d1 <= 0.0) & (d2 <= 0.0)
    result[is_a] = a[is_a]
    bary[is_a] = (1.0, 0.0, 0.0)
    remain &= ~is_a

    bp = q - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    is_b = (d3 >= 0.0) & (d4 <= d3) & remain
    result[is_b] = b[is_b]
    bary[is_b] = (0.0, 1.0, 0.0)
    remain &= ~is_b

    vc = d1 * d4 - d3 * d2
    is_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0) & remain
    if is_ab.any():
        v = d1[is_ab] / (d1[is_ab] - d3[is_ab])
        result[is_ab] = a[is_ab] + v[:, None] * ab[is_ab]
        bary[is_ab, 0] = 1.0 - v
        bary[is_ab, 1] = v
    remain &= ~is_ab

    cp = q - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    is_c = (d6 >= 0.0) & (d5 <= d6) & remain
    result[is_c] = c[is_c]
    bary[is_c] = (0.0, 0.0, 1.0)
    remain &= ~is_c

    vb = d5 * d2 - d1 * d6
    is_ac = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0) & remain
    if is_ac.any():
        w = d2[is_ac] / (d2[is_ac] - d6[is_ac])
        result[is_ac] = a[is_ac] + w[:, None] * ac[is_ac]
        bary[is_ac, 0] = 1.0 - w
        bary[is_ac, 2] = w
    remain &= ~is_ac

    va = d3 * d6 - d5 * d4
    is_bc = (
        (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0) & remain
    )
    if is_bc.any():
        w = (d4[is_bc] - d3[is_bc]) / (
            (d4[is_bc] - d3[is_bc]) + (d5[is_bc] - d6[is_bc])
        )
        result[is_bc] = b[is_bc] + w[:, None] * (c[is_bc] - b[is_bc])
        bary[is_bc, 1] = 1.0 - w
        bary[is_bc, 2] = w
    remain &= ~is_bc

    if remain.any():
        denom = va[remain] + vb[remain] + vc[remain]
        v = vb[remain] / denom
        w = vc[remain] / denom
        result[remain] = a[remain] + v[:, None] * ab[remain] + w[:, None] * ac[remain]
        bary[remain, 0] = 1.0 - v - w
        bary[remain, 1] = v
        bary[remain, 2] = w

    diff = q - result
    d2_out = np.einsum("ij,ij->i", diff, diff)
    return result, d2_out, bary


def _check_triangle(a, b, c):
    area2 = np.linalg.norm(np.cross(b - a, c - a))
    if area2 * 0.5 <= _DEGENERATE_AREA_TOL:
        raise GeometryError("degenerate (zero-area) triangle")


def closest_point_on_triangle(q, a, b, c, triangle_index: int = -1) -> ClosestPointResult:
    """Exact closest point of q on the closed triangle (a, b, c)."""
    q = np.asarray(q, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    _check_triangle(a, b, c)
    pts, d2, bary = closest_points_pairwise(
        q[None, :], np.stack([a, b, c])[None, :, :]
    )
    return ClosestPointResult(
        point=pts[0],
        distance=float(np.sqrt(d2[0])),
        triangle=triangle_index,
        barycentric=bary[0],
    )


def nearest_vertex(q, points) -> tuple:
    """(index, distance) of the nearest point; ties go to the smallest index."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise QueryError("nearest_vertex on an empty point list")
    diff = points - np.asarray(q, dtype=np.float64)
    d2 = np.einsum("ij,ij->i", diff, diff)
    idx = int(np.argmin(d2))
    return idx, float(np.sqrt(d2[idx]))


def nearest_vertices(queries, points, chunk: int = 256):
    """Batched nearest_vertex. Returns (indices (N,), distances (N,))."""
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise QueryError("nearest_vertices on an empty point list")
    idx = np.empty(len(queries), dtype=np.int64)
    dist = np.empty(len(queries), dtype=np.float64)
    p2 = np.einsum("ij,ij->i", points, points)
    for s in range(0, len(queries), chunk):
        qc = queries[s : s + chunk]
        # |q - p|^2 = |q|^2 - 2 q.p + |p|^2; argmin is first occurrence.
        d2 = (
            np.einsum("ij,ij->i", qc, qc)[:, None]
            - 2.0 * qc @ points.T
            + p2[None, :]
        )
        loc = np.argmin(d2, axis=1)
        idx[s : s + chunk] = loc
        drow = d2[np.arange(len(qc)), loc]
        dist[s : s + chunk] = np.sqrt(np.maximum(drow, 0.0))
    return idx, dist


class SurfaceIndex:
    """Axis-aligned BVH over the triangles of a TriSurface.

    Median split along the longest box axis, fixed leaf size. The index is
    immutable after construction and safe for concurrent queries.
    """

    def __init__(self, surface: TriSurface, leaf_size: int = 8):
        if surface.n_triangles == 0:
            raise QueryError("cannot index an empty surface")
        self.surface = surface
        self.leaf_size = int(leaf_size)
        tris = surface.triangles
        self._corners = surface.vertices[tris]  # (T, 3, 3)
        lo = self._corners.min(axis=1)
        hi = self._corners.max(axis=1)
        centroids = self._corners.mean(axis=1)

        order = np.arange(len(tris))
        node_lo, node_hi = [], []
        node_left, node_right = [], []
        node_start, node_count = [], []

        def new_node():
            node_lo.append(None)
            node_hi.append(None)
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(-1)
            node_count.append(0)
            return len(node_lo) - 1

        root = new_node()
        stack = [(root, 0, len(tris))]
        while stack:
            node, s, e = stack.pop()
            sel = order[s:e]
            node_lo[node] = lo[sel].min(axis=0)
            node_hi[node] = hi[sel].max(axis=0)
            if e - s <= self.leaf_size:
                node_start[node] = s
                node_count[node] = e - s
                continue
            span = node_hi[node] - node_lo[node]
            axis = int(np.argmax(span))
            keys = centroids[sel, axis]
            local = np.argsort(keys, kind="stable")
            order[s:e] = sel[local]
            mid = s + (e - s) // 2
            left, right = new_node(), new_node()
            node_left[node] = left
            node_right[node] = right
            stack.append((left, s, mid))
            stack.append((right, mid, e))

        self._order = order
        self._node_lo = np.asarray(node_lo)
        self._node_hi = np.asarray(node_hi)
        self._node_left = np.asarray(node_left, dtype=np.int64)
        self._node_right = np.asarray(node_right, dtype=np.int64)
        self._node_start = np.asarray(node_start, dtype=np.int64)
        self._node_count = np.asarray(node_count, dtype=np.int64)

    def _box_d2(self, node: int, q: np.ndarray) -> float:
        d = np.maximum(self._node_lo[node] - q, 0.0) + np.maximum(
            q - self._node_hi[node], 0.0
        )
        return float(d @ d)

    def nearest(self, q) -> ClosestPointResult:
        """Globally nearest surface point to q (exact)."""
        q = np.asarray(q, dtype=np.float64)
        best_d2 = np.inf
        best_tri = -1
        best_point = None
        best_bary = None

        stack = [0]
        while stack:
            node = stack.pop()
            if self._box_d2(node, q) > best_d2:
                continue
            if self._node_count[node] > 0:
                s = self._node_start[node]
                sel = self._order[s : s + self._node_count[node]]
                pts, d2, bary = closest_points_pairwise(
                    np.broadcast_to(q, (len(sel), 3)), self._corners[sel]
                )
                for k in np.argsort(d2, kind="stable"):
                    tk = int(sel[k])
                    if d2[k] < best_d2 or (d2[k] == best_d2 and tk < best_tri):
                        best_d2 = d2[k]
                        best_tri = tk
                        best_point = pts[k]
                        best_bary = bary[k]
                continue
            left, right = self._node_left[node], self._node_right[node]
            dl, dr = self._box_d2(left, q), self._box_d2(right, q)
            # Visit the nearer child first (pushed last).
            if dl <= dr:
                stack.append(right)
                stack.append(left)
            else:
                stack.append(left)
                stack.append(right)

        return ClosestPointResult(
            point=best_point,
            distance=float(np.sqrt(best_d2)),
            triangle=best_tri,
            barycentric=best_bary,
        )


def nearest_on_surface(q, index: SurfaceIndex) -> ClosestPointResult:
    """Globally minimal-distance point of q on the indexed surface."""
    return index.nearest(q)


def nearest_on_surface_brute(q, surface: TriSurface) -> ClosestPointResult:
    """Linear scan over every triangle; the reference for the BVH."""
    if surface.n_triangles == 0:
        raise QueryError("empty surface")
    q = np.asarray(q, dtype=np.float64)
    corners = surface.vertices[surface.triangles]
    pts, d2, bary = closest_points_pairwise(
        np.broadcast_to(q, (len(corners), 3)), corners
    )
    idx = int(np.argmin(d2))
    return ClosestPointResult(
        point=pts[idx],
        distance=float(np.sqrt(d2[idx])),
        triangle=idx,
        barycentric=bary[idx],
    )


def project_points(points, index: SurfaceIndex):
    """Project each point onto the surface.

    Returns (projected (N, 3), distances (N,), triangle ids (N,)).
    """
    points = np.asarray(points, dtype=np.float64)
    out = np.empty_like(points)
    dist = np.empty(len(points))
    tris = np.empty(len(points), dtype=np.int64)
    for i, p in enumerate(points):
        r = index.nearest(p)
        out[i] = r.point
        dist[i] = r.distance
        tris[i] = r.triangle
    return out, dist, tris
