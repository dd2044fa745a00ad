"""Deterministic generators for templates, test meshes, and warped targets.

The valve-like template is a topological stand-in, not anatomical truth:
a cylindrical wall whose lower rim follows a scalloped crown curve, with
three half-disc leaflet patches attached along the crown arcs. Leaflets
share the crown vertices with the wall, so every crown edge is an interior
manifold seam (one wall quad, one leaflet quad). The exposed boundary is
the flat top ring plus the three chained leaflet free edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import BoundaryConstraint, BoundaryConstraintSet
from .errors import ConfigurationError, GeometryError
from .mesh import QuadMesh, TriSurface

WARP_KINDS = ("identity", "radial-bulge", "axial-twist", "anisotropic-scale", "composite")

# Documented bijectivity ranges per warp kind.
MAX_BULGE_AMPLITUDE = 0.3
MAX_TWIST_RADIANS = 0.6
SCALE_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class TemplateSpec:
    """Parameters of the synthetic valve template.

    ``leaflet_angular`` must equal ``n_circumferential // 3`` (each leaflet
    attaches along one third of the crown) and be even so the crown nadir
    lands on a vertex.
    """

    radius: float = 12.0
    height: float = 16.0
    n_circumferential: int = 30
    n_axial: int = 5
    leaflet_radial: int = 3
    leaflet_angular: int = 10
    hinge_height_frac: float = 0.2
    commissure_height_frac: float = 0.55
    shoulder_radius_frac: float = 0.7
    center_radius_frac: float = 0.15
    sag_frac: float = 0.15

    def validate(self) -> None:
        if self.radius <= 0 or self.height <= 0:
            raise ConfigurationError("radius and height must be positive")
        if self.n_circumferential < 12 or self.n_circumferential % 6 != 0:
            raise ConfigurationError(
                "n_circumferential must be >= 12 and divisible by 6"
            )
        if self.n_axial < 3 or self.leaflet_radial < 3:
            raise ConfigurationError("axial and radial counts must be >= 3")
        if self.leaflet_angular != self.n_circumferential // 3:
            raise ConfigurationError(
                "leaflet_angular must equal n_circumferential // 3"
            )
        if not 0 < self.hinge_height_frac < self.commissure_height_frac < 1:
            raise ConfigurationError(
                "need 0 < hinge_height_frac < commissure_height_frac < 1"
            )
        if not 0 < self.center_radius_frac < self.shoulder_radius_frac < 1:
            raise ConfigurationError(
                "need 0 < center_radius_frac < shoulder_radius_frac < 1"
            )


@dataclass(frozen=True)
class WarpSpec:
    """Closed-form C1 warp of the template's bounding region.

    ``amplitude`` means: relative radial gain for radial-bulge, total twist
    in radians for axial-twist, overall strength in (0, 1] for composite.
    Anisotropic scale uses ``scale`` directly.
    """

    kind: str = "radial-bulge"
    amplitude: float = 0.1
    scale: tuple = (1.0, 1.0, 1.0)
    center_frac: float = 0.5
    width_frac: float = 0.25
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in WARP_KINDS:
            raise ConfigurationError(f"unknown warp kind '{self.kind}'")
        if self.kind == "radial-bulge" and abs(self.amplitude) > MAX_BULGE_AMPLITUDE:
            raise ConfigurationError(
                f"radial-bulge amplitude outside ±{MAX_BULGE_AMPLITUDE}"
            )
        if self.kind == "axial-twist" and abs(self.amplitude) > MAX_TWIST_RADIANS:
            raise ConfigurationError(
                f"axial-twist amplitude outside ±{MAX_TWIST_RADIANS} rad"
            )
        if self.kind == "anisotropic-scale":
            lo, hi = SCALE_RANGE
            if any(not lo <= s <= hi for s in self.scale):
                raise ConfigurationError(f"scale factors outside [{lo}, {hi}]")
        if self.kind == "composite" and not 0 < self.amplitude <= 1.0:
            raise ConfigurationError("composite amplitude must be in (0, 1]")


def gen_grid(nx: int, ny: int, spacing: float = 1.0) -> QuadMesh:
    """Planar nx-by-ny quad grid in the z = 0 plane, used by tests."""
    xs = np.arange(nx + 1) * spacing
    ys = np.arange(ny + 1) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    verts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    quads = [
        [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
        for j in range(ny)
        for i in range(nx)
    ]
    rim = (
        [vid(i, 0) for i in range(nx + 1)]
        + [vid(nx, j) for j in range(1, ny + 1)]
        + [vid(i, ny) for i in range(nx - 1, -1, -1)]
        + [vid(0, j) for j in range(ny - 1, 0, -1)]
        + [vid(0, 0)]
    )
    return QuadMesh(
        vertices=verts,
        quads=np.asarray(quads),
        component_labels=np.full(len(quads), "wall"),
        boundary_loops={"rim": np.asarray(rim)},
        landmarks={},
    )


def gen_tube(
    n_c: int, n_a: int, radius: float = 1.0, height: float = 2.0
) -> QuadMesh:
    """Open cylinder: closed circumferentially, boundary rings top and bottom."""
    theta = 2.0 * np.pi * np.arange(n_c) / n_c
    rows = []
    for r in range(n_a + 1):
        z = height * r / n_a
        rows.append(
            np.stack(
                [radius * np.cos(theta), radius * np.sin(theta), np.full(n_c, z)],
                axis=1,
            )
        )
    verts = np.concatenate(rows, axis=0)

    def vid(r, j):
        return r * n_c + (j % n_c)

    quads = [
        [vid(r, j), vid(r, j + 1), vid(r + 1, j + 1), vid(r + 1, j)]
        for r in range(n_a)
        for j in range(n_c)
    ]
    bottom = [vid(0, j) for j in range(n_c)] + [vid(0, 0)]
    top = [vid(n_a, 0)] + [vid(n_a, j) for j in range(n_c - 1, -1, -1)]
    return QuadMesh(
        vertices=verts,
        quads=np.asarray(quads),
        component_labels=np.full(len(quads), "wall"),
        boundary_loops={"bottom": np.asarray(bottom), "top": np.asarray(top)},
        landmarks={},
    )


def _crown_z(spec: TemplateSpec, theta):
    z_h = spec.hinge_height_frac * spec.height
    z_c = spec.commissure_height_frac * spec.height
    return z_h + (z_c - z_h) * (1.0 + np.cos(3.0 * theta)) / 2.0


def gen_template(spec: TemplateSpec = TemplateSpec()) -> QuadMesh:
    """Build the valve-like quad template described in the module docstring."""
    spec.validate()
    n_c, n_a = spec.n_circumferential, spec.n_axial
    n_s, n_t = spec.leaflet_angular, spec.leaflet_radial
    radius, height = spec.radius, spec.height
    z_comm = spec.commissure_height_frac * height
    sag = spec.sag_frac * (z_comm - spec.hinge_height_frac * height)

    theta = 2.0 * np.pi * np.arange(n_c) / n_c
    crown = _crown_z(spec, theta)

    verts = []
    for r in range(n_a + 1):
        frac = r / n_a
        z = crown * (1.0 - frac) + height * frac
        verts.append(
            np.stack(
                [radius * np.cos(theta), radius * np.sin(theta), z], axis=1
            )
        )
    verts = list(np.concatenate(verts, axis=0))

    def wall_id(r, j):
        return r * n_c + (j % n_c)

    quads = []
    labels = []
    for r in range(n_a):
        for j in range(n_c):
            quads.append(
                [wall_id(r, j), wall_id(r, j + 1), wall_id(r + 1, j + 1), wall_id(r + 1, j)]
            )
            labels.append("wall")

    boundary_loops = {}
    top_ring = [wall_id(n_a, 0)] + [wall_id(n_a, j) for j in range(n_c - 1, -1, -1)]
    boundary_loops["wall_top"] = np.asarray(top_ring)

    landmarks = {}
    free_loops = {}
    for k in range(3):
        j0 = k * n_s
        theta0 = 2.0 * np.pi * j0 / n_c
        arc_ids = [wall_id(0, j0 + u) for u in range(n_s + 1)]
        arc_pts = np.asarray([verts[i] for i in arc_ids])

        sigma_grid = np.arange(n_s + 1) / n_s
        tau_grid = np.arange(n_t + 1) / n_t
        phi = theta0 + sigma_grid * (2.0 * np.pi / 3.0)
        rho = radius * (
            spec.shoulder_radius_frac
            - (spec.shoulder_radius_frac - spec.center_radius_frac)
            * np.sin(np.pi * sigma_grid)
        )
        z_top = z_comm - sag * np.sin(np.pi * sigma_grid)
        top_pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z_top], axis=1)

        left_pts = np.asarray(
            [arc_pts[0] + t * (top_pts[0] - arc_pts[0]) for t in tau_grid]
        )
        right_pts = np.asarray(
            [arc_pts[-1] + t * (top_pts[-1] - arc_pts[-1]) for t in tau_grid]
        )

        grid_ids = np.empty((n_s + 1, n_t + 1), dtype=np.int64)
        grid_ids[:, 0] = arc_ids
        for t in range(1, n_t + 1):
            tau = tau_grid[t]
            for s in range(n_s + 1):
                sigma = sigma_grid[s]
                p = (
                    (1 - tau) * arc_pts[s]
                    + tau * top_pts[s]
                    + (1 - sigma) * left_pts[t]
                    + sigma * right_pts[t]
                    - (
                        (1 - sigma) * (1 - tau) * arc_pts[0]
                        + sigma * (1 - tau) * arc_pts[-1]
                        + (1 - sigma) * tau * top_pts[0]
                        + sigma * tau * top_pts[-1]
                    )
                )
                grid_ids[s, t] = len(verts)
                verts.append(p)

        label = f"leaflet{k}"
        for s in range(n_s):
            for t in range(n_t):
                quads.append(
                    [
                        grid_ids[s, t],
                        grid_ids[s, t + 1],
                        grid_ids[s + 1, t + 1],
                        grid_ids[s + 1, t],
                    ]
                )
                labels.append(label)

        # Free path: up the left column, across the top, down the right.
        free = (
            [grid_ids[0, t] for t in range(n_t + 1)]
            + [grid_ids[s, n_t] for s in range(1, n_s + 1)]
            + [grid_ids[n_s, t] for t in range(n_t - 1, -1, -1)]
        )
        free_loops[f"{label}_free"] = np.asarray(free)

        landmarks[f"H{k}"] = wall_id(0, j0 + n_s // 2)

    landmarks["C20"] = wall_id(0, 0)
    landmarks["C01"] = wall_id(0, n_s)
    landmarks["C12"] = wall_id(0, 2 * n_s)

    boundary_loops.update(free_loops)
    return QuadMesh(
        vertices=np.asarray(verts),
        quads=np.asarray(quads),
        component_labels=np.asarray(labels),
        boundary_loops=boundary_loops,
        landmarks=landmarks,
    )


def subdivide(mesh: QuadMesh, levels: int = 1) -> QuadMesh:
    """Linear 4-way quad split; original vertices keep their indices."""
    out = mesh
    for _ in range(levels):
        out = _subdivide_once(out)
    return out


def _subdivide_once(mesh: QuadMesh) -> QuadMesh:
    verts = list(mesh.vertices)
    midpoint = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        idx = midpoint.get(key)
        if idx is None:
            idx = len(verts)
            verts.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
            midpoint[key] = idx
        return idx

    quads = []
    labels = []
    for quad, label in zip(mesh.quads, mesh.component_labels):
        a, b, c, d = (int(x) for x in quad)
        mab, mbc, mcd, mda = mid(a, b), mid(b, c), mid(c, d), mid(d, a)
        center = len(verts)
        verts.append(mesh.vertices[quad].mean(axis=0))
        quads.extend(
            [
                [a, mab, center, mda],
                [mab, b, mbc, center],
                [center, mbc, c, mcd],
                [mda, center, mcd, d],
            ]
        )
        labels.extend([label] * 4)

    loops = {}
    for name, seq in mesh.boundary_loops.items():
        refined = []
        for u, v in zip(seq[:-1], seq[1:]):
            refined.append(int(u))
            refined.append(mid(int(u), int(v)))
        refined.append(int(seq[-1]))
        loops[name] = np.asarray(refined)

    return QuadMesh(
        vertices=np.asarray(verts),
        quads=np.asarray(quads),
        component_labels=np.asarray(labels),
        boundary_loops=loops,
        landmarks=dict(mesh.landmarks),
    )


def triangulate(mesh: QuadMesh, with_normals: bool = True) -> TriSurface:
    """Split each quad along the (v0, v2) diagonal into two triangles."""
    q = mesh.quads
    tris = np.concatenate(
        [q[:, [0, 1, 2]], q[:, [0, 2, 3]]], axis=0
    )
    normals = None
    if with_normals:
        normals = vertex_normals(mesh.vertices, tris)
    return TriSurface(
        vertices=mesh.vertices.copy(), triangles=tris, vertex_normals=normals
    )


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted unit vertex normals of a triangulation."""
    p = vertices[triangles]
    face_n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])  # 2x area weighted
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, triangles[:, k], face_n)
    lens = np.linalg.norm(acc, axis=1)
    if np.any(lens <= 0):
        raise GeometryError("vertex with zero accumulated normal")
    return acc / lens[:, None]


class Warp:
    """Composable closed-form deformation ``apply: (N, 3) -> (N, 3)``."""

    def __init__(self, kind, fn):
        self.kind = kind
        self._fn = fn

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self._fn(np.asarray(points, dtype=np.float64))


def _bulge_fn(amplitude, z0, width):
    def fn(p):
        g = np.exp(-0.5 * ((p[:, 2] - z0) / width) ** 2)
        factor = 1.0 + amplitude * g
        out = p.copy()
        out[:, 0] *= factor
        out[:, 1] *= factor
        return out

    return fn


def _twist_fn(total_angle, zmin, zmax):
    span = max(zmax - zmin, 1e-12)

    def fn(p):
        phi = total_angle * (p[:, 2] - zmin) / span
        c, s = np.cos(phi), np.sin(phi)
        out = p.copy()
        out[:, 0] = c * p[:, 0] - s * p[:, 1]
        out[:, 1] = s * p[:, 0] + c * p[:, 1]
        return out

    return fn


def _scale_fn(scale):
    s = np.asarray(scale, dtype=np.float64)

    def fn(p):
        return p * s[None, :]

    return fn


def build_warp(spec: WarpSpec, z_range) -> Warp:
    """Instantiate the warp over the template's z extent."""
    spec.validate()
    zmin, zmax = float(z_range[0]), float(z_range[1])
    span = max(zmax - zmin, 1e-12)
    if spec.kind == "identity":
        return Warp("identity", lambda p: p.copy())
    if spec.kind == "radial-bulge":
        z0 = zmin + spec.center_frac * span
        return Warp(spec.kind, _bulge_fn(spec.amplitude, z0, spec.width_frac * span))
    if spec.kind == "axial-twist":
        return Warp(spec.kind, _twist_fn(spec.amplitude, zmin, zmax))
    if spec.kind == "anisotropic-scale":
        return Warp(spec.kind, _scale_fn(spec.scale))
    # composite: bulge, then twist, then scale, coefficients seeded
    rng = np.random.default_rng(spec.seed)
    a = spec.amplitude * rng.uniform(0.06, 0.12) * rng.choice([-1.0, 1.0])
    tw = spec.amplitude * rng.uniform(0.2, 0.4) * rng.choice([-1.0, 1.0])
    sc = rng.uniform(0.88, 1.12, size=3)
    cf = rng.uniform(0.35, 0.65)
    wf = rng.uniform(0.2, 0.3)
    bulge = _bulge_fn(a, zmin + cf * span, wf * span)
    twist = _twist_fn(tw, zmin, zmax)
    scale = _scale_fn(sc)

    def fn(p):
        return scale(twist(bulge(p)))

    return Warp("composite", fn)


def sample_jacobian_determinants(
    warp: Warp, lo, hi, n: int = 10000, seed: int = 0, h: float = 1e-4
) -> np.ndarray:
    """Central-difference Jacobian determinants at random box points."""
    rng = np.random.default_rng(seed)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    pts = lo + rng.random((n, 3)) * (hi - lo)
    jac = np.empty((n, 3, 3))
    for k in range(3):
        dp = np.zeros(3)
        dp[k] = h
        jac[:, :, k] = (warp(pts + dp) - warp(pts - dp)) / (2.0 * h)
    return np.linalg.det(jac)


def gen_target(
    template: QuadMesh, warp_spec: WarpSpec, refine: int = 3
):
    """Warped refined triangulation plus constraints and ground truth.

    Returns (target TriSurface, BoundaryConstraintSet, ground-truth
    QuadMesh). Because linear subdivision keeps original vertices, the
    ground-truth nodes coincide with target vertices exactly.
    """
    if refine < 1:
        raise ConfigurationError("refine level must be >= 1")
    zmin = float(template.vertices[:, 2].min())
    zmax = float(template.vertices[:, 2].max())
    warp = build_warp(warp_spec, (zmin, zmax))

    refined = subdivide(template, refine)
    warped_refined = warp(refined.vertices)
    tris = np.concatenate(
        [refined.quads[:, [0, 1, 2]], refined.quads[:, [0, 2, 3]]], axis=0
    )
    target = TriSurface(
        vertices=warped_refined,
        triangles=tris,
        vertex_normals=vertex_normals(warped_refined, tris),
    )

    constraints = []
    for name, seq in refined.boundary_loops.items():
        closed = seq[0] == seq[-1]
        pts = warped_refined[seq[:-1] if closed else seq]
        constraints.append(
            BoundaryConstraint(loop=name, points=pts, closed=bool(closed))
        )
    constraint_set = BoundaryConstraintSet(tuple(constraints))

    gt = template.with_vertices(warp(template.vertices))
    return target, constraint_set, gt


def sample_surface(surface: TriSurface, count: int, seed: int = 0) -> np.ndarray:
    """Uniform-area random points on the surface (seeded, deterministic)."""
    rng = np.random.default_rng(seed)
    p = surface.vertices[surface.triangles]
    areas = 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1
    )
    probs = areas / areas.sum()
    tri_idx = rng.choice(len(areas), size=count, p=probs)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    a, b, c = p[tri_idx, 0], p[tri_idx, 1], p[tri_idx, 2]
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[
        :, None
    ] * c
