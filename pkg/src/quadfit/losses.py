"""Differentiable mesh losses with analytic gradients.

Every loss returns a LossValue carrying the scalar and its gradient with
respect to the predicted vertex positions. Gradients are verified against
central finite differences (see ``finite_difference_gradient`` and the
gradient-check suite).

Normalization conventions (fixed, relied on by tests):
  - mean-squared position error and neighbor-sum smoothness average over
    vertices;
  - chamfer uses 1/|P| and 1/|G| per direction;
  - edge-length sums over directed edges (each undirected edge twice);
  - neighbor-mean (umbrella) deviation sums over vertices;
  - per-quad penalties (flatness, aspect, corner) average over quads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    GeometryError,
    ShapeMismatchError,
    TopologyError,
)
from .mesh import AdjacencyTable, QuadMesh, TriSurface
from .spatial import nearest_vertices

EPS_FLOOR = 1e-12


@dataclass(frozen=True)
class LossValue:
    """Scalar loss plus per-vertex gradient (units: value per mm).

    ``skipped`` counts terms dropped for degeneracy (zero-length cross
    products, collinear quads).
    """

    value: float
    gradient: np.ndarray
    skipped: int = 0


@dataclass(frozen=True)
class LossWeights:
    """Regularizer weights ``alpha`` and composition weights ``lam``."""

    alpha: dict
    lam: tuple

    def __post_init__(self):
        for name, w in self.alpha.items():
            if not np.isfinite(w) or w < 0:
                raise ConfigurationError(f"alpha[{name}] must be finite and >= 0")
        if len(self.lam) != 4 or any(
            (not np.isfinite(w)) or w < 0 for w in self.lam
        ):
            raise ConfigurationError("lam must be 4 finite non-negative weights")


def _points(arr, name) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ShapeMismatchError(f"{name} must be (N, 3), got {a.shape}")
    return a


def _check_adj(pred: np.ndarray, adj: AdjacencyTable):
    if adj.n_vertices != len(pred):
        raise ShapeMismatchError(
            f"adjacency covers {adj.n_vertices} vertices, got {len(pred)} positions"
        )


def _quads_of(mesh) -> np.ndarray:
    quads = mesh.quads if isinstance(mesh, QuadMesh) else np.asarray(mesh)
    if quads.ndim != 2 or quads.shape[1] != 4:
        raise ShapeMismatchError(f"expected (Q, 4) quads, got {quads.shape}")
    return quads


def loss_geom(pred, truth) -> LossValue:
    """Mean squared node-position error against index-matched truth."""
    pred = _points(pred, "pred")
    truth = _points(truth, "truth")
    if pred.shape != truth.shape:
        raise ShapeMismatchError(
            f"pred {pred.shape} and truth {truth.shape} must match"
        )
    diff = pred - truth
    n = len(pred)
    value = float(np.einsum("ij,ij->", diff, diff)) / n
    grad = (2.0 / n) * diff
    return LossValue(value=value, gradient=grad)


def _neighbor_sums(pred: np.ndarray, adj: AdjacencyTable) -> np.ndarray:
    """s_i = sum_{j in N(i)} (v_j - v_i)."""
    acc = np.zeros_like(pred)
    np.add.at(acc, adj.edge_src, pred[adj.edge_dst])
    return acc - adj.degree[:, None] * pred


def loss_mc(pred, adj: AdjacencyTable) -> LossValue:
    """Neighbor-sum smoothness: mean_i || sum_{j in N(i)} (v_j - v_i) ||^2."""
    pred = _points(pred, "pred")
    _check_adj(pred, adj)
    n = len(pred)
    s = _neighbor_sums(pred, adj)
    value = float(np.einsum("ij,ij->", s, s)) / n
    # d/dv_k: -deg_k s_k from its own term, + s_i from each i with k in N(i).
    acc = np.zeros_like(pred)
    np.add.at(acc, adj.edge_src, s[adj.edge_dst])
    grad = (2.0 / n) * (acc - adj.degree[:, None] * s)
    return LossValue(value=value, gradient=grad)


def loss_chamfer(pred_points, target_points) -> LossValue:
    """Symmetric squared-distance chamfer between point sets.

    Gradient flows through the predicted points only; nearest assignments
    are recomputed on every call.
    """
    p = _points(pred_points, "pred_points")
    g = _points(target_points, "target_points")
    if len(p) == 0 or len(g) == 0:
        from .errors import QueryError

        raise QueryError("chamfer requires two non-empty point sets")
    idx_pg, d_pg = nearest_vertices(p, g)
    idx_gp, d_gp = nearest_vertices(g, p)
    value = float(np.mean(d_pg**2) + np.mean(d_gp**2))
    grad = (2.0 / len(p)) * (p - g[idx_pg])
    # Reverse direction: each target point pulls its nearest predicted point.
    pull = np.zeros_like(p)
    np.add.at(pull, idx_gp, p[idx_gp] - g)
    grad += (2.0 / len(g)) * pull
    return LossValue(value=value, gradient=grad)


def _face_corner_triples(faces: np.ndarray):
    """(node, next, prev) index triples for every face corner."""
    nxt = np.roll(faces, -1, axis=1)
    prv = np.roll(faces, 1, axis=1)
    return faces.ravel(), nxt.ravel(), prv.ravel()


def loss_normal(pred, faces, target: TriSurface) -> LossValue:
    """Squared difference between predicted corner normals and target normals.

    For each predicted node the unit cross product of its two incident
    face edges is compared with the normal of the nearest target vertex;
    terms from multiple incident faces are averaged per node. Zero-length
    cross products are skipped and counted.
    """
    pred = _points(pred, "pred")
    faces = np.asarray(faces, dtype=np.int64)
    if target.vertex_normals is None:
        raise ConfigurationError("target surface has no vertex normals")

    g_idx, _ = nearest_vertices(pred, target.vertices)
    m = target.vertex_normals[g_idx]  # per predicted node

    node, nxt, prv = _face_corner_triples(faces)
    p = pred[node]
    u = pred[nxt] - p
    w = pred[prv] - p
    n = np.cross(u, w)
    nlen = np.linalg.norm(n, axis=1)
    ok = nlen > 1e-30
    skipped = int((~ok).sum())

    counts = np.bincount(node, weights=ok.astype(float), minlength=len(pred))
    inv_count = np.zeros(len(pred))
    has = counts > 0
    inv_count[has] = 1.0 / counts[has]

    value = 0.0
    grad = np.zeros_like(pred)
    if ok.any():
        node_o = node[ok]
        nxt_o = nxt[ok]
        prv_o = prv[ok]
        u_o = u[ok]
        w_o = w[ok]
        n_o = n[ok]
        nlen_o = nlen[ok][:, None]
        nhat = n_o / nlen_o
        diff = nhat - m[node_o]
        wgt = inv_count[node_o]
        value = float(np.sum(wgt * np.einsum("ij,ij->i", diff, diff)))

        # h = (I - nhat nhat^T) 2 diff / |n|; grad_u = w x h; grad_w = h x u.
        h = (2.0 / nlen_o) * (
            diff - np.einsum("ij,ij->i", diff, nhat)[:, None] * nhat
        )
        gu = np.cross(w_o, h) * wgt[:, None]
        gw = np.cross(h, u_o) * wgt[:, None]
        np.add.at(grad, nxt_o, gu)
        np.add.at(grad, prv_o, gw)
        np.add.at(grad, node_o, -(gu + gw))

    return LossValue(value=value, gradient=grad, skipped=skipped)


def loss_edge(pred, adj: AdjacencyTable, mu="auto") -> LossValue:
    """Sum over directed edges of | squared length - mu^2 |.

    ``mu="auto"`` uses the mean edge length of the current mesh, treated
    as a constant in the gradient. The subgradient at the kink uses
    sign(0) = 0.
    """
    pred = _points(pred, "pred")
    _check_adj(pred, adj)
    d = pred[adj.edge_src] - pred[adj.edge_dst]
    d2 = np.einsum("ij,ij->i", d, d)
    if mu == "auto":
        mu_val = float(np.mean(np.sqrt(d2)))
    else:
        mu_val = float(mu)
        if mu_val <= 0:
            raise GeometryError("explicit mu must be positive")
    s = d2 - mu_val**2
    value = float(np.sum(np.abs(s)))
    sign = np.sign(s)[:, None]
    grad = np.zeros_like(pred)
    np.add.at(grad, adj.edge_src, 2.0 * sign * d)
    np.add.at(grad, adj.edge_dst, -2.0 * sign * d)
    return LossValue(value=value, gradient=grad)


def loss_laplacian(pred, adj: AdjacencyTable) -> LossValue:
    """Sum over vertices of || v - mean of neighbors ||^2."""
    pred = _points(pred, "pred")
    _check_adj(pred, adj)
    if np.any(adj.degree == 0):
        raise TopologyError("isolated vertex has no neighbor mean")
    acc = np.zeros_like(pred)
    np.add.at(acc, adj.edge_src, pred[adj.edge_dst])
    mean = acc / adj.degree[:, None]
    lap = pred - mean
    value = float(np.einsum("ij,ij->", lap, lap))
    # grad_q = 2 l_q - 2 sum_{p in N(q)} l_p / deg_p
    back = np.zeros_like(pred)
    np.add.at(back, adj.edge_src, lap[adj.edge_dst] / adj.degree[adj.edge_dst, None])
    grad = 2.0 * lap - 2.0 * back
    return LossValue(value=value, gradient=grad)


def loss_flatness(mesh, pred) -> LossValue:
    """Mean over quads of the squared corner distances to the LSQ plane.

    The per-quad value equals the smallest eigenvalue of the corner
    covariance; its exact gradient is 2 ((x_i - c) . n) n per corner with
    the optimal plane held fixed (envelope rule). Collinear quads are
    skipped and counted.
    """
    quads = _quads_of(mesh)
    pred = _points(pred, "pred")
    corners = pred[quads]  # (Q, 4, 3)
    centroid = corners.mean(axis=1, keepdims=True)
    centered = corners - centroid
    cov = np.einsum("qik,qil->qkl", centered, centered)
    eigvals, eigvecs = np.linalg.eigh(cov)
    degenerate = eigvals[:, 1] < 1e-18
    n_ok = int((~degenerate).sum())
    skipped = int(degenerate.sum())
    grad = np.zeros_like(pred)
    if n_ok == 0:
        return LossValue(value=0.0, gradient=grad, skipped=skipped)
    normal = eigvecs[:, :, 0]  # eigenvector of the smallest eigenvalue
    dist = np.einsum("qik,qk->qi", centered, normal)
    per_quad = np.einsum("qi,qi->q", dist, dist)
    per_quad[degenerate] = 0.0
    value = float(per_quad.sum()) / n_ok
    contrib = (2.0 / n_ok) * dist[:, :, None] * normal[:, None, :]
    contrib[degenerate] = 0.0
    np.add.at(grad, quads.ravel(), contrib.reshape(-1, 3))
    return LossValue(value=value, gradient=grad, skipped=skipped)


def _quad_side_lengths(pred: np.ndarray, quads: np.ndarray):
    corners = pred[quads]
    sides = np.roll(corners, -1, axis=1) - corners  # e_k = c_{k+1} - c_k
    lengths = np.linalg.norm(sides, axis=2)
    if np.any(lengths <= 0):
        raise GeometryError("zero-length quad edge")
    return corners, sides, lengths


def loss_aspect(mesh, pred) -> LossValue:
    """Mean over quads of (r - 1)^2, r = ratio of averaged opposite sides."""
    quads = _quads_of(mesh)
    pred = _points(pred, "pred")
    _, sides, lengths = _quad_side_lengths(pred, quads)
    nq = len(quads)
    l1 = 0.5 * (lengths[:, 0] + lengths[:, 2])
    l2 = 0.5 * (lengths[:, 1] + lengths[:, 3])
    big = np.maximum(l1, l2)
    small = np.minimum(l1, l2)
    r = big / small
    value = float(np.mean((r - 1.0) ** 2))

    # dP/dbig = 2(r-1)/small, dP/dsmall = -2(r-1) big / small^2.
    d_big = 2.0 * (r - 1.0) / small
    d_small = -2.0 * (r - 1.0) * big / small**2
    first_is_big = l1 >= l2
    d_l1 = np.where(first_is_big, d_big, d_small)
    d_l2 = np.where(first_is_big, d_small, d_big)
    d_len = 0.5 * np.stack([d_l1, d_l2, d_l1, d_l2], axis=1) / nq

    unit = sides / lengths[:, :, None]
    per_side = d_len[:, :, None] * unit  # gradient wrt side head
    grad = np.zeros_like(pred)
    head = np.roll(quads, -1, axis=1)
    np.add.at(grad, head.ravel(), per_side.reshape(-1, 3))
    np.add.at(grad, quads.ravel(), -per_side.reshape(-1, 3))
    return LossValue(value=value, gradient=grad)


def loss_corner(mesh, pred) -> LossValue:
    """Mean over quads of the summed squared corner-angle cosines."""
    quads = _quads_of(mesh)
    pred = _points(pred, "pred")
    nq = len(quads)
    node, nxt, prv = _face_corner_triples(quads)
    u = pred[nxt] - pred[node]
    w = pred[prv] - pred[node]
    lu = np.linalg.norm(u, axis=1)
    lw = np.linalg.norm(w, axis=1)
    if np.any(lu <= 0) or np.any(lw <= 0):
        raise GeometryError("zero-length quad edge")
    cos = np.einsum("ij,ij->i", u, w) / (lu * lw)
    value = float(np.sum(cos**2)) / nq

    uhat = u / lu[:, None]
    what = w / lw[:, None]
    dcos_du = (what - cos[:, None] * uhat) / lu[:, None]
    dcos_dw = (uhat - cos[:, None] * what) / lw[:, None]
    scale = (2.0 / nq) * cos[:, None]
    gu = scale * dcos_du
    gw = scale * dcos_dw
    grad = np.zeros_like(pred)
    np.add.at(grad, nxt, gu)
    np.add.at(grad, prv, gw)
    np.add.at(grad, node, -(gu + gw))
    return LossValue(value=value, gradient=grad)


def compose_additive(terms, lam) -> LossValue:
    """Weighted sum of loss terms: sum_k lam_k * term_k."""
    lam = np.asarray(lam, dtype=np.float64)
    if len(lam) != len(terms):
        raise ShapeMismatchError("one weight per term required")
    shapes = {t.gradient.shape for t in terms}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"gradient shapes differ: {shapes}")
    value = float(sum(w * t.value for w, t in zip(lam, terms)))
    grad = np.zeros(shapes.pop())
    for w, t in zip(lam, terms):
        grad += w * t.gradient
    skipped = sum(t.skipped for t in terms)
    return LossValue(value=value, gradient=grad, skipped=skipped)


def compose_multiplicative(terms, lam, floor: float = EPS_FLOOR) -> LossValue:
    """Product of weighted terms: prod_k max(lam_k * term_k, floor).

    Floored factors are flat, so they contribute no gradient.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if len(lam) != len(terms):
        raise ShapeMismatchError("one weight per term required")
    shapes = {t.gradient.shape for t in terms}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"gradient shapes differ: {shapes}")
    factors = np.array([max(w * t.value, floor) for w, t in zip(lam, terms)])
    floored = np.array(
        [w * t.value < floor for w, t in zip(lam, terms)], dtype=bool
    )
    value = float(np.prod(factors))
    grad = np.zeros(shapes.pop())
    for k, (w, t) in enumerate(zip(lam, terms)):
        if floored[k]:
            continue
        grad += (value / factors[k]) * w * t.gradient
    skipped = sum(t.skipped for t in terms)
    return LossValue(value=value, gradient=grad, skipped=skipped)


def finite_difference_gradient(fn, pred, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar loss over vertex positions."""
    if h <= 0:
        raise ValueError("step h must be positive")
    pred = _points(pred, "pred").copy()
    grad = np.zeros_like(pred)
    for i in range(pred.shape[0]):
        for k in range(3):
            orig = pred[i, k]
            pred[i, k] = orig + h
            fp = fn(pred)
            pred[i, k] = orig - h
            fm = fn(pred)
            pred[i, k] = orig
            grad[i, k] = (fp - fm) / (2.0 * h)
    return grad
