"""Boundary constraint polylines and piecewise-linear curve utilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, CorrespondenceError


@dataclass(frozen=True)
class BoundaryConstraint:
    """A named target polyline for one template boundary loop.

    ``points`` never repeats the first point; ``closed`` marks a cycle.
    """

    loop: str
    points: np.ndarray
    closed: bool

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ConfigurationError(
                f"constraint '{self.loop}' needs at least 2 points of dim 3"
            )
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class BoundaryConstraintSet:
    constraints: tuple

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        names = [c.loop for c in self.constraints]
        if len(names) != len(set(names)):
            raise ConfigurationError("duplicate constraint loop names")

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def get(self, loop: str) -> BoundaryConstraint:
        for c in self.constraints:
            if c.loop == loop:
                return c
        raise KeyError(loop)

    def names(self):
        return [c.loop for c in self.constraints]

    def require_loops(self, available) -> None:
        missing = [c.loop for c in self.constraints if c.loop not in available]
        if missing:
            raise CorrespondenceError(
                f"constraints reference unknown boundary loops: {missing}"
            )


def _segments(points: np.ndarray, closed: bool):
    if closed:
        return points, np.roll(points, -1, axis=0)
    return points[:-1], points[1:]


def polyline_params(points: np.ndarray, closed: bool) -> np.ndarray:
    """Normalized arc-length parameter of each given point.

    Closed polylines include the closing segment in the total length, so
    parameters live in [0, 1).
    """
    a, b = _segments(points, closed)
    seg = np.linalg.norm(b - a, axis=1)
    total = float(seg.sum())
    if total <= 0:
        raise CorrespondenceError("polyline has zero length")
    cum = np.concatenate([[0.0], np.cumsum(seg)]) / total
    return cum[: len(points)] if closed else cum


def polyline_point_at(points: np.ndarray, closed: bool, t) -> np.ndarray:
    """Point(s) on the polyline at normalized arc-length parameter t."""
    a, b = _segments(points, closed)
    seg = np.linalg.norm(b - a, axis=1)
    total = seg.sum()
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if closed:
        t = np.mod(t, 1.0)
    else:
        t = np.clip(t, 0.0, 1.0)
    s = t * total
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    local = (s - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0)
    out = a[idx] + local[:, None] * (b[idx] - a[idx])
    return out


def polyline_nearest(points: np.ndarray, closed: bool, queries: np.ndarray):
    """Closest point on the polyline for each query. Returns (points, d2)."""
    a, b = _segments(points, closed)
    d = b - a  # (S, 3)
    dd = np.einsum("ij,ij->i", d, d)
    dd_safe = np.where(dd > 0, dd, 1.0)
    q = np.asarray(queries, dtype=np.float64)
    # t*(q, seg) clamped to [0, 1] per segment, take the best segment.
    ap = q[:, None, :] - a[None, :, :]  # (Q, S, 3)
    t = np.clip(np.einsum("qsj,sj->qs", ap, d) / dd_safe[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * d[None, :, :]
    diff = q[:, None, :] - proj
    d2 = np.einsum("qsj,qsj->qs", diff, diff)
    best = np.argmin(d2, axis=1)
    rows = np.arange(len(q))
    return proj[rows, best], d2[rows, best]
