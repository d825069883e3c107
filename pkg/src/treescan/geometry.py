"""Small vectorized geometry kernels used by several modules."""

from __future__ import annotations

import numpy as np

AXES = np.eye(3)


def normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unit vectors along `axis`; zero vectors are returned unchanged."""
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return np.where(n > 0.0, v / np.where(n == 0.0, 1.0, n), v)


def least_aligned_axis(d: np.ndarray) -> np.ndarray:
    """World axis with the smallest |dot| against d. Ties pick the lowest index."""
    return AXES[int(np.argmin(np.abs(d)))]


def perpendicular_frame(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic right-handed (u, v) with u x v = d for a unit vector d."""
    a = least_aligned_axis(d)
    u = np.cross(a, d)
    u = u / np.linalg.norm(u)
    v = np.cross(d, u)
    return u, v


def rotate_align(frame_u: np.ndarray, d_from: np.ndarray, d_to: np.ndarray) -> np.ndarray:
    """Transport u by the minimal rotation taking unit d_from to unit d_to."""
    c = float(np.dot(d_from, d_to))
    axis = np.cross(d_from, d_to)
    s = float(np.linalg.norm(axis))
    if s < 1e-14:
        if c > 0.0:
            return frame_u
        # antiparallel: rotate 180 degrees about any perpendicular
        p, _ = perpendicular_frame(d_from)
        return 2.0 * np.dot(frame_u, p) * p - frame_u
    axis = axis / s
    # Rodrigues
    return (
        frame_u * c
        + np.cross(axis, frame_u) * s
        + axis * np.dot(axis, frame_u) * (1.0 - c)
    )


def dist_point_to_segment_axis(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points to the infinite line through a and b."""
    d = b - a
    d = d / np.linalg.norm(d)
    rel = points - a
    t = rel @ d
    return np.linalg.norm(rel - np.outer(t, d), axis=1)


def triangle_areas_normals(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray):
    """Areas and unit normals for triangles given as (n,3) vertex arrays."""
    cross = np.cross(v1 - v0, v2 - v0)
    twice_area = np.linalg.norm(cross, axis=1)
    areas = 0.5 * twice_area
    safe = np.where(twice_area == 0.0, 1.0, twice_area)
    normals = cross / safe[:, None]
    return areas, normals


def dist_points_to_triangles(p: np.ndarray, v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance for paired points and triangles, all (n,3).

    Vectorized region classification on the triangle parameter plane
    (Ericson, Real-Time Collision Detection, 5.1.5); the first matching
    region claims the pair, mirroring the scalar early returns.
    """
    ab = v1 - v0
    ac = v2 - v0

    ap = p - v0
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - v1
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - v2
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    closest = np.empty_like(p)
    open_ = np.ones(len(p), dtype=bool)

    def claim(mask):
        m = mask & open_
        open_[m] = False
        return m

    m = claim((d1 <= 0.0) & (d2 <= 0.0))  # vertex A
    closest[m] = v0[m]

    m = claim((d3 >= 0.0) & (d4 <= d3))  # vertex B
    closest[m] = v1[m]

    m = claim((d6 >= 0.0) & (d5 <= d6))  # vertex C
    closest[m] = v2[m]

    m = claim((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0))  # edge AB
    if np.any(m):
        den = d1[m] - d3[m]
        t = d1[m] / np.where(den == 0.0, 1.0, den)
        closest[m] = v0[m] + t[:, None] * ab[m]

    m = claim((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0))  # edge AC
    if np.any(m):
        den = d2[m] - d6[m]
        t = d2[m] / np.where(den == 0.0, 1.0, den)
        closest[m] = v0[m] + t[:, None] * ac[m]

    m = claim((va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0))  # edge BC
    if np.any(m):
        num = d4[m] - d3[m]
        den = num + (d5[m] - d6[m])
        t = num / np.where(den == 0.0, 1.0, den)
        closest[m] = v1[m] + t[:, None] * (v2[m] - v1[m])

    m = open_  # interior
    if np.any(m):
        denom = va[m] + vb[m] + vc[m]
        denom = np.where(denom == 0.0, 1.0, denom)
        v = vb[m] / denom
        w = vc[m] / denom
        closest[m] = v0[m] + v[:, None] * ab[m] + w[:, None] * ac[m]

    return np.linalg.norm(p - closest, axis=1)


def dist_point_to_triangle_set(point: np.ndarray, v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Distance from one point to each triangle of a set."""
    n = len(v0)
    pts = np.broadcast_to(point, (n, 3)).copy()
    return dist_points_to_triangles(pts, v0, v1, v2)
