"""Smooth implicit surfaces from triangle meshes.

The mesh's bounding box is subdivided into an octree; a cell splits while
more than `max_triangles_per_cell` triangles lie within its support sphere
(radius = `sphere_radius_scale` x cell diagonal, centered at the cell center)
and the depth cap allows. Leaves whose sphere reaches no triangle at all are
dropped: they would only dilute the blend, and queries out there take the
nearest-cell fallback anyway. Kept spheres holding fewer than
`min_triangles_for_fit` triangles grow until they hold enough, stopping at
the exact k-th nearest triangle distance: an overshot support would drag a
wide, badly-planar cap of surface into the blend and bias the zero set.

Each cell fits an affine shape function to the triangles in its sphere,

    s(x) = <x, n_avg> - <p_avg, n_avg>,

where n_avg and p_avg are weighted averages over the member triangles with
weight w(x, t) = 1 / (|x - t|^2 + eps^2)^2 integrated per triangle by a
fixed symmetric barycentric quadrature. Outward mesh normals make s (and
hence the blend) positive outside.

The global field blends the cells that contain the query point:

    f(x) = sum_i q_i(x) s_i(x) / sum_i q_i(x),

with q_i a quadratic B-spline bump of u = r_i / R_i that is C1 and reaches
zero at the sphere boundary:

    q(u) = 0.75 - 2.25 u^2         for u <= 1/3,
    q(u) = 1.125 (1 - u)^2         for 1/3 < u <= 1,
    q(u) = 0                       beyond.

Queries outside every sphere fall back to the shape function of the cell
with the nearest center; the field is then affine out there, which is all
ray marching needs to know the sign.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyMeshError,
    InsufficientTrianglesError,
    InvalidParameterError,
    SurfaceCacheError,
)
from .geometry import (
    dist_point_to_triangle_set,
    dist_points_to_triangles,
    triangle_areas_normals,
)
from .mesh import TriangleMesh

DEFAULT_EPSILON_SCALE = 0.005  # of the bbox diagonal, when epsilon is not given

# symmetric barycentric rules: (coords (k,3), weights (k,))
_QUADRATURE = {
    1: (
        np.array([[1 / 3, 1 / 3, 1 / 3]]),
        np.array([1.0]),
    ),
    3: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.array([1 / 3, 1 / 3, 1 / 3]),
    ),
    7: (
        np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [0.059715871789770, 0.470142064105115, 0.470142064105115],
                [0.470142064105115, 0.059715871789770, 0.470142064105115],
                [0.470142064105115, 0.470142064105115, 0.059715871789770],
                [0.797426985353087, 0.101286507323456, 0.101286507323456],
                [0.101286507323456, 0.797426985353087, 0.101286507323456],
                [0.101286507323456, 0.101286507323456, 0.797426985353087],
            ]
        ),
        np.array(
            [
                0.225,
                0.132394152788506,
                0.132394152788506,
                0.132394152788506,
                0.125939180544827,
                0.125939180544827,
                0.125939180544827,
            ]
        ),
    ),
}


@dataclass
class FitConfig:
    """Fitting controls.

    epsilon: smoothing width of the weight function, in model units; None
    picks 0.005 x bbox diagonal at build time.  quadrature_order selects the
    per-triangle rule by point count (1, 3, or 7).
    """

    epsilon: float | None = None
    max_depth: int = 10
    max_triangles_per_cell: int = 32
    min_triangles_for_fit: int = 1
    quadrature_order: int = 7
    sphere_radius_scale: float = 1.0

    def validate(self) -> None:
        if self.epsilon is not None and not self.epsilon > 0.0:
            raise InvalidParameterError("epsilon must be positive (or None for automatic)")
        if not 1 <= self.max_depth <= 21:
            raise InvalidParameterError("max_depth must lie in [1, 21]")
        if self.max_triangles_per_cell < 1:
            raise InvalidParameterError("max_triangles_per_cell must be >= 1")
        if self.min_triangles_for_fit < 1:
            raise InvalidParameterError("min_triangles_for_fit must be >= 1")
        if self.quadrature_order not in _QUADRATURE:
            raise InvalidParameterError(
                f"quadrature_order must be one of {sorted(_QUADRATURE)}"
            )
        if not self.sphere_radius_scale > 0.0:
            raise InvalidParameterError("sphere_radius_scale must be positive")


@dataclass
class CellFit:
    """One support sphere and its affine shape function.

    avg_normal is the weighted normal quotient, deliberately not normalized;
    offset = <avg_point, avg_normal> so s(x) = <x, avg_normal> - offset.
    """

    center: np.ndarray
    radius: float
    avg_normal: np.ndarray
    offset: float

    def shape(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.avg_normal - self.offset


def weight(x, t, epsilon: float):
    """Inverse-quartic falloff 1 / (|x-t|^2 + eps^2)^2; broadcasts over rows."""
    if epsilon <= 0.0:
        raise InvalidParameterError("epsilon must be positive")
    d2 = np.sum((np.asarray(x, dtype=np.float64) - np.asarray(t, dtype=np.float64)) ** 2, axis=-1)
    return 1.0 / (d2 + epsilon * epsilon) ** 2


def _weighted_moments(center: np.ndarray, tris: np.ndarray, epsilon: float, order: int):
    """Per-triangle integrals of w and x*w by fixed barycentric quadrature.

    tris has shape (k, 3, 3).  Returns (int_w (k,), int_xw (k, 3), areas,
    unit normals); zero-area triangles get zero integrals.
    """
    bary, omega = _QUADRATURE[order]
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    areas, normals = triangle_areas_normals(v0, v1, v2)
    # quadrature points: (k, q, 3)
    pts = (
        bary[None, :, 0, None] * v0[:, None, :]
        + bary[None, :, 1, None] * v1[:, None, :]
        + bary[None, :, 2, None] * v2[:, None, :]
    )
    d2 = np.sum((pts - center) ** 2, axis=-1)
    w = 1.0 / (d2 + epsilon * epsilon) ** 2
    int_w = areas * (w @ omega)
    int_xw = areas[:, None] * np.einsum("kq,q,kqd->kd", w, omega, pts)
    return int_w, int_xw, areas, normals


def fit_cell(center, triangles, cfg: FitConfig, radius: float = 1.0) -> CellFit:
    """Fit the affine shape function for one support sphere.

    `triangles` is a (k, 3, 3) array of member triangle vertices.  The
    radius is carried into the returned CellFit unchanged; membership is the
    caller's responsibility.
    """
    cfg.validate()
    center = np.asarray(center, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    if len(tris) < cfg.min_triangles_for_fit:
        raise InsufficientTrianglesError(
            f"cell got {len(tris)} triangles, needs {cfg.min_triangles_for_fit}"
        )
    epsilon = cfg.epsilon if cfg.epsilon is not None else _auto_epsilon_from_tris(tris)
    normal, offset = _affine_from_moments(center, tris, epsilon, cfg.quadrature_order)
    return CellFit(center=center, radius=float(radius), avg_normal=normal, offset=offset)


def _auto_epsilon_from_tris(tris: np.ndarray) -> float:
    lo = tris.reshape(-1, 3).min(axis=0)
    hi = tris.reshape(-1, 3).max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    return DEFAULT_EPSILON_SCALE * diag if diag > 0.0 else 1e-3


def _affine_from_moments(center, tris, epsilon, order):
    int_w, int_xw, areas, normals = _weighted_moments(center, tris, epsilon, order)
    live = areas > 0.0
    total_w = float(np.sum(int_w[live]))
    if total_w <= 0.0:
        raise InsufficientTrianglesError("all member triangles are degenerate")
    avg_normal = (normals[live] * int_w[live, None]).sum(axis=0) / total_w
    avg_point = int_xw[live].sum(axis=0) / total_w
    if np.linalg.norm(avg_normal) < 1e-12:
        # opposing normals cancelled; fall back to the nearest triangle's
        centroids = tris.mean(axis=1)
        nearest = int(np.argmin(np.sum((centroids - center) ** 2, axis=1)))
        avg_normal = normals[nearest].copy()
    return avg_normal, float(avg_point @ avg_normal)


class _CellIndex:
    """Uniform voxel grid over sphere AABBs, CSR layout, plus a short list
    of oversized spheres checked against every query."""

    def __init__(self, centers: np.ndarray, radii: np.ndarray):
        n = len(centers)
        med = float(np.median(radii))
        self.voxel = max(med, 1e-12)
        lo = (centers - radii[:, None]).min(axis=0)
        hi = (centers + radii[:, None]).max(axis=0)
        extent = hi - lo
        dims = np.maximum(1, np.minimum(160, np.ceil(extent / self.voxel).astype(int)))
        self.voxel = float(np.max(extent / dims)) if np.all(extent > 0) else self.voxel
        self.lo = lo
        self.dims = dims

        big = radii > 8.0 * self.voxel
        self.big_ids = np.flatnonzero(big)
        small_ids = np.flatnonzero(~big)

        if len(small_ids):
            # every sphere covers a small box of voxels; expand all boxes at
            # once by flattening (sphere, dx, dy, dz) into one index array
            i0 = self._vox_floor(centers[small_ids] - radii[small_ids, None])
            i1 = self._vox_floor(centers[small_ids] + radii[small_ids, None])
            span = i1 - i0 + 1
            per = span[:, 0] * span[:, 1] * span[:, 2]
            total = int(per.sum())
            owner = np.repeat(np.arange(len(small_ids)), per)
            ends = np.cumsum(per)
            pos = np.arange(total) - np.repeat(ends - per, per)
            yz = span[owner, 1] * span[owner, 2]
            ax = pos // yz
            rem = pos - ax * yz
            ay = rem // span[owner, 2]
            az = rem - ay * span[owner, 2]
            vox = (
                (i0[owner, 0] + ax) * dims[1] + (i0[owner, 1] + ay)
            ) * dims[2] + (i0[owner, 2] + az)
            order = np.argsort(vox, kind="stable")
            self.csr_cells = small_ids[owner[order]]
            counts = np.bincount(vox, minlength=int(np.prod(dims)))
        else:
            self.csr_cells = np.empty(0, dtype=np.int64)
            counts = np.zeros(int(np.prod(dims)), dtype=np.int64)
        self.csr_start = np.concatenate([[0], np.cumsum(counts)])

    def _vox_floor(self, p: np.ndarray) -> np.ndarray:
        idx = np.floor((p - self.lo) / self.voxel).astype(int)
        return np.clip(idx, 0, self.dims - 1)

    def candidate_pairs(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(row, cell) pairs whose sphere AABB voxel contains the point."""
        n = len(points)
        idx = np.floor((points - self.lo) / self.voxel).astype(int)
        inside = np.all((idx >= 0) & (idx < self.dims), axis=1)
        flat = (idx[:, 0] * self.dims[1] + idx[:, 1]) * self.dims[2] + idx[:, 2]
        flat = np.where(inside, flat, 0)
        starts = np.where(inside, self.csr_start[flat], 0)
        ends = np.where(inside, self.csr_start[flat + 1], 0)
        lens = ends - starts
        total = int(lens.sum())
        rows = np.repeat(np.arange(n), lens)
        if total:
            offsets = np.concatenate([[0], np.cumsum(lens)[:-1]])
            take = np.arange(total) - np.repeat(offsets, lens) + np.repeat(starts, lens)
            cells = self.csr_cells[take]
        else:
            cells = np.empty(0, dtype=np.int64)
        if len(self.big_ids):
            rows = np.concatenate([rows, np.repeat(np.arange(n), len(self.big_ids))])
            cells = np.concatenate([cells, np.tile(self.big_ids, n)])
        return rows, cells


class ImplicitSurface:
    """Immutable fitted surface: cell arrays, spatial index, bbox, epsilon."""

    def __init__(self, centers, radii, normals, offsets, bbox_lo, bbox_hi, epsilon, diagnostics=None):
        self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        self.radii = np.asarray(radii, dtype=np.float64).ravel()
        self.normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        self.offsets = np.asarray(offsets, dtype=np.float64).ravel()
        self.bbox_lo = np.asarray(bbox_lo, dtype=np.float64)
        self.bbox_hi = np.asarray(bbox_hi, dtype=np.float64)
        self.epsilon = float(epsilon)
        self.diagnostics = diagnostics or {}
        if len(self.centers) == 0:
            raise InvalidParameterError("a surface needs at least one cell")
        self.index = _CellIndex(self.centers, self.radii)
        self._center_tree = cKDTree(self.centers)

    @property
    def cells(self) -> list[CellFit]:
        return [
            CellFit(self.centers[i].copy(), float(self.radii[i]), self.normals[i].copy(), float(self.offsets[i]))
            for i in range(len(self.centers))
        ]

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.bbox_hi - self.bbox_lo))

    # -- field evaluation ---------------------------------------------------

    def _pairs(self, points: np.ndarray):
        rows, cells = self.index.candidate_pairs(points)
        delta = points[rows] - self.centers[cells]
        r = np.linalg.norm(delta, axis=1)
        keep = r < self.radii[cells]
        return rows[keep], cells[keep], r[keep]

    def _blend(self, points: np.ndarray, want_gradient: bool):
        n = len(points)
        rows, cells, r = self._pairs(points)
        radii = self.radii[cells]
        u = r / radii
        inner = u <= (1.0 / 3.0)
        q = np.where(inner, 0.75 - 2.25 * u * u, 1.125 * (1.0 - u) ** 2)
        s = np.einsum("ij,ij->i", points[rows], self.normals[cells]) - self.offsets[cells]

        num = np.bincount(rows, weights=q * s, minlength=n)
        den = np.bincount(rows, weights=q, minlength=n)
        covered = den > 0.0
        f = np.where(covered, num / np.where(covered, den, 1.0), 0.0)

        if not want_gradient:
            return f, covered

        delta = points[rows] - self.centers[cells]
        # dq/du * grad u; the inner branch folds the 1/r singularity away
        safe_r = np.where(r == 0.0, 1.0, r)
        gq_scale = np.where(
            inner,
            -4.5 / (radii * radii),
            -2.25 * (1.0 - u) / (radii * safe_r),
        )
        grad_q = gq_scale[:, None] * delta
        grad_num = np.zeros((n, 3))
        grad_den = np.zeros((n, 3))
        for d in range(3):
            grad_num[:, d] = np.bincount(
                rows, weights=grad_q[:, d] * s + q * self.normals[cells, d], minlength=n
            )
            grad_den[:, d] = np.bincount(rows, weights=grad_q[:, d], minlength=n)
        den_safe = np.where(covered, den, 1.0)
        grad = (grad_num * den_safe[:, None] - num[:, None] * grad_den) / (den_safe**2)[:, None]
        return f, covered, grad

    def _fallback_cells(self, points: np.ndarray) -> np.ndarray:
        _, nearest = self._center_tree.query(points, k=1)
        return np.atleast_1d(nearest)

    def eval_many(self, points: np.ndarray, uncovered_value: float | None = None) -> np.ndarray:
        """Field values for (n, 3) points.

        uncovered_value short-circuits the nearest-cell fallback for callers
        (the ray marcher) that only need a positive placeholder outside the
        covered region; None keeps the exact fallback.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        f, covered = self._blend(points, want_gradient=False)
        if np.all(covered):
            return f
        if uncovered_value is not None:
            f[~covered] = uncovered_value
            return f
        miss = np.flatnonzero(~covered)
        near = self._fallback_cells(points[miss])
        f[miss] = (
            np.einsum("ij,ij->i", points[miss], self.normals[near]) - self.offsets[near]
        )
        return f

    def gradient_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        _, covered, grad = self._blend(points, want_gradient=True)
        if not np.all(covered):
            miss = np.flatnonzero(~covered)
            near = self._fallback_cells(points[miss])
            grad[miss] = self.normals[near]
        return grad


def eval(surface: ImplicitSurface, x) -> float | np.ndarray:  # noqa: A001 - name fixed by the API
    """Blended field value at x ((3,) or (n, 3))."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = surface.eval_many(x.reshape(-1, 3))
    return float(out[0]) if single else out


def gradient(surface: ImplicitSurface, x) -> np.ndarray:
    """Closed-form gradient of the blended field at x ((3,) or (n, 3))."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = surface.gradient_many(x.reshape(-1, 3))
    return out[0] if single else out


_PAIR_CHUNK = 1 << 18  # (cell, triangle) pairs per vectorized batch

_CHILD_OFFSETS = np.array(
    [[dx, dy, dz] for dx in (-0.25, 0.25) for dy in (-0.25, 0.25) for dz in (-0.25, 0.25)]
)


def _pair_distances(points: np.ndarray, tri_ids: np.ndarray, v0, v1, v2) -> np.ndarray:
    d = np.empty(len(tri_ids))
    for a in range(0, len(tri_ids), _PAIR_CHUNK):
        b = min(a + _PAIR_CHUNK, len(tri_ids))
        t = tri_ids[a:b]
        d[a:b] = dist_points_to_triangles(points[a:b], v0[t], v1[t], v2[t])
    return d


def _batched_affines(centers, pair_cells, pair_tris, quad_pts, omega, areas, tri_normals, epsilon):
    """Fit every cell's shape function from flat (cell, triangle) pairs.

    Same math as _affine_from_moments, summed with bincount instead of a per
    cell loop.  Cells whose weighted normal cancels are fixed up afterwards.
    """
    n = len(centers)
    num_n = np.zeros((n, 3))
    num_p = np.zeros((n, 3))
    den = np.zeros(n)
    for a in range(0, len(pair_cells), _PAIR_CHUNK):
        b = min(a + _PAIR_CHUNK, len(pair_cells))
        cid, tid = pair_cells[a:b], pair_tris[a:b]
        pts = quad_pts[tid]  # (p, q, 3)
        d2 = np.sum((pts - centers[cid][:, None, :]) ** 2, axis=-1)
        w = 1.0 / (d2 + epsilon * epsilon) ** 2
        int_w = areas[tid] * (w @ omega)  # degenerate triangles contribute 0
        int_xw = areas[tid, None] * np.einsum("pq,q,pqd->pd", w, omega, pts)
        den += np.bincount(cid, weights=int_w, minlength=n)
        for axis in range(3):
            num_n[:, axis] += np.bincount(cid, weights=int_w * tri_normals[tid, axis], minlength=n)
            num_p[:, axis] += np.bincount(cid, weights=int_xw[:, axis], minlength=n)
    if np.any(den <= 0.0):
        raise InsufficientTrianglesError("a cell has only degenerate member triangles")
    avg_normal = num_n / den[:, None]
    avg_point = num_p / den[:, None]

    cancelled = np.flatnonzero(np.linalg.norm(avg_normal, axis=1) < 1e-12)
    for i in cancelled:
        # opposing normals cancelled; use the nearest member triangle's
        tids = pair_tris[pair_cells == i]
        tri_c = quad_pts[tids].mean(axis=1)  # symmetric rules average to the centroid
        nearest = tids[int(np.argmin(np.sum((tri_c - centers[i]) ** 2, axis=1)))]
        avg_normal[i] = tri_normals[nearest]

    offsets = np.einsum("ij,ij->i", avg_point, avg_normal)
    return avg_normal, offsets


def build_surface(mesh: TriangleMesh, cfg: FitConfig | None = None) -> ImplicitSurface:
    """Cover the mesh with fitted spheres (see module docstring for rules)."""
    cfg = cfg or FitConfig()
    cfg.validate()
    if len(mesh.triangles) == 0:
        raise EmptyMeshError("mesh has no triangles")
    if cfg.min_triangles_for_fit > len(mesh.triangles):
        # the growth ladder could never satisfy the quota
        raise InsufficientTrianglesError(
            f"min_triangles_for_fit={cfg.min_triangles_for_fit} exceeds the "
            f"mesh's {len(mesh.triangles)} triangles"
        )
    v0, v1, v2 = mesh.corners()
    areas, tri_normals = triangle_areas_normals(v0, v1, v2)
    if not np.any(areas > 0.0):
        raise EmptyMeshError("mesh has no non-degenerate triangles")

    lo, hi = mesh.bbox()
    diag = float(np.linalg.norm(hi - lo))
    pad = max(1e-9, 1e-9 * diag)
    degenerate_axes = (hi - lo) <= 0.0
    lo = lo - np.where(degenerate_axes, 1e-6 + pad, pad)
    hi = hi + np.where(degenerate_axes, 1e-6 + pad, pad)
    epsilon = cfg.epsilon if cfg.epsilon is not None else DEFAULT_EPSILON_SCALE * diag
    if epsilon <= 0.0:
        epsilon = 1e-3

    scale = cfg.sphere_radius_scale
    n_tris = len(mesh.triangles)
    all_idx = np.arange(n_tris)

    centroids = (v0 + v1 + v2) / 3.0
    reach = float(
        np.sqrt(
            np.maximum(
                np.sum((v0 - centroids) ** 2, axis=1),
                np.maximum(
                    np.sum((v1 - centroids) ** 2, axis=1),
                    np.sum((v2 - centroids) ** 2, axis=1),
                ),
            ).max()
        )
    )
    centroid_tree = cKDTree(centroids)

    def members_within(center: np.ndarray, radius: float, cand: np.ndarray) -> np.ndarray:
        if len(cand) == 0:
            return cand
        d = dist_point_to_triangle_set(center, v0[cand], v1[cand], v2[cand])
        return cand[d <= radius]

    def near_distances(center: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        # centroid prefilter, then exact distances; `reach` bounds how far a
        # triangle extends past its centroid so the filter cannot drop hits
        cand = np.array(centroid_tree.query_ball_point(center, radius + reach), dtype=np.int64)
        if len(cand) == 0:
            return cand, np.empty(0)
        return cand, dist_point_to_triangle_set(center, v0[cand], v1[cand], v2[cand])

    # level-synchronous descent: all nodes of one depth share a flat
    # (node, candidate) pair array so the distance kernel runs in bulk
    lvl_centers = ((lo + hi) / 2.0)[None, :]
    lvl_sizes = (hi - lo)[None, :]
    lvl_cand = all_idx.copy()
    lvl_counts = np.array([n_tris])
    depth = 1

    leaf_centers: list[np.ndarray] = []
    leaf_radii: list[np.ndarray] = []
    leaf_pair_cells: list[np.ndarray] = []  # leaf ids, assigned level by level
    leaf_pair_tris: list[np.ndarray] = []
    grow_jobs: list[tuple[np.ndarray, float, int]] = []  # (center, radius, have)
    n_leaves = 0

    while len(lvl_centers):
        n_nodes = len(lvl_centers)
        diag_lvl = np.linalg.norm(lvl_sizes, axis=1)
        radii_lvl = scale * diag_lvl
        node_of_pair = np.repeat(np.arange(n_nodes), lvl_counts)
        d = _pair_distances(lvl_centers[node_of_pair], lvl_cand, v0, v1, v2)

        member_mask = d <= radii_lvl[node_of_pair]
        member_counts = np.bincount(node_of_pair[member_mask], minlength=n_nodes)
        split = (member_counts > cfg.max_triangles_per_cell) & (depth < cfg.max_depth)
        # empty leaves are dropped outright; undersized ones grow later
        settle = ~split & (member_counts >= max(1, cfg.min_triangles_for_fit))
        grow = ~split & (member_counts > 0) & ~settle

        if np.any(settle):
            ids = np.flatnonzero(settle)
            keep_pair = settle[node_of_pair] & member_mask
            leaf_centers.append(lvl_centers[ids])
            leaf_radii.append(radii_lvl[ids])
            # pair leaf ids: contiguous block for this level's settled nodes
            local = np.cumsum(settle) - 1
            leaf_pair_cells.append(n_leaves + local[node_of_pair[keep_pair]])
            leaf_pair_tris.append(lvl_cand[keep_pair])
            n_leaves += len(ids)
        for i in np.flatnonzero(grow):
            grow_jobs.append((lvl_centers[i], float(radii_lvl[i]), int(member_counts[i])))

        if not np.any(split):
            break
        # children inherit candidates provably sufficient for their spheres
        # and their own boxes: anything within max(scale, 1/2) x child
        # diagonal of a child center lies within this bound of the parent
        child_bound = (0.5 * max(scale, 0.5) + 0.25) * diag_lvl
        cand_mask = split[node_of_pair] & (d <= child_bound[node_of_pair])
        split_ids = np.flatnonzero(split)
        seg_counts = np.bincount(node_of_pair[cand_mask], minlength=n_nodes)[split_ids]
        seg_flat = lvl_cand[cand_mask]
        seg_starts = np.concatenate([[0], np.cumsum(seg_counts)[:-1]])

        child_counts = np.repeat(seg_counts, 8)
        total = int(child_counts.sum())
        child_of_entry = np.repeat(np.arange(len(split_ids) * 8), child_counts)
        ends = np.cumsum(child_counts)
        pos = np.arange(total) - np.repeat(ends - child_counts, child_counts)
        lvl_cand = seg_flat[seg_starts[child_of_entry // 8] + pos]
        lvl_counts = child_counts
        lvl_centers = (
            lvl_centers[split_ids][:, None, :]
            + _CHILD_OFFSETS[None, :, :] * lvl_sizes[split_ids][:, None, :]
        ).reshape(-1, 3)
        lvl_sizes = np.repeat(lvl_sizes[split_ids] / 2.0, 8, axis=0)
        depth += 1

    centers_parts = leaf_centers
    radii_parts = [np.asarray(r) for r in leaf_radii]
    member_overrides: dict[int, np.ndarray] = {}
    grown = 0
    for center, radius, have in grow_jobs:
        # ladder up by 1.5x to bracket, then settle on the exact k-th
        # nearest triangle distance: an overshot support drags a wide,
        # badly-planar cap into the blend near the surface
        need = cfg.min_triangles_for_fit
        r_hi, count = radius, have
        dist = cand = None
        while count < need:
            r_hi *= 1.5
            cand, dist = near_distances(center, r_hi)
            count = int(np.count_nonzero(dist <= r_hi))
        kth = float(np.partition(dist, need - 1)[need - 1])
        radius = kth * (1.0 + 1e-9)
        member_overrides[n_leaves + grown] = cand[dist <= radius]
        centers_parts.append(center[None, :])
        radii_parts.append(np.array([radius]))
        grown += 1

    centers = np.concatenate(centers_parts) if centers_parts else np.empty((0, 3))
    radii = np.concatenate(radii_parts) if radii_parts else np.empty(0)
    if len(centers) == 0:
        raise EmptyMeshError("no octree cell reached any triangle")

    # ensure sphere coverage of every mesh vertex; a vertex can end up bare
    # when sphere_radius_scale < 0.5 leaves its own box's sphere too small
    # (possibly dropping that box as empty)
    tree = cKDTree(centers)
    d_near, near = tree.query(mesh.vertices, k=1)
    uncovered = d_near > radii[near]
    regrown = 0
    while np.any(uncovered):
        for cid in np.unique(near[uncovered]):
            radii[cid] *= 1.5
            member_overrides[int(cid)] = members_within(centers[cid], radii[cid], all_idx)
            regrown += 1
        uncovered = np.linalg.norm(mesh.vertices - centers[near], axis=1) > radii[near]

    pair_cells = (
        np.concatenate(leaf_pair_cells) if leaf_pair_cells else np.empty(0, dtype=np.int64)
    )
    pair_tris = (
        np.concatenate(leaf_pair_tris) if leaf_pair_tris else np.empty(0, dtype=np.int64)
    )
    if member_overrides:
        drop = np.isin(pair_cells, np.fromiter(member_overrides, dtype=np.int64))
        extra_c = [pair_cells[~drop]]
        extra_t = [pair_tris[~drop]]
        for cid, member in sorted(member_overrides.items()):
            extra_c.append(np.full(len(member), cid, dtype=np.int64))
            extra_t.append(member.astype(np.int64))
        pair_cells = np.concatenate(extra_c)
        pair_tris = np.concatenate(extra_t)

    bary, omega = _QUADRATURE[cfg.quadrature_order]
    quad_pts = (
        bary[None, :, 0, None] * v0[:, None, :]
        + bary[None, :, 1, None] * v1[:, None, :]
        + bary[None, :, 2, None] * v2[:, None, :]
    )
    normals_out, offsets_out = _batched_affines(
        centers, pair_cells, pair_tris, quad_pts, omega, areas, tri_normals, epsilon
    )

    diagnostics = {
        "cells": len(centers),
        "grown_spheres": grown,
        "coverage_regrown": regrown,
        "epsilon": epsilon,
    }
    return ImplicitSurface(centers, radii, normals_out, offsets_out, lo, hi, epsilon, diagnostics)


def cell_markers(surface: ImplicitSurface) -> TriangleMesh:
    """Debug geometry: one octahedron per cell, sized by its support radius."""
    n = len(surface.centers)
    offsets = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=np.float64,
    )
    verts = (surface.centers[:, None, :] + surface.radii[:, None, None] * offsets).reshape(-1, 3)
    faces = np.array(
        [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]],
        dtype=np.int64,
    )
    tris = (faces[None, :, :] + 6 * np.arange(n)[:, None, None]).reshape(-1, 3)
    return TriangleMesh(verts, tris)


# -- binary cache ------------------------------------------------------------

_MAGIC = b"MPUF"
_VERSION = 1


def save_surface(surface: ImplicitSurface, path) -> None:
    """Binary cache: magic, version, epsilon, bbox, then the cell arrays."""
    n = len(surface.centers)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<d", surface.epsilon))
        fh.write(struct.pack("<6d", *surface.bbox_lo, *surface.bbox_hi))
        fh.write(struct.pack("<Q", n))
        fh.write(surface.centers.astype("<f8").tobytes())
        fh.write(surface.radii.astype("<f8").tobytes())
        fh.write(surface.normals.astype("<f8").tobytes())
        fh.write(surface.offsets.astype("<f8").tobytes())


def load_surface(path) -> ImplicitSurface:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 4 + 8 + 48 + 8 or blob[:4] != _MAGIC:
        raise SurfaceCacheError(f"{path}: not a surface cache file")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != _VERSION:
        raise SurfaceCacheError(f"{path}: unsupported cache version {version}")
    epsilon = struct.unpack_from("<d", blob, 8)[0]
    box = struct.unpack_from("<6d", blob, 16)
    n = struct.unpack_from("<Q", blob, 64)[0]
    need = 72 + n * (3 + 1 + 3 + 1) * 8
    if len(blob) < need:
        raise SurfaceCacheError(f"{path}: truncated cache ({len(blob)} of {need} bytes)")
    off = 72
    centers = np.frombuffer(blob, dtype="<f8", count=3 * n, offset=off).reshape(n, 3)
    off += 24 * n
    radii = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
    off += 8 * n
    normals = np.frombuffer(blob, dtype="<f8", count=3 * n, offset=off).reshape(n, 3)
    off += 24 * n
    offsets = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
    return ImplicitSurface(centers, radii, normals, offsets, box[:3], box[3:], epsilon)
