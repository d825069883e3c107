"""Virtual range scanner over an implicit surface.

Viewpoints sit on a Fibonacci spiral of the model's bounding sphere, pushed
out by a standoff factor, each looking at the centroid. A view shoots a
resolution x resolution pinhole ray grid whose frustum contains the bounding
sphere; every ray marches in fixed steps from its entry into the bounding
sphere and bisects the first positive-to-nonpositive crossing of the field.
Merging is plain concatenation in view order, because poses are exact.

f is not a distance field, so no sphere tracing; the march step is tied to
the smallest feature size (minimum tube radius in the pipeline) to avoid
stepping through thin branches. Rays that never change sign, or whose
bisection fails to reach the hit tolerance, contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import InvalidParameterError, MissingNormalsError, TooFewPointsError
from .geometry import least_aligned_axis, normalize
from .implicit import ImplicitSurface

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
DOMAIN_MARGIN = 1.05  # bounding sphere inflation for the march domain
_COARSE_STEPS = 4  # fine steps folded into one far-field march step
_NORMAL_MODES = ("analytic", "pca-mst")


@dataclass
class ScanConfig:
    resolution: int = 100
    views: int = 6
    standoff: float = 1.5
    march_step: float = 0.5
    hit_tolerance: float = 1e-6
    normal_mode: str = "analytic"
    pca_k: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.resolution < 2:
            raise InvalidParameterError("resolution must be >= 2")
        if self.views < 1:
            raise InvalidParameterError("views must be >= 1")
        if not self.standoff > 1.0:
            raise InvalidParameterError("standoff must exceed 1")
        if not self.march_step > 0.0:
            raise InvalidParameterError("march_step must be positive")
        if not self.hit_tolerance > 0.0:
            raise InvalidParameterError("hit_tolerance must be positive")
        if self.normal_mode not in _NORMAL_MODES:
            raise InvalidParameterError(f"normal_mode must be one of {_NORMAL_MODES}")
        if self.pca_k < 3:
            raise InvalidParameterError("pca_k must be >= 3")


@dataclass
class Pose:
    position: np.ndarray
    forward: np.ndarray
    right: np.ndarray
    up: np.ndarray


def _look_at(position: np.ndarray, target: np.ndarray) -> Pose:
    forward = normalize(target - position)
    axis = least_aligned_axis(forward)
    right = normalize(np.cross(forward, axis))
    up = np.cross(right, forward)
    return Pose(position=position, forward=forward, right=right, up=up)


def _spiral_directions(n: int) -> np.ndarray:
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    k = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * k / (n - 1)
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * GOLDEN_ANGLE
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def viewpoints(bbox, views: int, standoff: float = 1.5) -> list[Pose]:
    """Poses on the bounding sphere pushed out by the standoff factor."""
    if views < 1:
        raise InvalidParameterError("views must be >= 1")
    lo, hi = np.asarray(bbox[0], dtype=np.float64), np.asarray(bbox[1], dtype=np.float64)
    centroid = (lo + hi) / 2.0
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    if radius <= 0.0:
        radius = 1.0
    dirs = _spiral_directions(views)
    return [_look_at(centroid + standoff * radius * d, centroid) for d in dirs]


def _domain_sphere(surface: ImplicitSurface) -> tuple[np.ndarray, float]:
    center = (surface.bbox_lo + surface.bbox_hi) / 2.0
    radius = 0.5 * surface.bbox_diagonal() * DOMAIN_MARGIN
    return center, radius


def _ray_sphere_spans(origins, directions, center, radius):
    """Entry/exit parameters of rays against a sphere; miss rows get t0>t1."""
    oc = origins - center
    b = np.einsum("ij,ij->i", oc, directions)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    hit = disc >= 0.0
    root = np.sqrt(np.maximum(disc, 0.0))
    t0 = np.where(hit, -b - root, 1.0)
    t1 = np.where(hit, -b + root, 0.0)
    t0 = np.maximum(t0, 0.0)
    return t0, t1


def _march_batch(surface, origins, directions, step, tolerance):
    """First surface crossing per ray, vectorized over the active set.

    Returns (hit mask, hit points). Uncovered field regions evaluate to a
    positive placeholder, which is safe here: outside every support the
    model is absent, so treating it as exterior loses nothing, and a
    bracket whose endpoint lies in such a gap simply fails the tolerance
    check and is dropped.

    Marching is two-level: coarse strides of several fine steps, dropping to
    fine stepping only inside strides where either endpoint's field dips
    below a guard band (the field tracks distance near the surface, so a
    large value at both ends means no crossing hides between them; sign
    changes always fall below the band). Rays lost to a field that outruns
    the band are dropped, never misplaced.
    """
    n = len(origins)
    center, radius = _domain_sphere(surface)
    t_lo, t_hi = _ray_sphere_spans(origins, directions, center, radius)
    active = t_lo < t_hi

    def field(rows, ts):
        return surface.eval_many(
            origins[rows] + ts[:, None] * directions[rows], uncovered_value=1.0
        )

    t = t_lo.copy()
    f = np.ones(n)
    idx = np.flatnonzero(active)
    if len(idx):
        f[idx] = field(idx, t[idx])
    bracket_lo = np.zeros(n)
    bracket_hi = np.zeros(n)
    bracketed = np.zeros(n, dtype=bool)

    def take_brackets(rows, t0, f0, t1, f1):
        crossed = (f0 > 0.0) & (f1 <= 0.0)
        hit_rows = rows[crossed]
        bracket_lo[hit_rows] = t0[crossed]
        bracket_hi[hit_rows] = t1[crossed]
        bracketed[hit_rows] = True
        active[hit_rows] = False
        return crossed

    stride = step * _COARSE_STEPS
    guard = 2.0 * stride
    max_strides = int(np.ceil(2.0 * radius / stride)) + 2
    for _ in range(max_strides):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        t_next = np.minimum(t[idx] + stride, t_hi[idx])
        f_next = field(idx, t_next)
        suspect = np.minimum(f[idx], f_next) <= guard
        s_rows = idx[suspect]
        if len(s_rows):
            t0s = t[s_rows]
            ends = t_next[suspect]
            cur_t = t0s.copy()
            cur_f = f[s_rows].copy()
            live = np.ones(len(s_rows), dtype=bool)
            for k in range(1, _COARSE_STEPS):
                sel = np.flatnonzero(live & (t0s + k * step < ends))
                if len(sel) == 0:
                    break
                tk = t0s[sel] + k * step
                fk = field(s_rows[sel], tk)
                crossed = take_brackets(s_rows[sel], cur_t[sel], cur_f[sel], tk, fk)
                live[sel[crossed]] = False
                adv = sel[~crossed]
                cur_t[adv] = tk[~crossed]
                cur_f[adv] = fk[~crossed]
            sel = np.flatnonzero(live)
            if len(sel):
                take_brackets(
                    s_rows[sel], cur_t[sel], cur_f[sel], ends[sel], f_next[suspect][sel]
                )

        still = active[idx]
        done = t_next >= t_hi[idx]
        active[idx[still & done]] = False
        move = still & ~done
        t[idx[move]] = t_next[move]
        f[idx[move]] = f_next[move]

    # bisect brackets down to the hit tolerance
    rows = np.flatnonzero(bracketed)
    lo = bracket_lo[rows]
    hi = bracket_hi[rows]
    settled = np.zeros(len(rows), dtype=bool)
    t_hit = np.zeros(len(rows))
    for _ in range(60):
        open_rows = np.flatnonzero(~settled)
        if len(open_rows) == 0:
            break
        mid = 0.5 * (lo[open_rows] + hi[open_rows])
        f_mid = surface.eval_many(
            origins[rows[open_rows]] + mid[:, None] * directions[rows[open_rows]],
            uncovered_value=1.0,
        )
        good = np.abs(f_mid) <= tolerance
        t_hit[open_rows[good]] = mid[good]
        settled[open_rows[good]] = True
        positive = f_mid > 0.0
        lo[open_rows[positive & ~good]] = mid[positive & ~good]
        hi[open_rows[~positive & ~good]] = mid[~positive & ~good]

    hit = np.zeros(n, dtype=bool)
    points = np.zeros((n, 3))
    ok = rows[settled]
    hit[ok] = True
    points[ok] = origins[ok] + t_hit[settled, None] * directions[ok]
    return hit, points


def default_march_feature(surface: ImplicitSurface) -> float:
    """Fallback feature size for mesh-only scans: a twentieth of the bbox
    diagonal. Pipelines pass the skeleton's minimum radius instead."""
    return surface.bbox_diagonal() / 20.0


def ray_cast(surface, origin, direction, cfg: ScanConfig | None = None, min_feature: float | None = None):
    """March one ray; returns the hit point or None."""
    cfg = cfg or ScanConfig()
    cfg.validate()
    origin = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise InvalidParameterError("direction must be unit length")
    feature = min_feature if min_feature is not None else default_march_feature(surface)
    step = cfg.march_step * feature
    hit, pts = _march_batch(surface, origin, direction, step, cfg.hit_tolerance)
    return pts[0] if hit[0] else None


def scan_view(
    surface: ImplicitSurface,
    pose: Pose,
    cfg: ScanConfig,
    min_feature: float | None = None,
) -> PointCloud:
    """One view's hits in row-major ray order; analytic normals if configured."""
    cfg.validate()
    center, radius = _domain_sphere(surface)
    dist = float(np.linalg.norm(pose.position - center))
    if dist <= radius:
        raise InvalidParameterError("viewpoint lies inside the march domain")
    half_angle = np.arcsin(min(1.0, radius / dist)) * 1.05
    tan_half = np.tan(min(half_angle, np.pi / 2 - 1e-6))

    res = cfg.resolution
    ndc = (np.arange(res) + 0.5) / res * 2.0 - 1.0
    v, u = np.meshgrid(ndc, ndc, indexing="ij")  # stripe-major: v selects the stripe
    dirs = (
        pose.forward[None, :]
        + (u.ravel()[:, None] * tan_half) * pose.right[None, :]
        + (v.ravel()[:, None] * tan_half) * pose.up[None, :]
    )
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(pose.position, dirs.shape)

    feature = min_feature if min_feature is not None else default_march_feature(surface)
    step = cfg.march_step * feature
    hit, pts = _march_batch(surface, origins, dirs, step, cfg.hit_tolerance)
    points = pts[hit]

    if cfg.normal_mode == "analytic" and len(points):
        grads = surface.gradient_many(points)
        norms = np.linalg.norm(grads, axis=1)
        safe = norms > 1e-12
        normals = np.where(safe[:, None], grads / np.where(safe, norms, 1.0)[:, None], -dirs[hit])
        # orient toward the sensor
        flip = np.einsum("ij,ij->i", normals, -dirs[hit]) < 0.0
        normals[flip] *= -1.0
        return PointCloud(points, normals)
    return PointCloud(points)


def merge_scans(scans: list[PointCloud], poses: list[Pose] | None = None) -> PointCloud:
    """Concatenate world-frame scans in view order; poses are already baked in."""
    if not scans:
        return PointCloud(np.empty((0, 3)))
    points = np.concatenate([s.points for s in scans], axis=0)
    if all(s.has_normals() or len(s) == 0 for s in scans):
        parts = [s.normals if s.has_normals() else np.empty((0, 3)) for s in scans]
        normals = np.concatenate(parts, axis=0)
        if len(normals) == len(points):
            return PointCloud(points, normals)
    return PointCloud(points)


def scan_surface(surface: ImplicitSurface, cfg: ScanConfig, min_feature: float | None = None) -> PointCloud:
    """All views, merged; PCA+MST normals attached here when that mode is on."""
    cfg.validate()
    poses = viewpoints((surface.bbox_lo, surface.bbox_hi), cfg.views, cfg.standoff)
    clouds = [scan_view(surface, pose, cfg, min_feature) for pose in poses]
    merged = merge_scans(clouds, poses)
    if cfg.normal_mode == "pca-mst" and len(merged) >= cfg.pca_k:
        merged = orient_normals(estimate_normals(merged, cfg.pca_k), cfg.pca_k)
    return merged


def estimate_normals(cloud: PointCloud, k: int, diagnostics: dict | None = None) -> PointCloud:
    """Unoriented PCA normals from the k nearest neighbors of each point."""
    if k < 3:
        raise InvalidParameterError("k must be >= 3")
    n = len(cloud)
    if n < k:
        raise TooFewPointsError(f"need at least k={k} points, got {n}")
    tree = cKDTree(cloud.points)
    _, nbr = tree.query(cloud.points, k=k)
    neigh = cloud.points[nbr]  # (n, k, 3), includes the point itself
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]  # smallest eigenvalue first
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.where(lengths > 0.0, lengths, 1.0)
    if diagnostics is not None:
        # rank-deficient neighborhoods: two vanishing eigenvalues
        scale = np.maximum(eigvals[:, 2], 1e-300)
        diagnostics["degenerate"] = int(np.count_nonzero(eigvals[:, 1] / scale < 1e-12))
    return PointCloud(cloud.points.copy(), normals)


def orient_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    """Resolve normal signs by flip propagation over the Euclidean MST.

    The seed is the highest point (ties: lowest index); its normal points
    away from the centroid. Each connected component of the k-NN graph is
    seeded the same way.
    """
    if not cloud.has_normals():
        raise MissingNormalsError("orient_normals needs normals")
    n = len(cloud)
    if n == 0:
        return cloud
    if n == 1:
        return PointCloud(cloud.points.copy(), cloud.normals.copy())

    points = cloud.points
    normals = cloud.normals.copy()
    kk = min(k, n - 1)
    tree = cKDTree(points)
    dist, nbr = tree.query(points, k=kk + 1)
    rows = np.repeat(np.arange(n), kk)
    cols = nbr[:, 1:].ravel()
    weights = np.maximum(dist[:, 1:].ravel(), 1e-300)

    from scipy.sparse import coo_matrix

    graph = coo_matrix((weights, (rows, cols)), shape=(n, n))
    mst = minimum_spanning_tree(graph).tocoo()
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in zip(mst.row, mst.col):
        adj[a].append(b)
        adj[b].append(a)
    for neighbors in adj:
        neighbors.sort()

    centroid = points.mean(axis=0)
    visited = np.zeros(n, dtype=bool)
    order = np.lexsort((np.arange(n), -points[:, 2]))
    for seed in order:
        if visited[seed]:
            continue
        outward = points[seed] - centroid
        if np.linalg.norm(outward) < 1e-12:
            outward = np.array([0.0, 0.0, 1.0])
        if normals[seed] @ outward < 0.0:
            normals[seed] *= -1.0
        visited[seed] = True
        queue = [seed]
        while queue:
            here = queue.pop(0)
            for other in adj[here]:
                if visited[other]:
                    continue
                if normals[other] @ normals[here] < 0.0:
                    normals[other] *= -1.0
                visited[other] = True
                queue.append(other)
    return PointCloud(points.copy(), normals)
