"""Controlled point-cloud degradations.

Four kinds, always derived from the clean cloud: density (rescanning at
another resolution), Gaussian noise along normals, occlusion balls, and
locally uneven density via PCA-guided insertion.

All randomness is counter-based: value = hash(seed, stream, point index).
Nothing depends on evaluation order or on how work is split across workers,
and noise offsets depend only on (seed, index), so degrading a rigidly
moved cloud gives the rigidly moved degraded cloud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import EmptyCloudError, InvalidParameterError, MissingNormalsError
from .rng import normal, uniform, uniform_int
from .scanner import ScanConfig, scan_surface

# stream ids; fixed so seeds stay decoupled between degradation kinds
STREAM_NOISE = 1
STREAM_OCCLUSION_PICK = 2
STREAM_UNEVEN_L1 = 3
STREAM_UNEVEN_L2 = 4
STREAM_REGION = 5

DENSITY_RESOLUTIONS = (50, 100, 150)


@dataclass
class NoiseParams:
    s: float = 0.02
    d: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.s < 0.0:
            raise InvalidParameterError("s must be non-negative")
        if self.d < 1:
            raise InvalidParameterError("d must be >= 1")


@dataclass
class OcclusionParams:
    N: int = 2
    lam: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        if self.N < 0:
            raise InvalidParameterError("N must be >= 0")
        if not self.lam > 0.0:
            raise InvalidParameterError("lambda must be positive")


@dataclass
class UnevenParams:
    region: tuple | None = None  # ((lo x,y,z), (hi x,y,z)); None = seeded default
    r: float = 0.05
    lambda1_range: tuple[float, float] | None = None  # None = [-r/2, r/2]
    lambda2_range: tuple[float, float] | None = None
    seed: int = 0

    def validate(self) -> None:
        if not self.r > 0.0:
            raise InvalidParameterError("r must be positive")
        if self.region is not None:
            lo, hi = np.asarray(self.region[0]), np.asarray(self.region[1])
            if not np.all(hi > lo):
                raise InvalidParameterError("region must have positive extent on every axis")
        for rng_ in (self.lambda1_range, self.lambda2_range):
            if rng_ is not None and not rng_[1] >= rng_[0]:
                raise InvalidParameterError("lambda ranges must be ordered")


def add_noise(cloud: PointCloud, p: NoiseParams) -> PointCloud:
    """Insert a noisy copy of every d-th point, displaced along its normal.

    Donors are indices 0, d, 2d, ...; each inserted point is
    q_i + G_i * s * n_i with G_i standard normal drawn by donor index, so
    the insert count is ceil(|Q|/d) and originals are kept untouched.
    """
    p.validate()
    if not cloud.has_normals():
        raise MissingNormalsError("add_noise needs normals")
    n = len(cloud)
    donors = np.arange(0, n, p.d)
    g = normal(p.seed, STREAM_NOISE, donors)
    inserted = cloud.points[donors] + (g * p.s)[:, None] * cloud.normals[donors]
    points = np.concatenate([cloud.points, inserted], axis=0)
    normals = np.concatenate([cloud.normals, cloud.normals[donors]], axis=0)
    return PointCloud(points, normals)


def occlusion_balls(cloud: PointCloud, bbox, p: OcclusionParams) -> list[tuple[np.ndarray, float]]:
    """The seeded ball list: centers are cloud points, radius = lam * |extent|."""
    p.validate()
    if p.N == 0:
        return []
    if len(cloud) == 0:
        raise EmptyCloudError("cannot place occlusion balls on an empty cloud")
    lo = np.asarray(bbox[0], dtype=np.float64)
    hi = np.asarray(bbox[1], dtype=np.float64)
    radius = p.lam * float(np.linalg.norm(hi - lo))
    picks = uniform_int(p.seed, STREAM_OCCLUSION_PICK, np.arange(p.N), 0, len(cloud) - 1)
    return [(cloud.points[i].copy(), radius) for i in picks]


def occlude_with_balls(cloud: PointCloud, balls) -> PointCloud:
    """Drop points strictly inside any ball; survivors keep their order."""
    if not balls:
        return PointCloud(cloud.points.copy(), None if cloud.normals is None else cloud.normals.copy())
    keep = np.ones(len(cloud), dtype=bool)
    for center, radius in balls:
        d = np.linalg.norm(cloud.points - np.asarray(center), axis=1)
        keep &= d >= radius
    normals = cloud.normals[keep] if cloud.has_normals() else None
    return PointCloud(cloud.points[keep], normals)


def occlude(cloud: PointCloud, bbox, p: OcclusionParams):
    """Remove the interiors of N seeded balls.

    Returns (cloud, balls); the ball list goes into the dataset manifest and
    feeds occlude_with_balls for idempotence checks.
    """
    balls = occlusion_balls(cloud, bbox, p)
    return occlude_with_balls(cloud, balls), balls


def default_region(bbox, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded box covering 30% of each bbox axis at a random offset."""
    lo = np.asarray(bbox[0], dtype=np.float64)
    hi = np.asarray(bbox[1], dtype=np.float64)
    extent = hi - lo
    u = uniform(seed, STREAM_REGION, np.arange(3))
    start = lo + u * 0.7 * extent
    return start, start + 0.3 * extent


def uneven_density(cloud: PointCloud, p: UnevenParams, diagnostics: dict | None = None) -> PointCloud:
    """Thicken a box region by inserting one PCA-jittered copy per point.

    Each in-region point with at least 3 other points within radius r gets a
    companion at q + lambda1*P_D + lambda2*S_D, where P_D/S_D are the two
    leading principal directions of its neighborhood (self included) and
    lambda1/lambda2 are drawn per point index. Points elsewhere, and points
    with too few neighbors, pass through untouched.

    Principal directions get a geometric sign: positive dot with the offset
    of the point from its neighborhood centroid. That keeps the operation
    equivariant under rigid motion. When the offset is (numerically)
    perpendicular to the eigenvector, the sign falls back to making the
    first non-negligible component positive, and the point is counted as
    degenerate in diagnostics.
    """
    p.validate()
    n = len(cloud)
    if p.region is None:
        raise InvalidParameterError("uneven_density needs a region (see default_region)")
    lo = np.asarray(p.region[0], dtype=np.float64)
    hi = np.asarray(p.region[1], dtype=np.float64)
    lam1_lo, lam1_hi = p.lambda1_range if p.lambda1_range is not None else (-p.r / 2, p.r / 2)
    lam2_lo, lam2_hi = p.lambda2_range if p.lambda2_range is not None else (-p.r / 2, p.r / 2)

    if n == 0:
        return PointCloud(cloud.points.copy())

    in_region = np.all((cloud.points >= lo) & (cloud.points <= hi), axis=1)
    tree = cKDTree(cloud.points)
    degenerate = 0
    skipped = 0
    donor_idx = []
    inserts = []
    for i in np.flatnonzero(in_region):
        nbr = tree.query_ball_point(cloud.points[i], p.r)
        if len(nbr) < 4:  # self plus at least 3 others
            skipped += 1
            continue
        neigh = cloud.points[nbr]
        centroid = neigh.mean(axis=0)
        centered = neigh - centroid
        cov = centered.T @ centered / len(nbr)
        _, vecs = np.linalg.eigh(cov)
        pd, sd = vecs[:, 2], vecs[:, 1]
        offset = cloud.points[i] - centroid
        flipped = False
        for v_idx, v in ((2, pd), (1, sd)):
            d = float(v @ offset)
            if abs(d) > 1e-12 * p.r:
                if d < 0.0:
                    v *= -1.0
            else:
                big = np.flatnonzero(np.abs(v) > 1e-12)
                if len(big) and v[big[0]] < 0.0:
                    v *= -1.0
                flipped = True
        if flipped:
            degenerate += 1
        lam1 = lam1_lo + float(uniform(p.seed, STREAM_UNEVEN_L1, i)) * (lam1_hi - lam1_lo)
        lam2 = lam2_lo + float(uniform(p.seed, STREAM_UNEVEN_L2, i)) * (lam2_hi - lam2_lo)
        donor_idx.append(i)
        inserts.append(cloud.points[i] + lam1 * pd + lam2 * sd)

    if diagnostics is not None:
        diagnostics["degenerate"] = degenerate
        diagnostics["skipped"] = skipped
        diagnostics["inserted"] = len(inserts)

    if not inserts:
        normals = cloud.normals.copy() if cloud.has_normals() else None
        return PointCloud(cloud.points.copy(), normals)
    points = np.concatenate([cloud.points, np.array(inserts)], axis=0)
    normals = None
    if cloud.has_normals():
        normals = np.concatenate([cloud.normals, cloud.normals[np.array(donor_idx)]], axis=0)
    return PointCloud(points, normals)


def density_variants(surface, base_cfg: ScanConfig, min_feature: float | None = None):
    """Fresh scans at resolutions 50/100/150 with the base views and seed."""
    clouds = []
    for res in DENSITY_RESOLUTIONS:
        cfg = ScanConfig(
            resolution=res,
            views=base_cfg.views,
            standoff=base_cfg.standoff,
            march_step=base_cfg.march_step,
            hit_tolerance=base_cfg.hit_tolerance,
            normal_mode=base_cfg.normal_mode,
            pca_k=base_cfg.pca_k,
            seed=base_cfg.seed,
        )
        clouds.append(scan_surface(surface, cfg, min_feature))
    return tuple(clouds)
