"""Virtual scanning: viewpoints, ray marching, merging, and normal recovery."""

import numpy as np
import pytest

from treescan.cloud import PointCloud
from treescan.errors import (
    InvalidParameterError,
    MissingNormalsError,
    TooFewPointsError,
)
from treescan.scanner import (
    ScanConfig,
    default_march_feature,
    estimate_normals,
    merge_scans,
    orient_normals,
    ray_cast,
    scan_surface,
    scan_view,
    viewpoints,
)

from .conftest import fibonacci_sphere

UNIT_BOX = (np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]))


def angles_between_rows(d):
    dots = np.clip(d @ d.T, -1.0, 1.0)
    return np.degrees(np.arccos(dots))


# -- viewpoints ------------------------------------------------------------------


def test_two_viewpoints_are_antipodal():
    a, b = viewpoints(UNIT_BOX, 2)
    assert np.linalg.norm(a.position + b.position) <= 1e-9


def test_six_viewpoints_spread_out():
    poses = viewpoints(UNIT_BOX, 6)
    dirs = np.array([p.position / np.linalg.norm(p.position) for p in poses])
    ang = angles_between_rows(dirs)
    np.fill_diagonal(ang, 180.0)
    assert ang.min() >= 40.0


def test_viewpoints_look_at_centroid_and_keep_standoff():
    lo = np.array([1.0, 2.0, 3.0])
    hi = np.array([3.0, 6.0, 4.0])
    centroid = (lo + hi) / 2.0
    radius = 0.5 * np.linalg.norm(hi - lo)
    for pose in viewpoints((lo, hi), 5, standoff=2.0):
        to_center = centroid - pose.position
        dist = np.linalg.norm(to_center)
        assert dist == pytest.approx(2.0 * radius, rel=1e-12)
        assert np.linalg.norm(pose.forward - to_center / dist) <= 1e-9
        # orthonormal right-handed frame
        assert abs(np.linalg.norm(pose.right) - 1.0) <= 1e-12
        assert abs(pose.forward @ pose.right) <= 1e-12
        assert np.linalg.norm(np.cross(pose.right, pose.forward) - pose.up) <= 1e-12


def test_viewpoints_reject_zero_views():
    with pytest.raises(InvalidParameterError):
        viewpoints(UNIT_BOX, 0)


# -- single rays -----------------------------------------------------------------


def test_ray_hits_sphere_front_face(sphere_surface):
    hit = ray_cast(sphere_surface, [0.0, 0.0, -2.0], [0.0, 0.0, 1.0])
    assert hit is not None
    assert np.linalg.norm(hit - np.array([0.0, 0.0, -1.0])) <= 5e-3
    assert abs(float(sphere_surface.eval_many(hit[None])[0])) <= ScanConfig().hit_tolerance


def test_ray_misses_off_axis(sphere_surface):
    assert ray_cast(sphere_surface, [0.0, 5.0, -2.0], [0.0, 0.0, 1.0]) is None


def test_ray_cast_requires_unit_direction(sphere_surface):
    with pytest.raises(InvalidParameterError):
        ray_cast(sphere_surface, [0.0, 0.0, -2.0], [0.0, 0.0, 2.0])


def test_ray_cast_explicit_feature_size(sphere_surface):
    hit = ray_cast(sphere_surface, [0.0, 0.0, -2.0], [0.0, 0.0, 1.0], min_feature=0.1)
    assert hit is not None
    assert np.linalg.norm(hit - np.array([0.0, 0.0, -1.0])) <= 5e-3


def test_default_march_feature_is_twentieth_of_diagonal(sphere_surface):
    assert default_march_feature(sphere_surface) == pytest.approx(
        sphere_surface.bbox_diagonal() / 20.0
    )


# -- whole views -----------------------------------------------------------------


def test_scan_view_plane_hits_lie_on_plane(plane_surface):
    cfg = ScanConfig(resolution=24, views=1)
    pose = viewpoints((plane_surface.bbox_lo, plane_surface.bbox_hi), 1, 2.5)[0]
    cloud = scan_view(plane_surface, pose, cfg, min_feature=0.2)
    assert len(cloud) > 50
    assert np.max(np.abs(cloud.points[:, 2])) <= cfg.hit_tolerance + 1e-12


def test_scan_view_resolution_scaling(sphere_surface_320):
    pose = viewpoints((sphere_surface_320.bbox_lo, sphere_surface_320.bbox_hi), 1)[0]
    low = scan_view(sphere_surface_320, pose, ScanConfig(resolution=20))
    high = scan_view(sphere_surface_320, pose, ScanConfig(resolution=40))
    assert len(high) >= 3 * len(low)


def test_scan_view_hits_satisfy_field_tolerance(sphere_surface_320):
    cfg = ScanConfig(resolution=30)
    pose = viewpoints((sphere_surface_320.bbox_lo, sphere_surface_320.bbox_hi), 1)[0]
    cloud = scan_view(sphere_surface_320, pose, cfg)
    residuals = np.abs(sphere_surface_320.eval_many(cloud.points))
    assert np.max(residuals) <= cfg.hit_tolerance + 1e-15


def test_scan_view_sphere_points_on_shell(sphere_surface):
    pose = viewpoints((sphere_surface.bbox_lo, sphere_surface.bbox_hi), 1)[0]
    cloud = scan_view(sphere_surface, pose, ScanConfig(resolution=40))
    r = np.linalg.norm(cloud.points, axis=1)
    assert np.max(np.abs(r - 1.0)) <= 5e-3


def test_scan_view_rejects_interior_viewpoint(sphere_surface_320):
    pose = viewpoints((sphere_surface_320.bbox_lo, sphere_surface_320.bbox_hi), 1)[0]
    inside = type(pose)(
        position=np.zeros(3), forward=pose.forward, right=pose.right, up=pose.up
    )
    with pytest.raises(InvalidParameterError, match="inside"):
        scan_view(sphere_surface_320, inside, ScanConfig(resolution=10))


def test_analytic_normals_face_the_sensor(sphere_surface_320):
    pose = viewpoints((sphere_surface_320.bbox_lo, sphere_surface_320.bbox_hi), 1)[0]
    cloud = scan_view(sphere_surface_320, pose, ScanConfig(resolution=30))
    assert cloud.has_normals()
    assert np.allclose(np.linalg.norm(cloud.normals, axis=1), 1.0, atol=1e-9)
    grads = sphere_surface_320.gradient_many(cloud.points)
    cross = np.linalg.norm(np.cross(cloud.normals, grads), axis=1)
    assert np.max(cross / np.linalg.norm(grads, axis=1)) <= 1e-9
    toward_sensor = np.einsum("ij,ij->i", cloud.normals, pose.position - cloud.points)
    assert np.min(toward_sensor) > 0.0


# -- merging ---------------------------------------------------------------------


def test_merge_concatenates_in_view_order(sphere_surface_320):
    poses = viewpoints((sphere_surface_320.bbox_lo, sphere_surface_320.bbox_hi), 2)
    cfg = ScanConfig(resolution=20)
    scans = [scan_view(sphere_surface_320, p, cfg) for p in poses]
    merged = merge_scans(scans)
    assert len(merged) == sum(len(s) for s in scans)
    assert np.array_equal(merged.points[: len(scans[0])], scans[0].points)
    assert np.array_equal(merged.points[len(scans[0]) :], scans[1].points)
    assert merged.has_normals()


def test_merge_handles_empty_input():
    assert len(merge_scans([])) == 0


def test_merged_sphere_scan_covers_most_directions(sphere_scan):
    # 18 x 36 spherical histogram of hit directions; good multi-view
    # coverage means nearly every bin sees at least one point
    p = sphere_scan.points
    r = np.linalg.norm(p, axis=1)
    theta = np.arccos(np.clip(p[:, 2] / r, -1.0, 1.0))
    phi = np.arctan2(p[:, 1], p[:, 0])
    ti = np.clip((theta / np.pi * 18).astype(int), 0, 17)
    pi_ = np.clip(((phi + np.pi) / (2 * np.pi) * 36).astype(int), 0, 35)
    occupied = len(set(zip(ti.tolist(), pi_.tolist())))
    assert occupied / (18 * 36) >= 0.95


def test_scan_surface_is_deterministic(sphere_surface_320):
    cfg = ScanConfig(resolution=25, views=2)
    a = scan_surface(sphere_surface_320, cfg)
    b = scan_surface(sphere_surface_320, cfg)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.normals, b.normals)


# -- normal estimation -------------------------------------------------------------


def test_pca_normals_on_plane():
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(-1, 1, 2000), rng.uniform(-1, 1, 2000), np.zeros(2000)])
    cloud = estimate_normals(PointCloud(pts), k=12)
    assert np.all(np.abs(cloud.normals[:, 2]) >= np.cos(np.radians(1.0)))
    assert np.allclose(np.linalg.norm(cloud.normals, axis=1), 1.0, atol=1e-12)


def test_pca_normals_on_sphere_radial():
    pts = fibonacci_sphere(10_000)
    cloud = estimate_normals(PointCloud(pts), k=16)
    radial = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    cos = np.abs(np.einsum("ij,ij->i", cloud.normals, radial))
    assert np.min(cos) >= np.cos(np.radians(5.0))


def test_pca_normals_flag_colinear_neighborhoods():
    pts = np.column_stack([np.linspace(0, 1, 50), np.zeros(50), np.zeros(50)])
    diag: dict = {}
    cloud = estimate_normals(PointCloud(pts), k=5, diagnostics=diag)
    assert diag["degenerate"] == 50
    assert np.allclose(np.linalg.norm(cloud.normals, axis=1), 1.0)


def test_pca_normals_input_validation():
    pts = np.zeros((5, 3))
    with pytest.raises(InvalidParameterError):
        estimate_normals(PointCloud(pts), k=2)
    with pytest.raises(TooFewPointsError):
        estimate_normals(PointCloud(pts), k=16)


# -- normal orientation --------------------------------------------------------------


def test_orientation_unifies_plane_signs():
    rng = np.random.default_rng(9)
    pts = np.column_stack([rng.uniform(-1, 1, 500), rng.uniform(-1, 1, 500), np.zeros(500)])
    flip = rng.random(500) < 0.5
    normals = np.where(flip[:, None], [[0.0, 0.0, -1.0]], [[0.0, 0.0, 1.0]])
    oriented = orient_normals(PointCloud(pts, normals), k=8)
    signs = np.sign(oriented.normals[:, 2])
    assert np.all(signs == signs[0])


def test_orientation_sphere_mostly_outward():
    pts = fibonacci_sphere(2000)
    cloud = orient_normals(estimate_normals(PointCloud(pts), k=16), k=16)
    radial = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    outward = np.einsum("ij,ij->i", cloud.normals, radial) > 0.0
    assert outward.mean() >= 0.99


def test_orientation_single_point_noop():
    cloud = PointCloud(np.array([[1.0, 2.0, 3.0]]), np.array([[0.0, 0.0, -1.0]]))
    out = orient_normals(cloud)
    assert np.array_equal(out.points, cloud.points)
    assert np.array_equal(out.normals, cloud.normals)


def test_orientation_requires_normals():
    with pytest.raises(MissingNormalsError):
        orient_normals(PointCloud(np.zeros((3, 3))))


def test_pca_mst_scan_mode(sphere_surface_320):
    cfg = ScanConfig(resolution=25, views=2, normal_mode="pca-mst")
    cloud = scan_surface(sphere_surface_320, cfg)
    assert cloud.has_normals()
    radial = cloud.points / np.linalg.norm(cloud.points, axis=1, keepdims=True)
    outward = np.einsum("ij,ij->i", cloud.normals, radial) > 0.0
    assert outward.mean() >= 0.9


# -- config validation -----------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"resolution": 1},
        {"views": 0},
        {"standoff": 1.0},
        {"march_step": 0.0},
        {"hit_tolerance": 0.0},
        {"normal_mode": "guess"},
        {"pca_k": 2},
    ],
)
def test_scan_config_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        ScanConfig(**kwargs).validate()
