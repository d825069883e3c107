"""PointCloud container and PLY serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from treescan import (
    MalformedHeaderError,
    PointCloud,
    TruncatedPayloadError,
    read_ply,
    write_ply,
)

f32able = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, width=32)


def random_cloud(n, seed, with_normals=True):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, 3))
    if not with_normals:
        return PointCloud(pts)
    nrm = rng.standard_normal((n, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return PointCloud(pts, nrm)


def test_length_and_normals_flag():
    c = random_cloud(5, 0)
    assert len(c) == 5 and c.has_normals()
    assert not random_cloud(5, 0, with_normals=False).has_normals()


def test_mismatched_normals_rejected():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), np.zeros((2, 3)))


def test_binary_round_trip_is_exact_at_f32(tmp_path):
    cloud = random_cloud(257, 1)
    path = tmp_path / "c.ply"
    write_ply(cloud, path)
    back = read_ply(path)
    assert np.array_equal(back.points, cloud.points.astype(np.float32).astype(np.float64))
    assert np.array_equal(back.normals, cloud.normals.astype(np.float32).astype(np.float64))


def test_ascii_round_trip(tmp_path):
    cloud = random_cloud(17, 2, with_normals=False)
    path = tmp_path / "a.ply"
    write_ply(cloud, path, binary=False)
    back = read_ply(path)
    assert not back.has_normals()
    assert np.allclose(back.points, cloud.points, atol=1e-6, rtol=1e-6)


@settings(max_examples=20)
@given(arrays(np.float64, (7, 3), elements=f32able))
def test_round_trip_any_values(tmp_path_factory, pts):
    cloud = PointCloud(pts)
    path = tmp_path_factory.mktemp("ply") / "h.ply"
    write_ply(cloud, path)
    assert np.array_equal(read_ply(path).points, pts.astype(np.float32).astype(np.float64))


def test_handwritten_ascii_fixture(tmp_path):
    path = tmp_path / "fixture.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n"
        "0 0 0\n1.5 -2 3\n0.25 0.5 0.75\n"
    )
    cloud = read_ply(path)
    assert len(cloud) == 3
    assert np.allclose(cloud.points[1], [1.5, -2.0, 3.0])


def test_truncated_binary_payload(tmp_path):
    cloud = random_cloud(10, 3, with_normals=False)
    path = tmp_path / "t.ply"
    write_ply(cloud, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(TruncatedPayloadError):
        read_ply(path)


def test_truncated_ascii_payload(tmp_path):
    path = tmp_path / "t.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 10\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n1 1 1\n"
    )
    with pytest.raises(TruncatedPayloadError):
        read_ply(path)


def test_malformed_headers(tmp_path):
    cases = {
        "not_ply.ply": "plx\nformat ascii 1.0\nend_header\n",
        "no_end.ply": "ply\nformat ascii 1.0\nelement vertex 1\n",
        "bad_format.ply": "ply\nformat big_endian 1.0\nelement vertex 0\nend_header\n",
        "no_xyz.ply": (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nend_header\n0 0\n"
        ),
    }
    for name, text in cases.items():
        path = tmp_path / name
        path.write_text(text)
        with pytest.raises(MalformedHeaderError):
            read_ply(path)


def test_double_precision_properties_accepted(tmp_path):
    path = tmp_path / "d.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property double x\nproperty double y\nproperty double z\n"
        "end_header\n0.1 0.2 0.3\n"
    )
    cloud = read_ply(path)
    assert np.allclose(cloud.points[0], [0.1, 0.2, 0.3], atol=1e-12)


def test_transformed_applies_rigid_motion():
    cloud = random_cloud(50, 4)
    theta = 0.3
    rot = np.array(
        [
            [np.cos(theta), -np.sin(theta), 0.0],
            [np.sin(theta), np.cos(theta), 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    t = np.array([1.0, -2.0, 0.5])
    moved = cloud.transformed(rot, t)
    assert np.allclose(moved.points, cloud.points @ rot.T + t)
    assert np.allclose(moved.normals, cloud.normals @ rot.T)
    # pairwise distances survive the motion
    d0 = np.linalg.norm(cloud.points[0] - cloud.points[1])
    d1 = np.linalg.norm(moved.points[0] - moved.points[1])
    assert np.isclose(d0, d1)


def test_bbox():
    cloud = PointCloud(np.array([[0.0, 1.0, 2.0], [-1.0, 5.0, 0.0]]))
    lo, hi = cloud.bbox()
    assert np.array_equal(lo, [-1.0, 1.0, 0.0])
    assert np.array_equal(hi, [0.0, 5.0, 2.0])
