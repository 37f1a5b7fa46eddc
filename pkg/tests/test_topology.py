"""Disk transforms, RLT/MRLT profiles, and the two geometry scores."""

import math

import numpy as np
import pytest

from csrecon.persistence import PersistenceDiagram
from csrecon.topology import (
    GsConfig,
    TopologyError,
    filtration_alpha_max,
    geometry_score,
    gs_complement_augmented,
    mean_nn_spacing,
    mrlt_profile,
    radial_exp_stretch,
    rlt_profile,
    rotate_quarters,
    square_to_disk,
)


def unit_circle(n):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


# ---------------------------------------------------------------- transforms


def test_square_to_disk_landmarks():
    pts = np.array([[np.pi, np.pi], [-np.pi, np.pi], [np.pi, 0.0], [0.0, 0.0]])
    out = square_to_disk(pts)
    s = 1.0 / np.sqrt(2.0)
    assert np.allclose(out[0], [s, s], atol=1e-12)
    assert np.allclose(out[1], [-s, s], atol=1e-12)
    assert np.allclose(out[2], [1.0, 0.0], atol=1e-12)
    assert np.allclose(out[3], [0.0, 0.0])


def test_square_to_disk_stays_inside_disk():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-np.pi, np.pi, size=(500, 2))
    out = square_to_disk(pts)
    assert np.all(np.linalg.norm(out, axis=1) <= 1.0 + 1e-12)


def test_square_to_disk_clamps_then_rejects():
    near = np.array([[np.pi + 5e-10, 0.0]])
    assert np.allclose(square_to_disk(near), [[1.0, 0.0]], atol=1e-12)
    with pytest.raises(TopologyError):
        square_to_disk(np.array([[np.pi + 1e-6, 0.0]]))


def test_radial_stretch_reference_values():
    out = radial_exp_stretch(np.array([[0.5, 0.0], [1.0, 0.0], [0.0, 0.0]]))
    expected_half = (math.sqrt(math.e) - 1.0) / (math.e - 1.0)
    assert abs(out[0, 0] - expected_half) < 1e-12
    assert out[0, 1] == 0.0
    assert np.allclose(out[1], [1.0, 0.0], atol=1e-12)
    assert np.allclose(out[2], [0.0, 0.0])


def test_radial_stretch_monotone_and_shrinking_inside():
    radii = np.linspace(0.01, 0.99, 50)
    pts = np.stack([radii, np.zeros_like(radii)], axis=1)
    out = radial_exp_stretch(pts)[:, 0]
    assert np.all(np.diff(out) > 0)
    # (e^r - 1)/(e - 1) < r on (0, 1): the map pulls interior points inward
    assert np.all(out < radii)


def test_rotate_quarters_exact():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(100, 2))
    assert np.array_equal(rotate_quarters(pts, 0), pts)
    q1 = rotate_quarters(pts, 1)
    assert np.array_equal(q1[:, 0], -pts[:, 1])
    assert np.array_equal(q1[:, 1], pts[:, 0])
    # four quarter turns come back bitwise
    r = pts
    for _ in range(4):
        r = rotate_quarters(r, 1)
    assert np.array_equal(r, pts)
    assert np.array_equal(rotate_quarters(pts, 2), rotate_quarters(q1, 1))


# --------------------------------------------------------------- rlt profile


def test_rlt_profile_single_full_interval():
    d = PersistenceDiagram(
        i0=np.array([[0.0, 1.0]]), i1=np.array([[0.0, 1.0]]), alpha_max=1.0
    )
    prof = rlt_profile(d, t_max=3, alpha_steps=1000)
    assert np.allclose(prof, [0.0, 1.0, 0.0])


def test_rlt_profile_half_interval():
    d = PersistenceDiagram(
        i0=np.array([[0.0, 1.0]]), i1=np.array([[0.0, 0.5]]), alpha_max=1.0
    )
    prof = rlt_profile(d, t_max=2, alpha_steps=1000)
    assert np.allclose(prof, [0.5, 0.5])


def test_rlt_profile_two_overlapping_loops():
    # beta1 = 2 on [0.2, 0.4], 1 on [0, 0.2) and (0.4, 0.6], 0 above
    d = PersistenceDiagram(
        i0=np.array([[0.0, 1.0]]),
        i1=np.array([[0.0, 0.4], [0.2, 0.6]]),
        alpha_max=1.0,
    )
    prof = rlt_profile(d, t_max=4, alpha_steps=1000)
    assert np.allclose(prof, [0.4, 0.4, 0.2, 0.0])


def test_rlt_profile_sums_to_one_when_t_max_covers():
    rng = np.random.default_rng(2)
    cloud = rng.uniform(-1, 1, size=(120, 2))
    cfg = GsConfig(n_landmarks=12, n_repeats=3, gamma=0.5, t_max=40, seed=3)
    prof = mrlt_profile(cloud, cfg)
    assert prof.sum() <= 1.0 + 1e-9
    assert prof.sum() > 0.999  # 40 slots cover every betti_1 value seen here


# ------------------------------------------------------------ mrlt anchors


def test_circle_cloud_concentrates_at_one_loop():
    cfg = GsConfig(n_landmarks=20, n_repeats=1, gamma=4.0, t_max=3, seed=0)
    prof = mrlt_profile(unit_circle(20), cfg)
    assert prof[1] >= 0.5


def test_disk_cloud_concentrates_at_no_loops():
    rng = np.random.default_rng(3)
    n = 300
    r = np.sqrt(rng.uniform(0, 1, n))
    a = rng.uniform(0, 2 * np.pi, n)
    disk = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    cfg = GsConfig(n_landmarks=24, n_repeats=2, gamma=1.0, t_max=3, seed=1)
    prof = mrlt_profile(disk, cfg)
    assert prof[0] >= 0.5


def test_mrlt_rips_complex_also_supported():
    cfg = GsConfig(
        n_landmarks=12, n_repeats=2, gamma=0.5, t_max=3, complex="rips", seed=4
    )
    rng = np.random.default_rng(5)
    prof = mrlt_profile(rng.uniform(-1, 1, size=(60, 2)), cfg)
    assert prof.shape == (3,)
    assert prof.sum() <= 1.0 + 1e-9


# ------------------------------------------------------------------- scores


def test_gs_identity_is_exactly_zero():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(150, 2))
    cfg = GsConfig(n_landmarks=16, n_repeats=3, gamma=0.5, t_max=3, seed=7)
    assert geometry_score(x, x, cfg) == 0.0


def test_gs_symmetry_is_exact():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(150, 2))
    y = rng.normal(size=(150, 2)) * 1.4
    cfg = GsConfig(n_landmarks=16, n_repeats=3, gamma=0.5, t_max=3, seed=9)
    assert geometry_score(x, y, cfg) == geometry_score(y, x, cfg)


def test_gs_rigid_rotation_invariance():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(200, 2))
    y = rng.normal(size=(200, 2)) * 1.3
    cfg = GsConfig(n_landmarks=16, n_repeats=4, gamma=0.5, t_max=3, seed=2)
    base = geometry_score(x, y, cfg)
    for ang in (0.3, 0.7, 2.1):
        rot = np.array(
            [[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]]
        )
        assert abs(geometry_score(x @ rot.T, y @ rot.T, cfg) - base) <= 1e-9


def test_gs_separates_circle_from_disk():
    rng = np.random.default_rng(11)
    n = 300
    r = np.sqrt(rng.uniform(0, 1, n))
    a = rng.uniform(0, 2 * np.pi, n)
    disk = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    ring = unit_circle(n)
    cfg = GsConfig(n_landmarks=20, n_repeats=4, gamma=2.0, t_max=3, seed=12)
    apart = geometry_score(ring, disk, cfg)
    same = geometry_score(disk, disk, cfg)
    assert apart > 0.05
    assert same == 0.0


def test_gsc_complement_missing_flag():
    rng = np.random.default_rng(13)
    x1 = rng.uniform(-np.pi, np.pi, size=(200, 2))
    x2 = rng.uniform(-np.pi, np.pi, size=(200, 2))
    tiny = rng.uniform(-np.pi, np.pi, size=(5, 2))
    cfg = GsConfig(n_landmarks=16, n_repeats=2, gamma=0.5, t_max=3, seed=14)
    res = gs_complement_augmented(x1, x2, tiny, tiny, cfg)
    assert res.complement_missing
    assert res.gs_complements == 0.0
    assert res.value == res.gs_clouds / (2.0 * (cfg.t_max - 1))
    assert res.per_rotation_complements == []


def test_gsc_deterministic_and_normalized():
    rng = np.random.default_rng(15)
    x1 = rng.uniform(-np.pi, np.pi, size=(150, 2))
    x2 = rng.uniform(-np.pi, np.pi, size=(150, 2))
    c1 = rng.uniform(-np.pi, np.pi, size=(150, 2))
    c2 = rng.uniform(-np.pi, np.pi, size=(150, 2))
    cfg = GsConfig(n_landmarks=14, n_repeats=2, gamma=0.5, t_max=3, seed=16)
    a = gs_complement_augmented(x1, x2, c1, c2, cfg)
    b = gs_complement_augmented(x1, x2, c1, c2, cfg)
    assert a.value == b.value
    assert a.per_rotation_clouds == b.per_rotation_clouds
    assert a.per_rotation_complements == b.per_rotation_complements
    assert a.value == (a.gs_clouds + a.gs_complements) / (2.0 * (cfg.t_max - 1))
    assert a.gs_clouds == max(a.per_rotation_clouds)
    assert len(a.per_rotation_clouds) == 4
    assert a.value >= 0.0


# -------------------------------------------------------------- small parts


def test_mean_nn_spacing_two_points():
    assert mean_nn_spacing(np.array([[0.0, 0.0], [0.0, 3.0]])) == 3.0


def test_alpha_max_on_unit_grid():
    gx, gy = np.meshgrid(np.arange(10.0), np.arange(10.0))
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    assert mean_nn_spacing(grid) == 1.0
    cfg = GsConfig(n_landmarks=25, n_repeats=1, gamma=0.3, t_max=2, seed=0)
    assert filtration_alpha_max(grid, cfg) == pytest.approx(0.3 * 4.0)


def test_config_validation():
    with pytest.raises(TopologyError):
        GsConfig(n_landmarks=2)
    with pytest.raises(TopologyError):
        GsConfig(n_repeats=0)
    with pytest.raises(TopologyError):
        GsConfig(t_max=1)
    with pytest.raises(TopologyError):
        GsConfig(complex="alpha")
    with pytest.raises(TopologyError):
        GsConfig(gamma=0.0)


def test_mrlt_rejects_bad_clouds():
    cfg = GsConfig(n_landmarks=16, n_repeats=1, gamma=0.5, t_max=2, seed=0)
    with pytest.raises(TopologyError):
        mrlt_profile(np.zeros((10, 2)), cfg)  # fewer points than landmarks
    with pytest.raises(TopologyError):
        mrlt_profile(np.zeros((40, 3)), cfg)
