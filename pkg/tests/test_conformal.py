import numpy as np
import pytest

from shellmmc import fixtures
from shellmmc.conformal import (
    DiskMap,
    _alpha_coefficients,
    beltrami_of_inverse,
    build_chart,
    chart_to_csv,
    flatten_faces,
    harmonic_disk_map,
    lbs_rectangle_map,
    piecewise_beltrami,
    resolve_corners,
    signed_areas,
)
from shellmmc.errors import MeshError
from shellmmc.mesh import SurfaceMesh, cut_surface

from conftest import plate_chart


def dome(rings=10, segments=40, stretch=2.0):
    """Standard curved fixture: hemispherical dome stretched along x."""
    cap = fixtures.spherical_cap(rings, segments, cap_angle=np.pi / 2)
    v = cap.vertices.copy()
    v[:, 0] *= stretch
    return SurfaceMesh(v, cap.faces)


def quarter_corners(mesh):
    (loop,) = mesh.boundary_loops()
    n = len(loop)
    return [loop[0], loop[n // 4], loop[n // 2], loop[3 * n // 4]]


def test_harmonic_identity_on_planar_disk():
    # boundary of the disk fixture is a regular polygon on the unit circle,
    # i.e. already at its arc-length positions: harmonic extension of the
    # identity boundary data on a planar mesh is the identity
    d = fixtures.disk(5, 24)
    dm = harmonic_disk_map(cut_surface(d, []))
    assert np.abs(dm.uv - d.vertices[:, :2]).max() < 1e-8


def test_harmonic_boundary_on_circle_and_angles():
    plate, _ = plate_chart(6, 6)
    dm = harmonic_disk_map(cut_surface(plate, []))
    loop = dm.boundary_loop
    r = np.linalg.norm(dm.uv[loop], axis=1)
    assert np.abs(r - 1).max() < 1e-10
    ang = np.unwrap(np.arctan2(dm.uv[loop][:, 1], dm.uv[loop][:, 0]))
    ang -= ang[0]
    # strictly increasing around the circle, closing after exactly one turn
    assert (np.diff(ang) > 0).all()
    assert ang[-1] < 2 * np.pi
    seg = np.linalg.norm(plate.vertices[loop] - np.roll(plate.vertices[loop], -1, axis=0), axis=1)
    expected_last = 2 * np.pi * (seg[:-1].sum() / seg.sum())
    assert abs(ang[-1] - expected_last) < 1e-12


def test_harmonic_dome_bijective():
    cm = cut_surface(dome(), [])
    dm = harmonic_disk_map(cm)
    interior = np.setdiff1d(np.arange(cm.base.n_vertices), dm.boundary_loop)
    assert (np.linalg.norm(dm.uv[interior], axis=1) < 1.0).all()
    assert (signed_areas(dm.uv, cm.base.faces) > 0).all()


def test_beltrami_of_inverse_similarity_is_zero():
    d = fixtures.disk(4, 20)
    dm = harmonic_disk_map(cut_surface(d, []))
    mu = beltrami_of_inverse(dm)
    assert np.abs(mu.mu).max() < 1e-8


def test_beltrami_of_inverse_affine_stretch():
    # inverse map = diag(2, 1) on a planar mesh: mu = (2-1)/(2+1) real
    d = fixtures.disk(4, 20)
    stretched = SurfaceMesh(d.vertices * [2.0, 1.0, 1.0], d.faces)
    cm = cut_surface(stretched, [])
    dm = DiskMap(d.vertices[:, :2], cm, d.boundary_loops()[0])
    mu = beltrami_of_inverse(dm).mu
    assert np.abs(mu - (1.0 / 3.0)).max() < 1e-12


def test_beltrami_dome_below_one():
    dm = harmonic_disk_map(cut_surface(dome(), []))
    mu = beltrami_of_inverse(dm).mu
    assert np.abs(mu).max() < 1.0


def test_alpha_coefficients_identity_at_zero():
    a1, a2, a3 = _alpha_coefficients(np.zeros(5, dtype=complex))
    assert np.allclose(a1, 1) and np.allclose(a3, 1) and np.allclose(a2, 0)


def test_lbs_planar_rectangle_identity():
    W, H = 2.0, 1.0
    plate, binding = plate_chart(10, 5, W, H)
    assert np.abs(binding.chart.rect_uv - plate.vertices[:, :2]).max() < 1e-6
    d = binding.chart.diagnostics
    assert d["max_abs_mu"] < 1e-6
    assert d["flipped_faces"] == 0


def test_lbs_corner_pinning_and_boundary_containment():
    cm = cut_surface(dome(), [])
    corners = quarter_corners(cm.base)
    chart = build_chart(cm, corners, 1.0, 1.0)
    uv = chart.rect_uv
    assert np.allclose(uv[corners[0]], [0, 0], atol=1e-12)
    assert np.allclose(uv[corners[1]], [1, 0], atol=1e-12)
    assert np.allclose(uv[corners[2]], [1, 1], atol=1e-12)
    assert np.allclose(uv[corners[3]], [0, 1], atol=1e-12)
    assert uv.min() >= 0.0 and uv.max() <= 1.0
    (loop,) = cm.base.boundary_loops()
    for v in loop:
        if v in corners:
            continue
        on_side = [
            abs(uv[v, 0]) <= 1e-10,
            abs(uv[v, 0] - 1.0) <= 1e-10,
            abs(uv[v, 1]) <= 1e-10,
            abs(uv[v, 1] - 1.0) <= 1e-10,
        ]
        assert sum(on_side) == 1


def test_composed_distortion_below_disk_stage_dome():
    cm = cut_surface(dome(), [])
    disk = harmonic_disk_map(cm)
    chart = lbs_rectangle_map(
        disk, beltrami_of_inverse(disk), quarter_corners(cm.base), 1.0, 1.0
    )
    d = chart.diagnostics
    assert d["flipped_faces"] == 0
    assert d["mean_abs_mu"] < d["disk_mean_abs_mu"]


def test_composed_distortion_below_disk_stage_cut_torus():
    R, r = 1.0, 0.35
    t = fixtures.torus(24, 12, R, r)
    cm = cut_surface(t, fixtures.torus_cut_path(24, 12))
    corners = resolve_corners(cm, [0, 0, 0, 0])
    # chart aspect matched to the torus conformal modulus sqrt(R^2-r^2)/r
    W = float(np.sqrt(R * R - r * r) / r)
    chart = build_chart(cm, corners, W, 1.0)
    d = chart.diagnostics
    assert d["flipped_faces"] == 0
    assert d["mean_abs_mu"] < d["disk_mean_abs_mu"]


def test_rotation_invariance():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(3, 3))
    Q, _ = np.linalg.qr(A)
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    base = dome(rings=6, segments=24)
    corners = quarter_corners(base)
    chart1 = build_chart(cut_surface(base, []), corners, 1.0, 1.0)
    rotated = SurfaceMesh(base.vertices @ Q.T, base.faces)
    chart2 = build_chart(cut_surface(rotated, []), corners, 1.0, 1.0)
    assert np.abs(chart1.rect_uv - chart2.rect_uv).max() < 1e-9


def test_corner_order_validation():
    cm = cut_surface(dome(rings=5, segments=20), [])
    c = quarter_corners(cm.base)
    with pytest.raises(MeshError, match="cyclic"):
        build_chart(cm, [c[0], c[3], c[2], c[1]], 1.0, 1.0)
    with pytest.raises(MeshError, match="distinct"):
        build_chart(cm, [c[0], c[0], c[2], c[3]], 1.0, 1.0)
    with pytest.raises(MeshError, match="boundary"):
        interior = np.setdiff1d(np.arange(cm.base.n_vertices), cm.base.boundary_loops()[0])
        build_chart(cm, [c[0], c[1], c[2], int(interior[0])], 1.0, 1.0)


def test_resolve_corners_cut_base_point():
    t = fixtures.torus(12, 8)
    cm = cut_surface(t, fixtures.torus_cut_path(12, 8))
    corners = resolve_corners(cm, [0, 0, 0, 0])
    assert len(corners) == 4
    assert all(cm.to_source[c] == 0 for c in corners)
    with pytest.raises(MeshError, match="multiplicities"):
        resolve_corners(cm, [0, 0, 0, 1])


def test_piecewise_beltrami_of_affine_map():
    d = fixtures.disk(3, 12)
    # w = 3x + i y: mu = (3-1)/(3+1) = 0.5
    w = 3.0 * d.vertices[:, 0] + 1j * d.vertices[:, 1]
    domain = d.vertices[d.faces][:, :, :2]  # global planar frame
    mu = piecewise_beltrami(domain, w, d.faces)
    assert np.abs(mu - 0.5).max() < 1e-12
    # per-face tangent frames rotate the phase but never |mu|
    flat = flatten_faces(d.vertices, d.faces)
    mu_f = piecewise_beltrami(flat, w, d.faces)
    assert np.abs(np.abs(mu_f) - 0.5).max() < 1e-12


def test_chart_csv(tmp_path):
    _, binding = plate_chart(3, 3)
    path = tmp_path / "chart.csv"
    chart_to_csv(binding.chart, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "vertex_id,u,v"
    assert len(lines) == 1 + binding.chart.cut.base.n_vertices
    vid, u, v = lines[1].split(",")
    float(u), float(v)
