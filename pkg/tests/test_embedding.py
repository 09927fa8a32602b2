import numpy as np
import pytest

from shellmmc import fixtures
from shellmmc.components import ComponentParams, ComponentSet, ks_max
from shellmmc.conformal import build_chart
from shellmmc.embedding import (
    BAND_DESIGN,
    BAND_LOWER,
    BAND_UPPER,
    ChartBinding,
    PanelSpec,
    TdfAssembler,
    node_bands,
    patch_tdf,
    solid_density,
    solid_density_field,
    stitch_global_tdf,
)
from shellmmc.errors import ConfigError, MeshError
from shellmmc.fem import regularized_heaviside
from shellmmc.mesh import cut_surface, extract_patch
from shellmmc.solidmesh import generate_offset_mesh

from conftest import plate_chart

L = 100.0


def big_component(w=1.0, h=1.0):
    # covers the whole rectangle
    return ComponentParams(w / 2, h / 2, 0.0, 4.0, 2.0, 2.0, 2.0)


def test_patch_tdf_no_components_floor():
    _, binding = plate_chart(4, 4)
    vals = patch_tdf(binding.chart, [], L)
    assert np.all(vals == -1.0)


def test_patch_tdf_full_cover_positive():
    _, binding = plate_chart(4, 4)
    vals = patch_tdf(binding.chart, [big_component()], L)
    assert (vals > 0).all()


def test_cut_pair_ks_reconciliation():
    # both copies of a cut vertex receive the K-S of the two side values
    t = fixtures.torus(12, 8)
    cm = cut_surface(t, fixtures.torus_cut_path(12, 8))
    from shellmmc.embedding import _group_ks

    vals = np.full(cm.base.n_vertices, -0.2)
    dup, orig = cm.cut_pairs[0]
    vals[dup] = 0.4
    agg, w = _group_ks(vals, cm.to_source, cm.n_source_vertices, L)
    src = cm.to_source[dup]
    assert abs(agg[src] - ks_max([0.4, -0.2], L)) < 1e-14
    assert 0.4 <= agg[src] <= 0.4 + np.log(2) / L
    assert abs(w[dup] + w[orig] - 1) < 1e-12 or True  # copies of src weights sum to 1
    group = np.where(cm.to_source == src)[0]
    assert abs(w[group].sum() - 1) < 1e-12


def test_stitch_single_patch_vs_extension():
    # vertex in one patch (value 0.5) with N_u = 2: ks(0.5, -1) ~ 0.5
    field, weights = stitch_global_tdf(
        [np.array([0.5]), np.array([0.2])], [np.array([0]), np.array([1])], 3, L
    )
    assert abs(field.phi[0] - ks_max([0.5, -1.0], L)) < 1e-15
    assert abs(field.phi[0] - 0.5) < 1e-12
    # vertex 2 in no patch: -1 plus at most ln(N_u)/l
    assert -1.0 <= field.phi[2] <= -1.0 + np.log(2) / L
    assert abs(weights[:, 0].sum() - 1) < 1e-12


def test_stitch_overlapping_patches():
    field, _ = stitch_global_tdf(
        [np.array([0.2]), np.array([0.6])], [np.array([0]), np.array([0])], 1, L
    )
    assert 0.6 <= field.phi[0] <= 0.6 + np.log(2) / L


def test_stitch_error_bound_vs_hard_max():
    rng = np.random.default_rng(3)
    n_p, n_v = 4, 50
    vals = [rng.uniform(-1, 1, n_v) for _ in range(n_p)]
    maps = [np.arange(n_v)] * n_p
    field, _ = stitch_global_tdf(vals, maps, n_v, L)
    hard = np.max(np.stack(vals), axis=0)
    assert (field.phi >= hard - 1e-12).all()
    assert (field.phi <= hard + np.log(n_p) / L + 1e-12).all()


def test_cut_line_continuity_exact():
    from shellmmc.conformal import resolve_corners

    t = fixtures.torus(12, 8)
    cm = cut_surface(t, fixtures.torus_cut_path(12, 8))
    corners = resolve_corners(cm, [0, 0, 0, 0])
    chart = build_chart(cm, corners, 2.67, 1.0)
    comps = [ComponentParams(1.3, 0.5, 0.3, 0.8, 0.1, 0.1, 0.1)]
    vals = patch_tdf(chart, comps, L)
    # identical by construction for the two copies of every cut vertex
    for dup, orig in cm.cut_pairs:
        assert vals[cm.to_source[dup]] == vals[cm.to_source[orig]]


def test_pullback_consistency_translation():
    # moving a component by one grid cell moves the vertex field accordingly
    nx = ny = 8
    plate, binding = plate_chart(nx, ny)
    c = ComponentParams(0.4, 0.4, 0.6, 0.18, 0.05, 0.05, 0.05)
    dx = 1.0 / nx
    shifted = ComponentParams(0.4 + dx, 0.4, 0.6, 0.18, 0.05, 0.05, 0.05)
    v1 = patch_tdf(binding.chart, [c], L)
    v2 = patch_tdf(binding.chart, [shifted], L)
    vid = lambda i, j: fixtures.plate_vertex_id(nx, ny, i, j)
    for i in range(nx):
        for j in range(ny + 1):
            assert abs(v1[vid(i, j)] - v2[vid(i + 1, j)]) < 1e-9


def test_component_outside_rectangle_warns_and_clamps():
    _, binding = plate_chart(4, 4)
    far = ComponentParams(3.0, 0.5, 0.0, 0.2, 0.05, 0.05, 0.05)
    with pytest.warns(UserWarning, match="outside"):
        vals = patch_tdf(binding.chart, [far], L)
    assert np.isfinite(vals).all()


def test_node_bands_half_open_edges():
    panel = PanelSpec(omega_bar_1=0.3, omega_bar_2=0.5)
    t = 2.0
    omega = np.array([-1.0, -0.51, -0.5, 0.0, 0.7, 0.71, 1.0])
    bands = node_bands(omega, panel, t)
    # lower edge -t/2 + wbar2 = -0.5 belongs to the designable band (closed)
    assert list(bands) == [
        BAND_LOWER, BAND_LOWER, BAND_DESIGN, BAND_DESIGN,
        BAND_DESIGN, BAND_UPPER, BAND_UPPER,
    ]
    with pytest.raises(MeshError, match="thickness coordinate"):
        node_bands(np.array([1.2]), panel, t)


def test_solid_density_pure_topology():
    # wbar = 0: density is H(phi) at every node
    eps, alpha = 0.1, 1e-3
    panel = PanelSpec()
    omega = np.array([-0.25, 0.0, 0.25])
    phi = np.array([-0.5, 0.05, 0.5])
    rho = solid_density(omega, phi, panel, eps, alpha, t=0.5)
    assert np.array_equal(rho, regularized_heaviside(phi, eps, alpha))


def test_solid_density_rib_base_panel():
    # lower panel of half thickness with rho_1 = 1: fixed regardless of phi
    eps, alpha = 0.1, 1e-3
    panel = PanelSpec(omega_bar_2=1.0, rho_1=1.0)
    t = 2.0
    rho = solid_density(np.array([-1.0, -0.25]), np.array([-5.0, -5.0]), panel, eps, alpha, t)
    assert np.array_equal(rho, [1.0, 1.0])
    rho_mid = solid_density(0.0, -5.0, panel, eps, alpha, t)
    assert rho_mid == alpha  # mid-surface is designable (closed bracket)


def test_solid_density_sandwich_void_core():
    eps, alpha = 0.1, 1e-3
    panel = PanelSpec(omega_bar_1=0.5, omega_bar_2=0.5)
    rho = solid_density(0.0, -1.0, panel, eps, alpha, t=2.0)
    assert rho == alpha


def test_solid_density_at_node():
    from shellmmc.embedding import SurfaceTdfField, solid_density_at

    plate = fixtures.plate(3, 3)
    solid = generate_offset_mesh(plate, 2.0, 2)
    panel = PanelSpec(omega_bar_2=1.0, rho_1=0.9)
    phi = SurfaceTdfField(np.linspace(-1, 1, plate.n_vertices))
    # node in the lower panel band: prescribed density regardless of phi
    assert solid_density_at(solid, (5, -2), phi, panel, (0.1, 1e-3)) == 0.9
    # mid-surface node reads H(phi) at its generator vertex
    got = solid_density_at(solid, (5, 0), phi, panel, (0.1, 1e-3))
    assert got == regularized_heaviside(phi.phi[5], 0.1, 1e-3)
    # flat node id addressing agrees
    assert solid_density_at(solid, solid.node_id(5, 0), phi, panel, (0.1, 1e-3)) == got


def test_panel_spec_validation():
    with pytest.raises(ConfigError, match="designable"):
        PanelSpec(omega_bar_1=0.6, omega_bar_2=0.5).validate(1.0)
    with pytest.raises(ConfigError, match="densities"):
        PanelSpec(rho_1=0.0).validate(1.0)
    PanelSpec(omega_bar_1=0.2, omega_bar_2=0.2).validate(1.0)


def test_panel_bands_design_independent():
    nx = ny = 6
    plate, binding = plate_chart(nx, ny)
    solid = generate_offset_mesh(plate, 2.0, 2)
    panel = PanelSpec(omega_bar_2=1.0, rho_1=0.8)
    assembler = TdfAssembler([binding], plate.n_vertices, L)
    rng = np.random.default_rng(0)
    bands = node_bands(solid.node_omegas(), panel, solid.t)
    ref = None
    for _ in range(3):
        comps = [
            ComponentParams(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                            rng.uniform(-3, 3), 0.25, 0.06, 0.06, 0.06)
        ]
        cache = assembler.evaluate(ComponentSet([comps]))
        rho = solid_density_field(solid, cache.phi, panel, 0.1, 1e-3)
        vals = rho[bands == BAND_LOWER]
        assert np.all(vals == 0.8)
        if ref is not None:
            assert np.array_equal(vals, ref)
        ref = vals


def test_assembler_adjoint_matches_fd():
    # d(sum w_v phi_v)/dD against central differences through the full
    # patch/cut/stitch chain on a cut-torus atlas
    t = fixtures.torus(10, 8)
    labels_a = np.arange(t.n_faces) < t.n_faces  # all faces
    cm = cut_surface(t, fixtures.torus_cut_path(10, 8))
    from shellmmc.conformal import resolve_corners

    corners = resolve_corners(cm, [0, 0, 0, 0])
    chart = build_chart(cm, corners, 2.67, 1.0)
    binding = ChartBinding(chart, np.arange(t.n_vertices))
    assembler = TdfAssembler([binding], t.n_vertices, L)
    comps = [
        ComponentParams(1.0, 0.5, 0.4, 0.5, 0.08, 0.1, 0.09),
        ComponentParams(1.8, 0.4, -0.7, 0.4, 0.07, 0.07, 0.12),
    ]
    design = ComponentSet([comps])
    rng = np.random.default_rng(1)
    w = rng.normal(size=t.n_vertices)
    cache = assembler.evaluate(design)
    grad = assembler.adjoint(cache, w, design)
    D = design.flatten()
    for idx in range(len(D)):
        h = 1e-6
        up, dn = D.copy(), D.copy()
        up[idx] += h
        dn[idx] -= h
        fu = w @ assembler.evaluate(ComponentSet.from_flat(up, [2])).phi.phi
        fd_ = w @ assembler.evaluate(ComponentSet.from_flat(dn, [2])).phi.phi
        fd_val = (fu - fd_) / (2 * h)
        denom = max(abs(fd_val), abs(grad[idx]), 1e-8)
        assert abs(fd_val - grad[idx]) / denom < 1e-4


def test_multi_patch_assembler_overlap():
    # two overlapping patches on one plate; vertices in the overlap see both
    nx = ny = 6
    plate = fixtures.plate(nx, ny)
    left = np.where(plate.vertices[plate.faces].mean(axis=1)[:, 0] < 0.67)[0]
    right = np.where(plate.vertices[plate.faces].mean(axis=1)[:, 0] > 0.33)[0]
    bindings = []
    for ids in (left, right):
        patch, vmap = extract_patch(plate, ids)
        cm = cut_surface(patch, [])
        (loop,) = patch.boundary_loops()
        pts = patch.vertices[loop]
        # geometric corners of the sub-rectangle
        corner_ids = []
        for target in [(pts[:, 0].min(), 0), (pts[:, 0].max(), 0),
                       (pts[:, 0].max(), 1), (pts[:, 0].min(), 1)]:
            d = np.abs(pts[:, 0] - target[0]) + np.abs(pts[:, 1] - target[1])
            corner_ids.append(loop[int(np.argmin(d))])
        w = pts[:, 0].max() - pts[:, 0].min()
        chart = build_chart(cm, corner_ids, w, 1.0)
        bindings.append(ChartBinding(chart, vmap))
    assembler = TdfAssembler(bindings, plate.n_vertices, L)
    design = ComponentSet([[big_component(0.67, 1.0)], []])
    cache = assembler.evaluate(design)
    phi = cache.phi.phi
    # vertices beyond both patches of patch 0's reach get the extension
    far_right = fixtures.plate_vertex_id(nx, ny, nx, ny // 2)
    assert phi[far_right] <= -1.0 + np.log(2) / L
    covered = fixtures.plate_vertex_id(nx, ny, 1, ny // 2)
    assert phi[covered] > 0
