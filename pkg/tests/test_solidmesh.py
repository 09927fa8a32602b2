import numpy as np
import pytest

from shellmmc import fixtures
from shellmmc.errors import FemError, MeshError
from shellmmc.solidmesh import (
    WEDGE_QPOINTS,
    WEDGE_QWEIGHTS,
    generate_offset_mesh,
    thickness_coordinate,
    wedge_jacobians,
)
from shellmmc.vtkio import write_solid_vtk

from conftest import edge_census


def test_flat_plate_layers():
    plate = fixtures.plate(4, 4)
    solid = generate_offset_mesh(plate, 0.5, 2)
    zs = sorted(set(np.round(solid.nodes[:, 2], 12)))
    assert zs == [-0.25, -0.125, 0.0, 0.125, 0.25]


def test_counts_formula():
    for mesh, t, n_e in [
        (fixtures.plate(3, 5), 0.4, 1),
        (fixtures.disk(3, 12), 0.2, 3),
        (fixtures.icosphere(1), 0.1, 2),
    ]:
        solid = generate_offset_mesh(mesh, t, n_e)
        assert solid.n_nodes == mesh.n_vertices * (2 * n_e + 1)
        assert solid.n_elements == 2 * n_e * mesh.n_faces


def test_layer_zero_coincides_exactly():
    mesh = fixtures.spherical_cap(5, 20)
    solid = generate_offset_mesh(mesh, 0.1, 2)
    mid = solid.nodes[2 * mesh.n_vertices : 3 * mesh.n_vertices]
    assert np.abs(mid - mesh.vertices).max() == 0.0


def test_icosphere_outer_radius():
    ico = fixtures.icosphere(2)
    solid = generate_offset_mesh(ico, 0.2, 1)
    outer = solid.nodes[2 * ico.n_vertices :]
    r = np.linalg.norm(outer, axis=1)
    assert np.abs(r - 1.1).max() / 1.1 < 0.005


def test_thickness_coordinate():
    plate = fixtures.plate(3, 3)
    solid = generate_offset_mesh(plate, 2.0, 4)
    omega, l = thickness_coordinate(solid, (5, 0))
    assert omega == 0.0 and l == 5
    omega, _ = thickness_coordinate(solid, (5, 4))
    assert omega == 1.0
    omega, l = thickness_coordinate(solid, (7, -1))
    assert omega == -0.25 and l == 7
    # flat node id formagrees
    omega2, l2 = thickness_coordinate(solid, solid.node_id(7, -1))
    assert (omega2, l2) == (omega, l)
    with pytest.raises(MeshError):
        thickness_coordinate(solid, (5, 9))


def test_node_omegas_signed():
    plate = fixtures.plate(2, 2)
    solid = generate_offset_mesh(plate, 1.0, 2)
    om = solid.node_omegas()
    assert om.min() == -0.5 and om.max() == 0.5
    assert np.abs(om[2 * plate.n_vertices : 3 * plate.n_vertices]).max() == 0.0
    # |omega| equals the distance to the generator vertex on flat meshes
    dist = np.linalg.norm(
        solid.nodes - np.tile(plate.vertices, (solid.n_layers, 1)), axis=1
    )
    assert np.abs(np.abs(om) - dist).max() < 1e-14


def test_layer_adjacency_isomorphic():
    # each layer's face connectivity replicates the surface's (index shift)
    mesh = fixtures.disk(2, 8)
    solid = generate_offset_mesh(mesh, 0.2, 2)
    E0, _ = edge_census(mesh.faces)
    for j in range(2 * 2):
        layer_elems = solid.elements[j * mesh.n_faces : (j + 1) * mesh.n_faces]
        bottom_tris = layer_elems[:, :3] - layer_elems[:, :3].min()
        E, _ = edge_census(bottom_tris % mesh.n_vertices)
        assert E == E0


def test_boundary_columns_straight():
    mesh = fixtures.spherical_cap(4, 16)
    solid = generate_offset_mesh(mesh, 0.1, 3)
    normals = mesh.vertex_normals()
    (loop,) = mesh.boundary_loops()
    for v in loop[:5]:
        col = np.array([solid.nodes[solid.node_id(v, j)] for j in range(-3, 4)])
        d = col - mesh.vertices[v]
        # all offsets parallel to the vertex normal
        cross = np.cross(d[np.abs(d).sum(axis=1) > 0], normals[v])
        assert np.abs(cross).max() < 1e-12


def test_offset_self_intersection_error():
    # thickness above twice the curvature radius folds the inner layers
    ico = fixtures.icosphere(2)
    with pytest.raises(FemError, match="inverted wedge"):
        generate_offset_mesh(ico, 2.5, 1)


def test_invalid_args():
    plate = fixtures.plate(2, 2)
    with pytest.raises(MeshError):
        generate_offset_mesh(plate, -1.0, 1)
    with pytest.raises(MeshError):
        generate_offset_mesh(plate, 0.5, 0)


def test_quadrature_weights_and_volume():
    assert abs(WEDGE_QWEIGHTS.sum() - 1.0) < 1e-15
    assert WEDGE_QPOINTS.shape == (6, 3)
    plate = fixtures.plate(3, 3)
    solid = generate_offset_mesh(plate, 0.5, 2)
    vols = solid.element_volumes()
    assert abs(vols.sum() - 1.0 * 1.0 * 0.5) < 1e-12
    _, det = wedge_jacobians(solid.nodes[solid.elements])
    assert (det > 0).all()


def test_vtk_writer_grammar(tmp_path):
    plate = fixtures.plate(2, 2)
    solid = generate_offset_mesh(plate, 0.5, 1)
    rho = np.linspace(0.1, 1.0, solid.n_elements)
    disp = np.zeros((solid.n_nodes, 3))
    disp[:, 2] = 0.25
    path = tmp_path / "out.vtk"
    write_solid_vtk(path, solid, cell_data={"density": rho}, point_data={"displacement": disp})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile Version")
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert lines[4] == f"POINTS {solid.n_nodes} double"
    i_cells = lines.index(f"CELLS {solid.n_elements} {7 * solid.n_elements}")
    cell_line = lines[i_cells + 1].split()
    assert cell_line[0] == "6" and len(cell_line) == 7
    i_types = lines.index(f"CELL_TYPES {solid.n_elements}")
    assert lines[i_types + 1] == "13"
    assert f"CELL_DATA {solid.n_elements}" in lines
    assert "SCALARS density double 1" in lines
    assert f"POINT_DATA {solid.n_nodes}" in lines
    assert "VECTORS displacement double" in lines
    # values parse back
    i_dens = lines.index("SCALARS density double 1") + 2
    parsed = [float(lines[i_dens + k]) for k in range(solid.n_elements)]
    assert np.abs(np.asarray(parsed) - rho).max() == 0.0
