import numpy as np
import pytest

from shellmmc import fixtures
from shellmmc.conformal import build_chart
from shellmmc.embedding import ChartBinding, PanelSpec
from shellmmc.fem import BoundaryConditions, Material
from shellmmc.mesh import cut_surface
from shellmmc.pipeline import StructuralModel, initial_layout
from shellmmc.solidmesh import generate_offset_mesh


def plate_chart(nx, ny, width=1.0, height=1.0):
    """Identity-like chart of a flat plate; corners at the geometric corners."""
    plate = fixtures.plate(nx, ny, width, height)
    cut = cut_surface(plate, [])
    vid = lambda i, j: fixtures.plate_vertex_id(nx, ny, i, j)
    corners = [vid(0, 0), vid(nx, 0), vid(nx, ny), vid(0, ny)]
    chart = build_chart(cut, corners, width, height)
    return plate, ChartBinding(chart, np.arange(plate.n_vertices))


def cantilever_model(
    nx=10,
    ny=10,
    thickness=0.2,
    n_e=1,
    panel=None,
    volume_bound=0.4,
    dof_removal=False,
    **kwargs,
):
    """Flat cantilever plate: left edge clamped, in-plane tip load at right-center."""
    plate, binding = plate_chart(nx, ny)
    solid = generate_offset_mesh(plate, thickness, n_e)
    bc = BoundaryConditions()
    for j in range(ny + 1):
        bc.fix_column(solid, fixtures.plate_vertex_id(nx, ny, 0, j))
    bc.load_columns.append(
        (fixtures.plate_vertex_id(nx, ny, nx, ny // 2), (0.0, -1.0, 0.0))
    )
    model = StructuralModel(
        plate,
        [binding],
        panel or PanelSpec(),
        Material(),
        bc,
        thickness,
        n_e,
        volume_bound=volume_bound,
        dof_removal=dof_removal,
        solid=solid,
        **kwargs,
    )
    return model


@pytest.fixture(scope="session")
def small_cantilever():
    return cantilever_model(nx=10, ny=10)


@pytest.fixture(scope="session")
def small_design(small_cantilever):
    return initial_layout(small_cantilever.bindings, [(2, 2)], 0.4)


def edge_census(faces):
    """Independent oracle: undirected edge count and boundary edge count."""
    seen = {}
    for tri in np.asarray(faces):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            seen[key] = seen.get(key, 0) + 1
    boundary = sum(1 for c in seen.values() if c == 1)
    return len(seen), boundary
