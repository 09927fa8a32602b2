"""Layered prism solid mesh generated by vertex-normal offsets.

Nodes are indexed (surface vertex l, layer j) with j in [-n_e, n_e] and
flat id ``(j + n_e) * n_v + l``; elements are 6-node wedges between
consecutive layers, flat id ``(j + n_e - 1) * n_f + m`` for the wedge over
surface face m with top layer j. Layer 0 coincides with the surface.
"""

import numpy as np

from .errors import FemError, MeshError

# quadrature: 3 interior triangle points x 2 Gauss points along the axis
_TRI_PTS = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
_AX_PTS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
WEDGE_QPOINTS = np.array(
    [(g, h, r) for r in _AX_PTS for (g, h) in _TRI_PTS]
)
WEDGE_QWEIGHTS = np.full(6, 1.0 / 6.0)


def wedge_shape_gradients(qpoints=WEDGE_QPOINTS):
    """d(shape)/d(natural coords): (n_q, 3, 6) for the linear wedge."""
    out = np.empty((len(qpoints), 3, 6))
    for q, (g, h, r) in enumerate(qpoints):
        m = 1.0 - g - h
        out[q] = [
            [-(1 - r) / 2, (1 - r) / 2, 0.0, -(1 + r) / 2, (1 + r) / 2, 0.0],
            [-(1 - r) / 2, 0.0, (1 - r) / 2, -(1 + r) / 2, 0.0, (1 + r) / 2],
            [-m / 2, -g / 2, -h / 2, m / 2, g / 2, h / 2],
        ]
    return out


WEDGE_DSHAPE = wedge_shape_gradients()


def wedge_jacobians(coords):
    """Jacobians at all quadrature points for wedge node coordinates.

    ``coords`` is (..., 6, 3); returns (J, detJ) with shapes
    (..., n_q, 3, 3) and (..., n_q).
    """
    J = np.einsum("qai,...ib->...qab", WEDGE_DSHAPE, coords)
    return J, np.linalg.det(J)


class SolidMesh:
    """Prism mesh offset from a surface along vertex normals."""

    def __init__(self, surface, t, n_e, nodes, elements):
        self.surface = surface
        self.t = float(t)
        self.n_e = int(n_e)
        self.nodes = nodes
        self.elements = elements
        self.n_layers = 2 * self.n_e + 1

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def layer_spacing(self):
        return self.t / (2 * self.n_e)

    def node_id(self, l, j):
        if not (-self.n_e <= j <= self.n_e):
            raise MeshError(f"layer index {j} outside [-{self.n_e}, {self.n_e}]")
        if not (0 <= l < self.surface.n_vertices):
            raise MeshError(f"surface vertex {l} out of range")
        return (j + self.n_e) * self.surface.n_vertices + l

    def node_layer_and_vertex(self, node):
        layer, l = divmod(int(node), self.surface.n_vertices)
        return layer - self.n_e, l

    def node_omegas(self):
        """Signed thickness coordinate of every node (layer-major order)."""
        js = np.arange(-self.n_e, self.n_e + 1)
        return np.repeat(js * self.layer_spacing, self.surface.n_vertices)

    def node_surface_vertices(self):
        return np.tile(np.arange(self.surface.n_vertices), self.n_layers)

    def element_layers(self):
        """Top-layer index j of each element, in element order."""
        js = np.arange(-self.n_e + 1, self.n_e + 1)
        return np.repeat(js, self.surface.n_faces)

    def element_mid_omegas(self):
        return (self.element_layers() - 0.5) * self.layer_spacing

    def element_surface_faces(self):
        return np.tile(np.arange(self.surface.n_faces), 2 * self.n_e)

    def element_volumes(self):
        _, det = wedge_jacobians(self.nodes[self.elements])
        return det @ WEDGE_QWEIGHTS


def thickness_coordinate(solid, node):
    """Signed offset coordinate and generator surface vertex of a node.

    ``node`` is either a flat node id or an ``(l, j)`` pair.
    """
    if np.ndim(node) == 0:
        j, l = solid.node_layer_and_vertex(node)
    else:
        l, j = int(node[0]), int(node[1])
        solid.node_id(l, j)  # range check
    return j * solid.layer_spacing, l


def generate_offset_mesh(surface, t, n_e):
    """Build the layered prism mesh by offsetting along vertex normals.

    Raises if any wedge is inverted (local curvature radius below t/2 or a
    fold in the vertex normals); the error lists the offending elements.
    """
    if not t > 0:
        raise MeshError("thickness t must be positive")
    n_e = int(n_e)
    if n_e < 1:
        raise MeshError("layer count n_e must be at least 1")
    normals = surface.vertex_normals()
    n_v = surface.n_vertices
    step = t / (2 * n_e)
    js = np.arange(-n_e, n_e + 1)
    nodes = (
        surface.vertices[None, :, :] + js[:, None, None] * step * normals[None, :, :]
    ).reshape(-1, 3)

    layers = np.arange(2 * n_e)  # bottom layer index of each element slab
    bottom = surface.faces[None, :, :] + (layers[:, None, None]) * n_v
    top = bottom + n_v
    elements = np.concatenate([bottom, top], axis=2).reshape(-1, 6)

    solid = SolidMesh(surface, t, n_e, nodes, elements)
    _, det = wedge_jacobians(nodes[elements])
    bad = np.where((det <= 0).any(axis=1))[0]
    if len(bad):
        raise FemError(
            f"{len(bad)} inverted wedge(s), e.g. {bad[:8].tolist()}: "
            "offset self-intersects; reduce thickness t or refine the mesh"
        )
    return solid
