"""Linear elasticity on the prism mesh with the ersatz material model."""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import FemError
from .solidmesh import WEDGE_DSHAPE, WEDGE_QWEIGHTS, wedge_jacobians

SOLVE_RTOL = 1e-8


@dataclass
class Material:
    """Isotropic linear elastic material."""

    E: float = 1.0
    nu: float = 0.3

    def __post_init__(self):
        if not self.E > 0:
            raise FemError("Young's modulus must be positive")
        if not -1.0 < self.nu < 0.5:
            raise FemError("Poisson ratio must lie in (-1, 0.5)")

    def lame(self):
        lam = self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))
        mu = self.E / (2 * (1 + self.nu))
        return lam, mu

    def elasticity_matrix(self):
        """6x6 constitutive matrix for engineering strain ordering
        (xx, yy, zz, xy, yz, zx)."""
        lam, mu = self.lame()
        D = np.zeros((6, 6))
        D[:3, :3] = lam
        D[np.arange(3), np.arange(3)] = lam + 2 * mu
        D[np.arange(3, 6), np.arange(3, 6)] = mu
        return D


# ---------------------------------------------------------------------------
# regularized Heaviside


def regularized_heaviside(x, eps, alpha):
    """Smooth step from alpha to 1: cubic blend inside |x| <= eps.

    Continuous and C1 at +-eps with H(eps) = 1 and H(-eps) = alpha.
    """
    if not (0 < alpha < 1 and eps > 0):
        raise ValueError("need 0 < alpha < 1 and eps > 0")
    x = np.asarray(x, dtype=float)
    blend = 0.75 * (1 - alpha) * (x / eps - x**3 / (3 * eps**3)) + (1 + alpha) / 2
    out = np.where(x > eps, 1.0, np.where(x < -eps, alpha, blend))
    return out if out.ndim else float(out)


def heaviside_derivative(x, eps, alpha):
    """Derivative of :func:`regularized_heaviside`; zero outside |x| < eps."""
    if not (0 < alpha < 1 and eps > 0):
        raise ValueError("need 0 < alpha < 1 and eps > 0")
    x = np.asarray(x, dtype=float)
    inner = 0.75 * (1 - alpha) * (1.0 / eps - x**2 / eps**3)
    out = np.where(np.abs(x) <= eps, inner, 0.0)
    return out if out.ndim else float(out)


def element_density(phi_at_nodes, eps, alpha):
    """Ersatz density of an element: mean regularized density of its six
    nodal TDF values. Accepts (..., 6) arrays."""
    phi = np.asarray(phi_at_nodes, dtype=float)
    if phi.shape[-1] != 6:
        raise ValueError("expected six nodal values per element")
    out = regularized_heaviside(phi, eps, alpha).mean(axis=-1)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# wedge stiffness


def _spatial_gradients(coords):
    """Shape-function gradients in space at all quadrature points.

    coords: (..., 6, 3). Returns (grads (..., n_q, 3, 6), detJ (..., n_q)).
    """
    J, det = wedge_jacobians(coords)
    if (det <= 0).any():
        raise FemError("inverted wedge element (non-positive Jacobian)")
    g = np.linalg.solve(J, np.broadcast_to(WEDGE_DSHAPE, J.shape[:-3] + WEDGE_DSHAPE.shape))
    return g, det


def strain_displacement_matrix(g):
    """6x18 B-matrix from spatial gradients g (3, 6) at one point."""
    B = np.zeros((6, 18))
    for a in range(6):
        nx, ny, nz = g[0, a], g[1, a], g[2, a]
        c = 3 * a
        B[0, c] = nx
        B[1, c + 1] = ny
        B[2, c + 2] = nz
        B[3, c] = ny
        B[3, c + 1] = nx
        B[4, c + 1] = nz
        B[4, c + 2] = ny
        B[5, c] = nz
        B[5, c + 2] = nx
    return B


def wedge_stiffness(coords, material):
    """18x18 solid-material stiffness of a single 6-node wedge.

    Reference implementation via explicit B-matrices; node ordering is
    bottom triangle then top triangle, dof order node-major (x, y, z).
    """
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (6, 3):
        raise FemError("wedge_stiffness expects (6, 3) node coordinates")
    g, det = _spatial_gradients(coords)
    D = material.elasticity_matrix()
    k = np.zeros((18, 18))
    for q in range(len(WEDGE_QWEIGHTS)):
        B = strain_displacement_matrix(g[q])
        k += WEDGE_QWEIGHTS[q] * det[q] * (B.T @ D @ B)
    return 0.5 * (k + k.T)


def wedge_stiffness_batch(coords, material):
    """Solid stiffness matrices for many wedges at once: (n, 18, 18)."""
    coords = np.asarray(coords, dtype=float)
    g, det = _spatial_gradients(coords)
    lam, mu = material.lame()
    wdet = det * WEDGE_QWEIGHTS
    k1 = np.einsum("nqia,nqjb,nq->naibj", g, g, wdet)
    k2 = np.einsum("nqja,nqib,nq->naibj", g, g, wdet)
    k3 = np.einsum("nqka,nqkb,nq->nab", g, g, wdet)
    k = lam * k1 + mu * k2
    k += mu * np.einsum("nab,ij->naibj", k3, np.eye(3))
    k = k.reshape(len(coords), 18, 18)
    return 0.5 * (k + np.swapaxes(k, 1, 2))


# ---------------------------------------------------------------------------
# boundary conditions and the global solve


@dataclass
class BoundaryConditions:
    """Fixed dofs and design-independent loads.

    fixed_dofs: (node, axis) pairs clamped to zero.
    point_loads: (node, force 3-vector) concentrated loads.
    load_columns: (surface vertex, force 3-vector) loads split equally over
    all nodes of that vertex's through-thickness column.
    """

    fixed_dofs: set = field(default_factory=set)
    point_loads: list = field(default_factory=list)
    load_columns: list = field(default_factory=list)

    def fix_column(self, solid, vertex, axes=(0, 1, 2)):
        for j in range(-solid.n_e, solid.n_e + 1):
            node = solid.node_id(vertex, j)
            for a in axes:
                self.fixed_dofs.add((node, a))

    def validate(self, solid):
        n = solid.n_nodes
        for node, axis in self.fixed_dofs:
            if not (0 <= node < n) or axis not in (0, 1, 2):
                raise FemError(f"fixed dof ({node}, {axis}) out of range")
        if len(self.fixed_dofs) < 6:
            raise FemError(
                f"only {len(self.fixed_dofs)} fixed dofs; at least 6 are needed "
                "to suppress rigid-body modes"
            )
        for node, f in self.point_loads:
            if not (0 <= node < n):
                raise FemError(f"loaded node {node} out of range")
            if len(f) != 3:
                raise FemError("point load force must be a 3-vector")
        for vertex, f in self.load_columns:
            if not (0 <= vertex < solid.surface.n_vertices):
                raise FemError(f"loaded surface vertex {vertex} out of range")
            if len(f) != 3:
                raise FemError("column load force must be a 3-vector")

    def force_vector(self, solid):
        F = np.zeros(3 * solid.n_nodes)
        for node, f in self.point_loads:
            F[3 * node : 3 * node + 3] += np.asarray(f, dtype=float)
        share = 1.0 / solid.n_layers
        for vertex, f in self.load_columns:
            fv = share * np.asarray(f, dtype=float)
            for j in range(-solid.n_e, solid.n_e + 1):
                node = solid.node_id(vertex, j)
                F[3 * node : 3 * node + 3] += fv
        return F

    def fixed_dof_indices(self):
        return np.unique([3 * node + axis for node, axis in self.fixed_dofs]).astype(
            np.int64
        )

    def touched_nodes(self, solid):
        """All nodes carrying a load or a constraint."""
        nodes = {node for node, _ in self.fixed_dofs}
        nodes.update(node for node, _ in self.point_loads)
        for vertex, _ in self.load_columns:
            for j in range(-solid.n_e, solid.n_e + 1):
                nodes.add(solid.node_id(vertex, j))
        return np.asarray(sorted(nodes), dtype=np.int64)


class FemSolution:
    """Displacements, compliance and the solve residual of one analysis."""

    def __init__(self, U, compliance, solve_residual):
        self.U = U
        self.compliance = float(compliance)
        self.solve_residual = float(solve_residual)


def element_dof_indices(elements):
    dofs = (3 * elements)[:, :, None] + np.arange(3)[None, None, :]
    return dofs.reshape(len(elements), 18)


def assemble_and_solve(
    solid,
    densities,
    bc,
    material,
    k0=None,
    modulus_scale=None,
    keep_elements=None,
):
    """Solve K U = F with K = sum_e rho_e * scale_e * k0_e.

    ``keep_elements`` restricts assembly to a subset of elements (narrow
    band); dofs of untouched nodes are removed and their displacement is
    zero in the returned full-length U.
    """
    densities = np.asarray(densities, dtype=float)
    if densities.shape != (solid.n_elements,):
        raise FemError("densities must hold one value per element")
    bc.validate(solid)
    if k0 is None:
        k0 = wedge_stiffness_batch(solid.nodes[solid.elements], material)
    scale = (
        np.ones(solid.n_elements)
        if modulus_scale is None
        else np.asarray(modulus_scale, dtype=float)
    )

    keep = (
        np.arange(solid.n_elements)
        if keep_elements is None
        else np.asarray(keep_elements, dtype=np.int64)
    )
    elements = solid.elements[keep]
    n_dofs = 3 * solid.n_nodes
    F = bc.force_vector(solid)

    kept_nodes = np.unique(elements)
    in_system = np.zeros(n_dofs, dtype=bool)
    in_system[element_dof_indices(elements).ravel()] = True
    loaded = np.where(F != 0.0)[0]
    missing = loaded[~in_system[loaded]]
    if len(missing):
        raise FemError(
            f"loaded dof {int(missing[0])} is not part of the assembled mesh"
        )
    fixed = bc.fixed_dof_indices()
    free_mask = in_system.copy()
    free_mask[fixed] = False
    free = np.where(free_mask)[0]
    perm = np.full(n_dofs, -1, dtype=np.int64)
    perm[free] = np.arange(len(free))

    if not np.any(F):
        return FemSolution(np.zeros(n_dofs), 0.0, 0.0)

    vals = (k0[keep] * (densities[keep] * scale[keep])[:, None, None]).reshape(-1)
    dofs = element_dof_indices(elements)
    rows = np.repeat(dofs, 18, axis=1).ravel()
    cols = np.tile(dofs, (1, 18)).ravel()
    r = perm[rows]
    c = perm[cols]
    ok = (r >= 0) & (c >= 0)
    K = sparse.coo_matrix(
        (vals[ok], (r[ok], c[ok])), shape=(len(free), len(free))
    ).tocsc()

    b = F[free]
    try:
        lu = splu(K)
        u = lu.solve(b)
    except RuntimeError as exc:
        raise FemError(f"stiffness solve failed (under-constrained model?): {exc}")
    if not np.isfinite(u).all():
        raise FemError("stiffness solve produced non-finite displacements")
    res = np.linalg.norm(K @ u - b) / np.linalg.norm(b)
    if res > SOLVE_RTOL:
        raise FemError(f"solve residual {res:.3e} exceeds {SOLVE_RTOL:.1e}")

    U = np.zeros(n_dofs)
    U[free] = u
    compliance = float(F @ U)
    if compliance <= 0:
        raise FemError(
            f"non-positive compliance {compliance:.3e} under nonzero load; "
            "model is under-constrained or densities vanish"
        )
    return FemSolution(U, compliance, res)
