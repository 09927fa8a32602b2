"""Analytic compliance and volume sensitivities plus an FD verification harness.

For compliance the adjoint field equals minus the displacement, so no second
solve is needed: dC/dd = -sum_e scale_e (drho_e/dd) u_e^T k0_e u_e with the
element-density derivative distributed to nodes through the regularized
Heaviside and the K-S softmax chain (handled by the TDF assembler adjoint).
"""

from dataclasses import dataclass

import numpy as np

from .embedding import BAND_DESIGN
from .fem import element_dof_indices, heaviside_derivative


def element_strain_energies(U, elements, k0, keep):
    """u_e^T k0_e u_e per kept element."""
    dofs = element_dof_indices(elements[keep])
    ue = U[dofs]
    return np.einsum("ei,eij,ej->e", ue, k0[keep], ue)


def _per_vertex(node_values, solid):
    return node_values.reshape(solid.n_layers, solid.surface.n_vertices).sum(axis=0)


def compliance_vertex_weights(model, cache, U, keep):
    """Per-surface-vertex weight field whose adjoint application gives dC/dD.

    Accumulates -scale_e q_e over kept elements onto their designable nodes
    (panel-band nodes are design-independent and contribute nothing) and
    multiplies by the Heaviside slope at the vertex TDF.
    """
    solid = model.solid
    q = element_strain_energies(U, solid.elements, model.k0, keep)
    q = q * model.modulus_scale[keep]
    node_sum = np.zeros(solid.n_nodes)
    np.add.at(node_sum, solid.elements[keep].ravel(), np.repeat(q, 6))

    hd = heaviside_derivative(cache.phi.phi, model.eps, model.alpha)
    designable = model.node_band == BAND_DESIGN
    node_w = -(1.0 / 6.0) * node_sum * designable
    node_w *= np.tile(hd, solid.n_layers)
    return _per_vertex(node_w, solid)


def volume_vertex_weights(model, cache):
    """Per-surface-vertex weight field whose adjoint application gives dV/dD."""
    solid = model.solid
    d = model.designable_elements
    node_sum = np.zeros(solid.n_nodes)
    np.add.at(node_sum, solid.elements[d].ravel(), np.repeat(model.volumes[d], 6))

    hd = heaviside_derivative(cache.phi.phi, model.eps, model.alpha)
    designable = model.node_band == BAND_DESIGN
    node_w = node_sum * designable / (6.0 * model.design_volume)
    node_w *= np.tile(hd, solid.n_layers)
    return _per_vertex(node_w, solid)


def compliance_sensitivity(model, result, design, d):
    """Single-entry dC/dD_d from an evaluated iteration result."""
    return float(result.dC[d])


def volume_and_sensitivity(model, result, design, d=None):
    """Volume fraction and its sensitivity (full vector or one entry)."""
    if d is None:
        return result.volume, result.dV
    return result.volume, float(result.dV[d])


@dataclass
class FdRecord:
    index: int
    analytic_dC: float
    fd_dC: float
    rel_err_dC: float
    analytic_dV: float
    fd_dV: float
    rel_err_dV: float
    flagged: bool


REL_TOL = 1e-3
ABS_FLOOR = 1e-8


def _rel_err(analytic, fd):
    denom = max(abs(analytic), abs(fd))
    if denom < ABS_FLOOR:
        return 0.0
    return abs(analytic - fd) / denom


def fd_check(model, design, indices=None, step=None):
    """Central-difference verification of the analytic sensitivities.

    Re-solves the full pipeline (full mesh, no DOF removal) at D +- step
    for every requested index and compares against the analytic gradients.
    Entries beyond relative 1e-3 (absolute floor 1e-8) are flagged.
    """
    from .components import ComponentSet

    D = design.flatten()
    counts = design.counts
    if step is None:
        scales = model.design_space(counts).scales
    if indices is None:
        indices = np.arange(len(D))
    indices = np.asarray(indices, dtype=int)
    if indices.size and (indices.min() < 0 or indices.max() >= len(D)):
        raise IndexError(f"design index out of range (0..{len(D) - 1})")

    base = model.evaluate(design, with_gradients=True, dof_removal=False)
    records = []
    for idx in indices:
        h = step if step is not None else 1e-5 * scales[idx]
        if h == 0:
            raise ValueError("nonzero step required")
        Dp, Dm = D.copy(), D.copy()
        Dp[idx] += h
        Dm[idx] -= h
        rp = model.evaluate(
            ComponentSet.from_flat(Dp, counts), with_gradients=False, dof_removal=False
        )
        rm = model.evaluate(
            ComponentSet.from_flat(Dm, counts), with_gradients=False, dof_removal=False
        )
        fd_c = (rp.compliance - rm.compliance) / (2 * h)
        fd_v = (rp.volume - rm.volume) / (2 * h)
        ec = _rel_err(base.dC[idx], fd_c)
        ev = _rel_err(base.dV[idx], fd_v)
        records.append(
            FdRecord(
                int(idx),
                float(base.dC[idx]),
                float(fd_c),
                ec,
                float(base.dV[idx]),
                float(fd_v),
                ev,
                ec > REL_TOL or ev > REL_TOL,
            )
        )
    return records


def fd_report_csv(records, path):
    lines = ["index,analytic_dC,fd_dC,rel_err_dC,analytic_dV,fd_dV,rel_err_dV,flagged"]
    for r in records:
        lines.append(
            f"{r.index},{r.analytic_dC!r},{r.fd_dC!r},{r.rel_err_dC!r},"
            f"{r.analytic_dV!r},{r.fd_dV!r},{r.rel_err_dV!r},{int(r.flagged)}"
        )
    from .vtkio import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")
