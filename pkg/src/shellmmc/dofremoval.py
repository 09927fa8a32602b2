"""Per-iteration narrow-band mesh: keep only elements covered by components
that lie on a load path, plus prescribed panel bands and all elements touching
loaded or fixed nodes."""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components

from .embedding import BAND_DESIGN
from .fem import regularized_heaviside


@dataclass
class NarrowBand:
    kept_elements: np.ndarray
    kept_nodes: np.ndarray
    dof_map: np.ndarray  # full dof -> band dof, -1 where removed
    active_components: np.ndarray
    fallback: bool
    reason: str = ""

    @property
    def n_kept_dofs(self):
        return int((self.dof_map >= 0).sum())


def component_overlap_graph(coverage):
    """Undirected adjacency of components sharing a positive-TDF vertex.

    ``coverage[v, i]`` is the (hard-max over cut copies) TDF of component i
    at surface vertex v.
    """
    pos = coverage > 0.0
    adj = (pos.T.astype(np.int64) @ pos.astype(np.int64)) > 0
    np.fill_diagonal(adj, False)
    return adj


def covering_components(coverage, vertices):
    """Which components have positive TDF at any of the given vertices."""
    if len(vertices) == 0:
        return np.zeros(coverage.shape[1], dtype=bool)
    return (coverage[vertices] > 0.0).any(axis=0)


def active_components(adj, load_cover, support_cover, path_rule="load_and_support"):
    """Components in clusters that touch a load (and, per the rule, a support).

    Returns ``(indices, fallback)``; fallback is set when no cluster
    qualifies and the caller should analyze the full mesh.
    """
    n = len(load_cover)
    if n == 0:
        return np.zeros(0, dtype=np.int64), True
    graph = sparse.csr_matrix(adj.astype(np.int8))
    _, labels = connected_components(graph, directed=False)
    active = np.zeros(n, dtype=bool)
    for lab in np.unique(labels):
        members = labels == lab
        has_load = load_cover[members].any()
        has_support = support_cover[members].any()
        if has_load and (has_support or path_rule == "load_only"):
            active |= members
    idx = np.where(active)[0]
    return idx, len(idx) == 0


def _phi_threshold(eps, alpha, margin):
    """TDF value at which the regularized density exceeds alpha + margin."""
    target = alpha + margin
    if target >= 1.0:
        return eps
    return brentq(
        lambda x: regularized_heaviside(x, eps, alpha) - target, -eps, eps, xtol=1e-14
    )


def full_mesh_band(model, reason=""):
    solid = model.solid
    return NarrowBand(
        np.arange(solid.n_elements),
        np.arange(solid.n_nodes),
        np.arange(3 * solid.n_nodes),
        np.zeros(0, dtype=np.int64),
        True,
        reason,
    )


def narrow_band_mesh(model, cache, design):
    """Build the narrow band for the current design (or a full-mesh fallback)."""
    solid = model.solid
    coverage = model.assembler.component_coverage(cache, design)
    if coverage.shape[1] == 0:
        return full_mesh_band(model, reason="no components")
    adj = component_overlap_graph(coverage)
    load_cover = covering_components(coverage, model.load_vertices)
    support_cover = covering_components(coverage, model.support_vertices)
    active, fallback = active_components(
        adj, load_cover, support_cover, model.path_rule
    )
    if fallback:
        return full_mesh_band(model, reason="no load-path cluster")

    thresh = _phi_threshold(model.eps, model.alpha, model.band_margin)
    vertex_covered = coverage[:, active].max(axis=1) > thresh
    node_covered = np.tile(vertex_covered, solid.n_layers)
    node_kept = node_covered & (model.node_band == BAND_DESIGN)
    node_kept |= model.node_band != BAND_DESIGN  # panel bands are structure

    keep_mask = node_kept[solid.elements].any(axis=1)
    touch_mask = np.zeros(solid.n_nodes, dtype=bool)
    touch_mask[model.touched_nodes] = True
    keep_mask |= touch_mask[solid.elements].any(axis=1)
    kept_elements = np.where(keep_mask)[0]

    kept_nodes = np.unique(solid.elements[kept_elements])
    present = np.zeros(solid.n_nodes, dtype=bool)
    present[kept_nodes] = True
    if not present[model.touched_nodes].all():
        return full_mesh_band(model, reason="loading test failed")

    dof_map = np.full(3 * solid.n_nodes, -1, dtype=np.int64)
    kept_dofs = (3 * kept_nodes[:, None] + np.arange(3)[None, :]).ravel()
    dof_map[kept_dofs] = np.arange(len(kept_dofs))
    return NarrowBand(kept_elements, kept_nodes, dof_map, active, False)
