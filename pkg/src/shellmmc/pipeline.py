"""Glue between the atlas, the solid mesh and the FEM: one evaluable model.

A :class:`StructuralModel` owns everything that stays fixed during an
optimization (charts, solid mesh, element stiffness cache, panel bands,
boundary conditions) and evaluates compliance, volume and their design
sensitivities for a given component layout.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import dofremoval, sensitivity
from .components import ComponentParams, ComponentSet
from .embedding import (
    BAND_DESIGN,
    BAND_LOWER,
    BAND_UPPER,
    TdfAssembler,
    node_bands,
    solid_density_field,
)
from .errors import ConfigError
from .fem import assemble_and_solve, wedge_stiffness_batch
from .solidmesh import generate_offset_mesh

DEFAULT_KS_L = 100.0
DEFAULT_HEAVISIDE = (0.1, 1e-3)
FLOOR_FRACTION = 0.01  # L_min and t_min relative to min(W, H)


@dataclass
class DesignSpace:
    """Box bounds and per-variable scales of the flat design vector."""

    counts: list
    lower: np.ndarray
    upper: np.ndarray
    scales: np.ndarray

    @property
    def n_variables(self):
        return len(self.lower)


def design_space_for(bindings, counts):
    lower, upper, scales = [], [], []
    for binding, n in zip(bindings, counts):
        W, H = binding.width, binding.height
        mn = min(W, H)
        diag = float(np.hypot(W, H))
        floor = FLOOR_FRACTION * mn
        lo = [0.0, 0.0, -2 * np.pi, floor, floor, floor, floor]
        hi = [W, H, 2 * np.pi, diag, 0.5 * mn, 0.5 * mn, 0.5 * mn]
        sc = [W, H, np.pi, diag, 0.1 * mn, 0.1 * mn, 0.1 * mn]
        lower += lo * n
        upper += hi * n
        scales += sc * n
    return DesignSpace(
        list(counts), np.asarray(lower), np.asarray(upper), np.asarray(scales)
    )


def initial_layout(bindings, grids, volume_bound, thickness_factor=None):
    """Crossed-pair component grid per patch.

    Every grid cell holds two components along its diagonals; the initial
    half-thickness is 0.4 * min(cell) * factor with the factor defaulting
    to half the volume bound.
    """
    if thickness_factor is None:
        thickness_factor = 0.5 * volume_bound
    per_patch = []
    for binding, grid in zip(bindings, grids):
        nx, ny = int(grid[0]), int(grid[1])
        if nx < 1 or ny < 1:
            raise ConfigError("layout grid must be at least 1x1")
        W, H = binding.width, binding.height
        cw, ch = W / nx, H / ny
        t0 = 0.4 * min(cw, ch) * thickness_factor
        floor = FLOOR_FRACTION * min(W, H)
        if t0 < floor:
            raise ConfigError(
                f"layout grid {nx}x{ny} too dense: initial thickness {t0:.3g} "
                f"falls below the floor {floor:.3g}"
            )
        L0 = 0.5 * float(np.hypot(cw, ch))
        ang = float(np.arctan2(ch, cw))
        comps = []
        for i in range(nx):
            for j in range(ny):
                cx, cy = (i + 0.5) * cw, (j + 0.5) * ch
                for theta in (ang, -ang):
                    comps.append(ComponentParams(cx, cy, theta, L0, t0, t0, t0))
        per_patch.append(comps)
    return ComponentSet(per_patch)


@dataclass
class IterationResult:
    compliance: float
    volume: float
    dC: np.ndarray
    dV: np.ndarray
    solution: object
    cache: object
    node_density: np.ndarray
    element_density: np.ndarray
    band: object  # NarrowBand or None


class StructuralModel:
    def __init__(
        self,
        surface,
        bindings,
        panel,
        material,
        bc,
        thickness,
        layers,
        heaviside=DEFAULT_HEAVISIDE,
        ks_l=DEFAULT_KS_L,
        volume_bound=0.4,
        dof_removal=True,
        path_rule="load_and_support",
        band_margin=1e-6,
        solid=None,
    ):
        panel.validate(thickness)
        self.surface = surface
        self.bindings = list(bindings)
        self.assembler = TdfAssembler(self.bindings, surface.n_vertices, ks_l)
        self.solid = (
            solid
            if solid is not None
            else generate_offset_mesh(surface, thickness, layers)
        )
        self.panel = panel
        self.material = material
        self.bc = bc
        self.eps, self.alpha = heaviside
        self.ks_l = ks_l
        self.volume_bound = float(volume_bound)
        self.dof_removal = bool(dof_removal)
        if path_rule not in ("load_and_support", "load_only"):
            raise ConfigError(f"unknown path_rule '{path_rule}'")
        self.path_rule = path_rule
        self.band_margin = float(band_margin)

        bc.validate(self.solid)
        self.k0 = wedge_stiffness_batch(self.solid.nodes[self.solid.elements], material)
        self.volumes = self.solid.element_volumes()
        self.node_band = node_bands(self.solid.node_omegas(), panel, self.solid.t)
        self.element_band = node_bands(
            self.solid.element_mid_omegas(), panel, self.solid.t
        )
        self.designable_elements = np.where(self.element_band == BAND_DESIGN)[0]
        self.design_volume = float(self.volumes[self.designable_elements].sum())
        self.modulus_scale = np.ones(self.solid.n_elements)
        self.modulus_scale[self.element_band == BAND_LOWER] = panel.panel_modulus_scale_1
        self.modulus_scale[self.element_band == BAND_UPPER] = panel.panel_modulus_scale_2

        self.touched_nodes = bc.touched_nodes(self.solid)
        loaded_nodes = np.unique(np.where(bc.force_vector(self.solid) != 0.0)[0] // 3)
        self.load_vertices = np.unique(loaded_nodes % surface.n_vertices)
        support_nodes = np.asarray(sorted({node for node, _ in bc.fixed_dofs}))
        self.support_vertices = np.unique(support_nodes % surface.n_vertices)

    def design_space(self, counts):
        return design_space_for(self.bindings, counts)

    def densities(self, cache):
        node_rho = solid_density_field(
            self.solid, cache.phi, self.panel, self.eps, self.alpha
        )
        elem_rho = node_rho[self.solid.elements].mean(axis=1)
        return node_rho, elem_rho

    def volume_fraction(self, elem_rho):
        d = self.designable_elements
        return float(self.volumes[d] @ elem_rho[d] / self.design_volume)

    def evaluate(self, design, with_gradients=True, dof_removal=None):
        """Full pipeline for one design: TDF, densities, (banded) FEM solve,
        compliance/volume and, optionally, their analytic sensitivities."""
        use_band = self.dof_removal if dof_removal is None else dof_removal
        cache = self.assembler.evaluate(design)
        node_rho, elem_rho = self.densities(cache)

        band = None
        keep = None
        if use_band:
            band = dofremoval.narrow_band_mesh(self, cache, design)
            if not band.fallback:
                keep = band.kept_elements
        try:
            sol = assemble_and_solve(
                self.solid,
                elem_rho,
                self.bc,
                self.material,
                k0=self.k0,
                modulus_scale=self.modulus_scale,
                keep_elements=keep,
            )
        except Exception as exc:
            if keep is None:
                raise
            warnings.warn(
                f"narrow-band solve failed ({exc}); falling back to the full mesh",
                stacklevel=2,
            )
            band = dofremoval.full_mesh_band(self, reason="band solve failed")
            keep = None
            sol = assemble_and_solve(
                self.solid,
                elem_rho,
                self.bc,
                self.material,
                k0=self.k0,
                modulus_scale=self.modulus_scale,
            )

        V = self.volume_fraction(elem_rho)
        dC = dV = None
        if with_gradients:
            kept = keep if keep is not None else np.arange(self.solid.n_elements)
            Gv = sensitivity.compliance_vertex_weights(self, cache, sol.U, kept)
            dC = self.assembler.adjoint(cache, Gv, design)
            Qv = sensitivity.volume_vertex_weights(self, cache)
            dV = self.assembler.adjoint(cache, Qv, design)
        return IterationResult(
            sol.compliance, V, dC, dV, sol, cache, node_rho, elem_rho, band
        )
