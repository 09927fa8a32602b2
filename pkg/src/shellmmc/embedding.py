"""Global TDF assembly on the surface and projection through the thickness.

Per patch, component TDFs are evaluated at the chart coordinates of every
(cut) vertex and K-S aggregated; the two sides of each cut line are
reconciled with a K-S of the duplicated values; patch fields are extended
by a negative constant off-patch and stitched into the global surface TDF
with one more K-S. Through the thickness, prescribed panel bands override
the design field.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .components import component_tdf, component_tdf_grad, ks_max_rows
from .errors import ConfigError, MeshError

EXTENSION_CONST = -1.0

# node bands of the unified density (through-thickness classification)
BAND_LOWER, BAND_DESIGN, BAND_UPPER = 0, 1, 2


@dataclass
class PanelSpec:
    """Prescribed base panels of the unified topology/rib/sandwich density.

    ``omega_bar_2`` is the thickness of the lower band (density ``rho_1``,
    modulus multiplier ``panel_modulus_scale_1``); ``omega_bar_1`` sizes the
    upper band (density ``rho_2``, multiplier ``panel_modulus_scale_2``).
    Zero thicknesses give plain topology optimization, one nonzero gives a
    rib-reinforced panel, both nonzero a sandwich.
    """

    omega_bar_1: float = 0.0
    omega_bar_2: float = 0.0
    rho_1: float = 1.0
    rho_2: float = 1.0
    panel_modulus_scale_1: float = 1.0
    panel_modulus_scale_2: float = 1.0

    def validate(self, t):
        if self.omega_bar_1 < 0 or self.omega_bar_2 < 0:
            raise ConfigError("panel thicknesses must be non-negative")
        if not (0.0 < self.rho_1 <= 1.0 and 0.0 < self.rho_2 <= 1.0):
            raise ConfigError("panel densities must lie in (0, 1]")
        if self.omega_bar_1 + self.omega_bar_2 >= t:
            raise ConfigError(
                f"panel thicknesses {self.omega_bar_1} + {self.omega_bar_2} "
                f"leave no designable band in total thickness {t}"
            )


class SurfaceTdfField:
    """Global TDF value per surface vertex."""

    def __init__(self, phi):
        self.phi = np.asarray(phi, dtype=float)
        if not np.isfinite(self.phi).all():
            raise ValueError("surface TDF contains non-finite values")


class ChartBinding:
    """A patch chart tied back to the global surface mesh.

    Parameters
    ----------
    chart : PatchChart
    local_to_global : (n_patch_vertices,) ndarray
        Patch (pre-cut) vertex index -> global surface vertex index.
    """

    def __init__(self, chart, local_to_global):
        self.chart = chart
        self.local_to_global = np.asarray(local_to_global, dtype=np.int64)
        if len(self.local_to_global) != chart.cut.n_source_vertices:
            raise MeshError("local_to_global must cover every pre-cut patch vertex")
        self.to_source = chart.cut.to_source
        self.rect_uv = chart.rect_uv
        self.width = chart.width
        self.height = chart.height


def _clamped_components(binding, comps, margin_frac=0.1):
    """Warn about and clamp component centers far outside the rectangle."""
    out = []
    mx = margin_frac * max(binding.width, binding.height)
    for c in comps:
        if (
            c.x0 < -mx
            or c.x0 > binding.width + mx
            or c.y0 < -mx
            or c.y0 > binding.height + mx
        ):
            warnings.warn(
                f"component center ({c.x0:.4g}, {c.y0:.4g}) lies outside the "
                f"{binding.width} x {binding.height} chart; clamping for evaluation",
                stacklevel=3,
            )
            c = type(c)(
                min(max(c.x0, 0.0), binding.width),
                min(max(c.y0, 0.0), binding.height),
                c.theta, c.L, c.t1, c.t2, c.t3,
            )
        out.append(c)
    return out


def _group_ks(values, to_source, n_source, l):
    """K-S over the duplicated copies of each source vertex.

    Returns (per-source aggregated value, per-copy softmax weight).
    """
    m = np.full(n_source, -np.inf)
    np.maximum.at(m, to_source, values)
    e = np.exp(l * (values - m[to_source]))
    tot = np.zeros(n_source)
    np.add.at(tot, to_source, e)
    agg = m + np.log(tot) / l
    return agg, e / tot[to_source]


class PatchField:
    """Forward TDF evaluation of one patch with its differentiation caches."""

    def __init__(self, values, comp_weights, group_weights, comp_phi):
        self.values = values              # (n_source,) patch TDF per pre-cut vertex
        self.comp_weights = comp_weights  # (n_cut, n_comp) K-S softmax or None
        self.group_weights = group_weights  # (n_cut,) cut-copy softmax or None
        self.comp_phi = comp_phi          # (n_cut, n_comp) raw component TDFs or None


def patch_field(binding, comps, l):
    """Evaluate a patch's TDF at every pre-cut patch vertex (with caches)."""
    n_cut = len(binding.rect_uv)
    n_source = binding.chart.cut.n_source_vertices
    if len(comps) == 0:
        return PatchField(np.full(n_source, EXTENSION_CONST), None, None, None)
    comps = _clamped_components(binding, comps)
    phi = np.empty((n_cut, len(comps)))
    for i, c in enumerate(comps):
        phi[:, i] = component_tdf(binding.rect_uv, c)
    v_cut, comp_w = ks_max_rows(phi, l, axis=1)
    values, group_w = _group_ks(v_cut, binding.to_source, n_source, l)
    return PatchField(values, comp_w, group_w, phi)


def patch_tdf(chart, comps, l, local_to_global=None):
    """Patch TDF per pre-cut patch vertex (cut copies already reconciled)."""
    binding = ChartBinding(
        chart,
        local_to_global
        if local_to_global is not None
        else np.arange(chart.cut.n_source_vertices),
    )
    return patch_field(binding, comps, l).values


def stitch_global_tdf(patch_values, vertex_maps, n_vertices, l, const=EXTENSION_CONST):
    """K-S stitch of per-patch vertex fields extended by ``const`` off-patch.

    Returns ``(SurfaceTdfField, weights)`` where ``weights[k, v]`` is the
    softmax weight of patch k at vertex v.
    """
    n_p = len(patch_values)
    if n_p == 0:
        raise ValueError("no patches to stitch")
    M = np.full((n_p, n_vertices), const)
    for k, (vals, vmap) in enumerate(zip(patch_values, vertex_maps)):
        M[k, vmap] = vals
    phi, weights = ks_max_rows(M, l, axis=0)
    return SurfaceTdfField(phi), weights


class TdfCache:
    def __init__(self, phi, fields, stitch_weights):
        self.phi = phi                      # SurfaceTdfField
        self.fields = fields                # list of PatchField
        self.stitch_weights = stitch_weights  # (n_patches, n_vertices)


class TdfAssembler:
    """Evaluates the global surface TDF and applies its adjoint.

    The adjoint maps a per-vertex weight field to the gradient of
    ``sum_v w_v * phi(v)`` with respect to the flat design vector, reusing
    the softmax weights of the forward K-S chain.
    """

    def __init__(self, bindings, n_vertices, l):
        self.bindings = list(bindings)
        self.n_vertices = int(n_vertices)
        self.l = float(l)

    def evaluate(self, design):
        if design.n_patches != len(self.bindings):
            raise ConfigError(
                f"design has {design.n_patches} patches, atlas has {len(self.bindings)}"
            )
        fields = [
            patch_field(b, comps, self.l)
            for b, comps in zip(self.bindings, design.per_patch)
        ]
        phi, weights = stitch_global_tdf(
            [f.values for f in fields],
            [b.local_to_global for b in self.bindings],
            self.n_vertices,
            self.l,
        )
        return TdfCache(phi, fields, weights)

    def adjoint(self, cache, vertex_weights, design):
        """d(sum_v w_v phi_v)/dD for the design the cache was built with."""
        vertex_weights = np.asarray(vertex_weights, dtype=float)
        out = np.zeros(design.n_variables)
        pos = 0
        for k, (binding, field, comps) in enumerate(
            zip(self.bindings, cache.fields, design.per_patch)
        ):
            n_c = len(comps)
            if n_c == 0:
                continue
            w_src = (
                vertex_weights[binding.local_to_global]
                * cache.stitch_weights[k, binding.local_to_global]
            )
            w_cut = w_src[binding.to_source] * field.group_weights
            active = w_cut != 0.0
            if active.any():
                comps_eval = _clamped_components(binding, comps)
                for i in range(n_c):
                    coeff = w_cut * field.comp_weights[:, i]
                    nz = active & (coeff != 0.0)
                    if not nz.any():
                        continue
                    grads = component_tdf_grad(binding.rect_uv[nz], comps_eval[i])
                    out[pos + 7 * i : pos + 7 * (i + 1)] = coeff[nz] @ grads
            pos += 7 * n_c
        return out

    def component_coverage(self, cache, design):
        """Hard-max component TDF per (global vertex, component).

        Returns an (n_vertices, n_total_components) array filled with the
        extension constant off-patch; used by the DOF-removal logic.
        """
        n_total = sum(design.counts)
        cov = np.full((self.n_vertices, n_total), EXTENSION_CONST)
        col = 0
        for binding, field, comps in zip(self.bindings, cache.fields, design.per_patch):
            n_c = len(comps)
            if n_c == 0:
                continue
            per_source = np.full((binding.chart.cut.n_source_vertices, n_c), -np.inf)
            np.maximum.at(per_source, binding.to_source, field.comp_phi)
            cov[binding.local_to_global, col : col + n_c] = np.maximum(
                cov[binding.local_to_global, col : col + n_c], per_source
            )
            col += n_c
        return cov


# ---------------------------------------------------------------------------
# through-thickness density


def node_bands(omega, panel, t):
    """Band id per node offset per Eq-style half-open classification.

    Lower panel: omega in [-t/2, -t/2 + omega_bar_2); designable band:
    closed [-t/2 + omega_bar_2, t/2 - omega_bar_1]; upper panel above.
    """
    omega = np.asarray(omega, dtype=float)
    if (np.abs(omega) > t / 2 * (1 + 1e-9)).any():
        raise MeshError("thickness coordinate outside [-t/2, t/2]: corrupt solid mesh")
    lower_edge = -t / 2 + panel.omega_bar_2
    upper_edge = t / 2 - panel.omega_bar_1
    bands = np.full(omega.shape, BAND_DESIGN, dtype=np.int8)
    bands[omega < lower_edge] = BAND_LOWER
    bands[omega > upper_edge] = BAND_UPPER
    return bands


def solid_density(omega, phi, panel, eps, alpha, t):
    """Unified node density: panel densities in the prescribed bands,
    regularized-Heaviside of the surface TDF in the designable band."""
    from .fem import regularized_heaviside

    omega = np.asarray(omega, dtype=float)
    phi = np.asarray(phi, dtype=float)
    bands = node_bands(omega, panel, t)
    rho = regularized_heaviside(phi, eps, alpha)
    rho = np.where(bands == BAND_LOWER, panel.rho_1, rho)
    rho = np.where(bands == BAND_UPPER, panel.rho_2, rho)
    return rho if rho.ndim else float(rho)


def solid_density_field(solid, surface_phi, panel, eps, alpha):
    """Node densities over a whole SolidMesh, ordered like its nodes."""
    omega = solid.node_omegas()
    phi = np.tile(surface_phi.phi, solid.n_layers)
    return solid_density(omega, phi, panel, eps, alpha, solid.t)


def solid_density_at(solid, node, surface_phi, panel, heaviside):
    """Density of one solid-mesh node (flat id or (vertex, layer) pair).

    The projection point is the node's generator surface vertex, so the
    designable band reads the surface TDF there.
    """
    from .solidmesh import thickness_coordinate

    omega, vertex = thickness_coordinate(solid, node)
    eps, alpha = heaviside
    return float(
        solid_density(omega, surface_phi.phi[vertex], panel, eps, alpha, solid.t)
    )
