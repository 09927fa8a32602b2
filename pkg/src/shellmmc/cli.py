"""Command line interface: configuration, pipeline subcommands, file I/O.

Subcommands compose the pipeline stages: ``parameterize`` builds and dumps
the conformal atlas, ``layout`` places the initial component grid,
``optimize`` runs the full loop, ``check-gradients`` verifies sensitivities
against finite differences, ``export`` renders a design to VTK.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

from .errors import ConfigError, ShellMmcError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITERATIONS = 3

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _pin_threads(argv):
    # must happen before numpy/scipy are imported anywhere
    n = None
    for i, a in enumerate(argv):
        if a == "--threads" and i + 1 < len(argv):
            n = argv[i + 1]
        elif a.startswith("--threads="):
            n = a.split("=", 1)[1]
    if n is not None:
        for var in _THREAD_ENV_VARS:
            os.environ[var] = str(n)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PatchConfig:
    corners: list
    label: int = None
    faces: list = None
    cut_path: list = field(default_factory=list)
    width: float = 1.0
    height: float = 1.0
    grid: list = field(default_factory=lambda: [4, 4])


@dataclass
class RunConfig:
    mesh_path: str
    patches: list
    mesh_format: str = None
    patch_labels: str = None
    thickness: float = 1.0
    layers: int = 2
    youngs_modulus: float = 1.0
    poisson_ratio: float = 0.3
    lower_thickness: float = 0.0
    upper_thickness: float = 0.0
    lower_density: float = 1.0
    upper_density: float = 1.0
    lower_modulus_scale: float = 1.0
    upper_modulus_scale: float = 1.0
    heaviside_epsilon: float = 0.1
    heaviside_alpha: float = 1e-3
    ks_aggregation: float = 100.0
    volume_bound: float = 0.4
    fixed_columns: list = field(default_factory=list)
    fixed_nodes: list = field(default_factory=list)
    point_loads: list = field(default_factory=list)
    column_loads: list = field(default_factory=list)
    tolerance: float = 1e-4
    max_iterations: int = 300
    move_limit: float = 0.2
    path_rule: str = "load_and_support"
    dof_removal: bool = True
    checkpoint_every: int = 10
    mma_asy_init: float = 0.5
    mma_asy_incr: float = 1.2
    mma_asy_decr: float = 0.7
    mma_asy_min: float = 0.01
    mma_asy_max: float = 10.0
    mma_albefa: float = 0.1
    mma_raa0: float = 1e-5
    layout_thickness_factor: float = None
    output_dir: str = "out"

    def to_dict(self):
        return {
            "mesh": {
                "path": self.mesh_path,
                "format": self.mesh_format,
                "patch_labels": self.patch_labels,
            },
            "patches": [
                {
                    "label": p.label,
                    "faces": p.faces,
                    "cut_path": list(p.cut_path),
                    "corners": list(p.corners),
                    "width": p.width,
                    "height": p.height,
                    "grid": list(p.grid),
                }
                for p in self.patches
            ],
            "thickness": self.thickness,
            "layers": self.layers,
            "material": {
                "youngs_modulus": self.youngs_modulus,
                "poisson_ratio": self.poisson_ratio,
            },
            "panels": {
                "lower_thickness": self.lower_thickness,
                "upper_thickness": self.upper_thickness,
                "lower_density": self.lower_density,
                "upper_density": self.upper_density,
                "lower_modulus_scale": self.lower_modulus_scale,
                "upper_modulus_scale": self.upper_modulus_scale,
            },
            "heaviside": {
                "epsilon": self.heaviside_epsilon,
                "alpha": self.heaviside_alpha,
            },
            "ks_aggregation": self.ks_aggregation,
            "volume_bound": self.volume_bound,
            "bc": {
                "fixed_columns": list(self.fixed_columns),
                "fixed_nodes": [list(x) for x in self.fixed_nodes],
                "point_loads": [list(x) for x in self.point_loads],
                "column_loads": [list(x) for x in self.column_loads],
            },
            "optimizer": {
                "tolerance": self.tolerance,
                "max_iterations": self.max_iterations,
                "move_limit": self.move_limit,
                "path_rule": self.path_rule,
                "dof_removal": self.dof_removal,
                "checkpoint_every": self.checkpoint_every,
                "mma": {
                    "asy_init": self.mma_asy_init,
                    "asy_incr": self.mma_asy_incr,
                    "asy_decr": self.mma_asy_decr,
                    "asy_min": self.mma_asy_min,
                    "asy_max": self.mma_asy_max,
                    "albefa": self.mma_albefa,
                    "raa0": self.mma_raa0,
                },
            },
            "layout": {"thickness_factor": self.layout_thickness_factor},
            "output_dir": self.output_dir,
        }


def _get(d, key, default, kind, fieldname, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"{fieldname}: missing required field")
        return default
    v = d[key]
    try:
        if kind is bool:
            if not isinstance(v, bool):
                raise TypeError
            return v
        if kind is list:
            return list(v)
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{fieldname}: expected {kind.__name__}, got {v!r}") from None


def config_from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be a JSON object")
    mesh = d.get("mesh")
    if not isinstance(mesh, dict):
        raise ConfigError("mesh: missing required section")
    patches_raw = d.get("patches")
    if not isinstance(patches_raw, list) or not patches_raw:
        raise ConfigError("patches: at least one patch is required")
    patches = []
    for k, p in enumerate(patches_raw):
        name = f"patches[{k}]"
        if not isinstance(p, dict):
            raise ConfigError(f"{name}: expected an object")
        corners = _get(p, "corners", None, list, f"{name}.corners", required=True)
        if len(corners) != 4:
            raise ConfigError(f"{name}.corners: exactly four vertex ids required")
        patches.append(
            PatchConfig(
                corners=[int(c) for c in corners],
                label=(None if p.get("label") is None else int(p["label"])),
                faces=(None if p.get("faces") is None else [int(f) for f in p["faces"]]),
                cut_path=[int(v) for v in _get(p, "cut_path", [], list, f"{name}.cut_path")],
                width=_get(p, "width", 1.0, float, f"{name}.width"),
                height=_get(p, "height", 1.0, float, f"{name}.height"),
                grid=[int(g) for g in _get(p, "grid", [4, 4], list, f"{name}.grid")],
            )
        )
        if patches[-1].label is None and patches[-1].faces is None:
            raise ConfigError(f"{name}: provide either 'label' or 'faces'")
        if len(patches[-1].grid) != 2:
            raise ConfigError(f"{name}.grid: expected [nx, ny]")
        if patches[-1].width <= 0 or patches[-1].height <= 0:
            raise ConfigError(f"{name}: width and height must be positive")

    mat = d.get("material", {})
    panels = d.get("panels", {})
    heav = d.get("heaviside", {})
    bc = d.get("bc", {})
    opt = d.get("optimizer", {})
    layout = d.get("layout", {})

    cfg = RunConfig(
        mesh_path=_get(mesh, "path", None, str, "mesh.path", required=True),
        mesh_format=_get(mesh, "format", None, str, "mesh.format"),
        patch_labels=_get(mesh, "patch_labels", None, str, "mesh.patch_labels"),
        patches=patches,
        thickness=_get(d, "thickness", 1.0, float, "thickness"),
        layers=_get(d, "layers", 2, int, "layers"),
        youngs_modulus=_get(mat, "youngs_modulus", 1.0, float, "material.youngs_modulus"),
        poisson_ratio=_get(mat, "poisson_ratio", 0.3, float, "material.poisson_ratio"),
        lower_thickness=_get(panels, "lower_thickness", 0.0, float, "panels.lower_thickness"),
        upper_thickness=_get(panels, "upper_thickness", 0.0, float, "panels.upper_thickness"),
        lower_density=_get(panels, "lower_density", 1.0, float, "panels.lower_density"),
        upper_density=_get(panels, "upper_density", 1.0, float, "panels.upper_density"),
        lower_modulus_scale=_get(
            panels, "lower_modulus_scale", 1.0, float, "panels.lower_modulus_scale"
        ),
        upper_modulus_scale=_get(
            panels, "upper_modulus_scale", 1.0, float, "panels.upper_modulus_scale"
        ),
        heaviside_epsilon=_get(heav, "epsilon", 0.1, float, "heaviside.epsilon"),
        heaviside_alpha=_get(heav, "alpha", 1e-3, float, "heaviside.alpha"),
        ks_aggregation=_get(d, "ks_aggregation", 100.0, float, "ks_aggregation"),
        volume_bound=_get(d, "volume_bound", 0.4, float, "volume_bound"),
        fixed_columns=[int(v) for v in _get(bc, "fixed_columns", [], list, "bc.fixed_columns")],
        fixed_nodes=[list(x) for x in _get(bc, "fixed_nodes", [], list, "bc.fixed_nodes")],
        point_loads=[list(x) for x in _get(bc, "point_loads", [], list, "bc.point_loads")],
        column_loads=[list(x) for x in _get(bc, "column_loads", [], list, "bc.column_loads")],
        tolerance=_get(opt, "tolerance", 1e-4, float, "optimizer.tolerance"),
        max_iterations=_get(opt, "max_iterations", 300, int, "optimizer.max_iterations"),
        move_limit=_get(opt, "move_limit", 0.2, float, "optimizer.move_limit"),
        path_rule=_get(opt, "path_rule", "load_and_support", str, "optimizer.path_rule"),
        dof_removal=_get(opt, "dof_removal", True, bool, "optimizer.dof_removal"),
        checkpoint_every=_get(opt, "checkpoint_every", 10, int, "optimizer.checkpoint_every"),
        mma_asy_init=_get(opt.get("mma", {}), "asy_init", 0.5, float, "optimizer.mma.asy_init"),
        mma_asy_incr=_get(opt.get("mma", {}), "asy_incr", 1.2, float, "optimizer.mma.asy_incr"),
        mma_asy_decr=_get(opt.get("mma", {}), "asy_decr", 0.7, float, "optimizer.mma.asy_decr"),
        mma_asy_min=_get(opt.get("mma", {}), "asy_min", 0.01, float, "optimizer.mma.asy_min"),
        mma_asy_max=_get(opt.get("mma", {}), "asy_max", 10.0, float, "optimizer.mma.asy_max"),
        mma_albefa=_get(opt.get("mma", {}), "albefa", 0.1, float, "optimizer.mma.albefa"),
        mma_raa0=_get(opt.get("mma", {}), "raa0", 1e-5, float, "optimizer.mma.raa0"),
        layout_thickness_factor=(
            None
            if layout.get("thickness_factor") is None
            else float(layout["thickness_factor"])
        ),
        output_dir=_get(d, "output_dir", "out", str, "output_dir"),
    )
    if not 0.0 < cfg.volume_bound <= 1.0:
        raise ConfigError("volume_bound: must lie in (0, 1]")
    if cfg.thickness <= 0:
        raise ConfigError("thickness: must be positive")
    if cfg.layers < 1:
        raise ConfigError("layers: must be at least 1")
    if cfg.path_rule not in ("load_and_support", "load_only"):
        raise ConfigError("optimizer.path_rule: 'load_and_support' or 'load_only'")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from None
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# builders


def load_mesh(cfg):
    from .mesh import load_surface_mesh

    return load_surface_mesh(cfg.mesh_path, cfg.mesh_format, cfg.patch_labels)


def build_atlas(cfg, surface):
    """Extract, cut and parameterize every configured patch."""
    import numpy as np

    from .conformal import build_chart, resolve_corners
    from .embedding import ChartBinding
    from .mesh import cut_surface, extract_patch

    bindings = []
    for k, p in enumerate(cfg.patches):
        name = f"patches[{k}]"
        try:
            if p.faces is not None:
                face_ids = np.asarray(p.faces, dtype=np.int64)
            else:
                face_ids = np.where(surface.patch_id == p.label)[0]
                if len(face_ids) == 0:
                    raise ConfigError(f"{name}.label: no faces carry label {p.label}")
            patch, vmap = extract_patch(surface, face_ids)
            local = np.full(surface.n_vertices, -1, dtype=np.int64)
            local[vmap] = np.arange(len(vmap))
            for v in list(p.cut_path) + list(p.corners):
                if not (0 <= v < surface.n_vertices) or local[v] < 0:
                    raise ConfigError(
                        f"{name}: vertex {v} is not part of the patch"
                    )
            cut = cut_surface(patch, [local[v] for v in p.cut_path])
            corners = resolve_corners(cut, [local[v] for v in p.corners])
            chart = build_chart(cut, corners, p.width, p.height)
            bindings.append(ChartBinding(chart, vmap))
        except ConfigError:
            raise
        except ShellMmcError as exc:
            raise type(exc)(f"patch {k}: {exc}") from None
    return bindings


def build_model(cfg, surface=None, bindings=None, dof_removal=None):
    from .embedding import PanelSpec
    from .fem import BoundaryConditions, Material
    from .pipeline import StructuralModel
    from .solidmesh import generate_offset_mesh

    surface = surface if surface is not None else load_mesh(cfg)
    bindings = bindings if bindings is not None else build_atlas(cfg, surface)
    solid = generate_offset_mesh(surface, cfg.thickness, cfg.layers)

    bc = BoundaryConditions()
    for v in cfg.fixed_columns:
        if not 0 <= v < surface.n_vertices:
            raise ConfigError(f"bc.fixed_columns: vertex {v} out of range")
        bc.fix_column(solid, v)
    for entry in cfg.fixed_nodes:
        if len(entry) != 2:
            raise ConfigError("bc.fixed_nodes: entries are [node, axis]")
        bc.fixed_dofs.add((int(entry[0]), int(entry[1])))
    for entry in cfg.point_loads:
        if len(entry) != 4:
            raise ConfigError("bc.point_loads: entries are [node, fx, fy, fz]")
        bc.point_loads.append((int(entry[0]), [float(x) for x in entry[1:]]))
    for entry in cfg.column_loads:
        if len(entry) != 4:
            raise ConfigError("bc.column_loads: entries are [vertex, fx, fy, fz]")
        bc.load_columns.append((int(entry[0]), [float(x) for x in entry[1:]]))

    panel = PanelSpec(
        omega_bar_1=cfg.upper_thickness,
        omega_bar_2=cfg.lower_thickness,
        rho_1=cfg.lower_density,
        rho_2=cfg.upper_density,
        panel_modulus_scale_1=cfg.lower_modulus_scale,
        panel_modulus_scale_2=cfg.upper_modulus_scale,
    )
    return StructuralModel(
        surface,
        bindings,
        panel,
        Material(cfg.youngs_modulus, cfg.poisson_ratio),
        bc,
        cfg.thickness,
        cfg.layers,
        solid=solid,
        heaviside=(cfg.heaviside_epsilon, cfg.heaviside_alpha),
        ks_l=cfg.ks_aggregation,
        volume_bound=cfg.volume_bound,
        dof_removal=cfg.dof_removal if dof_removal is None else dof_removal,
        path_rule=cfg.path_rule,
    )


def _initial_design(cfg, model):
    from .pipeline import initial_layout

    grids = [p.grid for p in cfg.patches]
    return initial_layout(
        model.bindings, grids, cfg.volume_bound, cfg.layout_thickness_factor
    )


def _write_json(path, payload):
    from .vtkio import atomic_write_text

    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _outdir(cfg, args):
    out = args.output or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def cmd_parameterize(args):
    from . import report
    from .conformal import chart_to_csv

    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    surface = load_mesh(cfg)
    bindings = build_atlas(cfg, surface)
    diag = {}
    for k, b in enumerate(bindings):
        ids = b.local_to_global[b.to_source]
        chart_to_csv(b.chart, os.path.join(out, f"chart_patch{k}.csv"), ids)
        report.chart_figure(
            b.chart, os.path.join(out, f"chart_patch{k}.png"), title=f"patch {k}"
        )
        diag[f"patch{k}"] = b.chart.diagnostics
    _write_json(os.path.join(out, "parameterize_diagnostics.json"), diag)
    print(f"parameterized {len(bindings)} patch(es) -> {out}")
    for k, b in enumerate(bindings):
        d = b.chart.diagnostics
        print(
            f"  patch {k}: mean|mu| {d['mean_abs_mu']:.3e}, "
            f"max|mu| {d['max_abs_mu']:.3e}, flipped {d['flipped_faces']}"
        )
    return EXIT_OK


def cmd_layout(args):
    from . import report
    from .optimizer import write_design
    from .vtkio import write_solid_vtk

    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    model = build_model(cfg)
    design = _initial_design(cfg, model)
    space = model.design_space(design.counts)
    write_design(os.path.join(out, "initial_design.txt"), design.flatten() / space.scales)

    cache = model.assembler.evaluate(design)
    node_rho, elem_rho = model.densities(cache)
    write_solid_vtk(
        os.path.join(out, "layout_density.vtk"),
        model.solid,
        cell_data={"density": elem_rho},
    )
    for k, b in enumerate(model.bindings):
        report.layout_figure(
            b,
            design.per_patch[k],
            model.ks_l,
            os.path.join(out, f"layout_patch{k}.png"),
            title=f"patch {k}: {len(design.per_patch[k])} components",
        )
    v0 = model.volume_fraction(elem_rho)
    _write_json(
        os.path.join(out, "layout_diagnostics.json"),
        {
            "components": design.counts,
            "initial_volume_fraction": v0,
            "thickness_factor": (
                cfg.layout_thickness_factor
                if cfg.layout_thickness_factor is not None
                else 0.5 * cfg.volume_bound
            ),
        },
    )
    print(f"layout: {sum(design.counts)} components, V0 = {v0:.4f} -> {out}")
    return EXIT_OK


def cmd_optimize(args):
    from . import report
    from .optimizer import OptimizerOptions, optimize, read_checkpoint
    from .vtkio import write_solid_vtk

    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    model = build_model(
        cfg, dof_removal=False if args.no_dof_removal else None
    )
    design0 = _initial_design(cfg, model)
    resume_state = read_checkpoint(args.resume) if args.resume else None
    options = OptimizerOptions(
        tolerance=cfg.tolerance,
        max_iterations=cfg.max_iterations,
        checkpoint_every=cfg.checkpoint_every,
    )
    options.mma.move_limit = cfg.move_limit
    options.mma.asy_init = cfg.mma_asy_init
    options.mma.asy_incr = cfg.mma_asy_incr
    options.mma.asy_decr = cfg.mma_asy_decr
    options.mma.asy_min = cfg.mma_asy_min
    options.mma.asy_max = cfg.mma_asy_max
    options.mma.albefa = cfg.mma_albefa
    options.mma.raa0 = cfg.mma_raa0

    result = optimize(model, design0, options, out_dir=out, resume_state=resume_state)

    final = model.evaluate(result.design, with_gradients=False)
    write_solid_vtk(
        os.path.join(out, "final.vtk"),
        model.solid,
        cell_data={"density": final.element_density},
        point_data={"displacement": final.solution.U.reshape(-1, 3)},
    )
    if result.history_rows:
        report.history_figure(result.history_rows, os.path.join(out, "history.png"))
    print(
        f"optimize: {result.status} after {result.iterations} iteration(s); "
        f"C = {result.compliance:.6g}, V = {result.volume:.6f} -> {out}"
    )
    return EXIT_OK if result.status == "tolerance" else EXIT_MAX_ITERATIONS


def cmd_check_gradients(args):
    from .components import ComponentSet
    from .optimizer import read_design
    from .sensitivity import fd_check, fd_report_csv

    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    model = build_model(cfg)
    design = _initial_design(cfg, model)
    if args.design:
        space = model.design_space(design.counts)
        design = ComponentSet.from_flat(
            read_design(args.design) * space.scales, design.counts
        )
    indices = None
    if args.indices:
        indices = [int(i) for i in args.indices.split(",") if i]
    records = fd_check(model, design, indices=indices, step=args.step)
    fd_report_csv(records, os.path.join(out, "gradient_check.csv"))
    flagged = sum(r.flagged for r in records)
    print(
        f"check-gradients: {len(records)} entries, {flagged} flagged -> "
        f"{os.path.join(out, 'gradient_check.csv')}"
    )
    return EXIT_OK if flagged == 0 else EXIT_ERROR


def cmd_export(args):
    from .components import ComponentSet
    from .optimizer import read_design
    from .vtkio import write_solid_vtk

    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    model = build_model(cfg)
    design = _initial_design(cfg, model)
    if args.design:
        space = model.design_space(design.counts)
        design = ComponentSet.from_flat(
            read_design(args.design) * space.scales, design.counts
        )
    path = os.path.join(out, "export.vtk")
    if args.solve:
        res = model.evaluate(design, with_gradients=False)
        write_solid_vtk(
            path,
            model.solid,
            cell_data={"density": res.element_density},
            point_data={"displacement": res.solution.U.reshape(-1, 3)},
        )
    else:
        cache = model.assembler.evaluate(design)
        _, elem_rho = model.densities(cache)
        write_solid_vtk(path, model.solid, cell_data={"density": elem_rho})
    print(f"export -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shellmmc",
        description=(
            "Explicit topology / rib / sandwich optimization of thin-walled "
            "structures with embedded moving morphable components"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--output", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=None, help="worker thread count")

    p = sub.add_parser("parameterize", help="build the conformal atlas")
    common(p)
    p.set_defaults(func=cmd_parameterize)

    p = sub.add_parser("layout", help="place the initial component grid")
    common(p)
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("optimize", help="run the optimization loop")
    common(p)
    p.add_argument("--resume", default=None, help="checkpoint file to resume from")
    p.add_argument(
        "--no-dof-removal", action="store_true", help="always solve on the full mesh"
    )
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("check-gradients", help="finite-difference sensitivity check")
    common(p)
    p.add_argument("--design", default=None, help="design file (default: initial layout)")
    p.add_argument("--indices", default=None, help="comma-separated variable indices")
    p.add_argument("--step", type=float, default=None, help="FD step (absolute)")
    p.set_defaults(func=cmd_check_gradients)

    p = sub.add_parser("export", help="render a design to VTK")
    common(p)
    p.add_argument("--design", default=None, help="design file (default: initial layout)")
    p.add_argument("--solve", action="store_true", help="also solve and export displacements")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    _pin_threads(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ShellMmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
