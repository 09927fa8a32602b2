"""Explicit topology, rib-layout and sandwich optimization of thin-walled
structures with embedded moving morphable components on conformal charts."""

__version__ = "0.1.0"

_SUBMODULES = (
    "mesh",
    "conformal",
    "components",
    "embedding",
    "solidmesh",
    "fem",
    "sensitivity",
    "optimizer",
    "dofremoval",
    "pipeline",
    "fixtures",
    "vtkio",
    "report",
    "cli",
    "errors",
)


def __getattr__(name):
    # keep `import shellmmc` light so the CLI can pin thread env vars
    # before numpy loads
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
