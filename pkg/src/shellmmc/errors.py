"""Exception types raised across the package."""


class ShellMmcError(Exception):
    """Base class for all errors raised by shellmmc."""


class MeshError(ShellMmcError):
    """Invalid mesh data: parse failures, broken invariants, bad indices."""


class TopologyError(MeshError):
    """Surface topology unsuitable for the requested operation."""


class BijectivityError(ShellMmcError):
    """A computed map produced flipped (negatively oriented) triangles."""


class SolverError(ShellMmcError):
    """A linear solve failed or did not meet its residual contract."""


class ComponentGeometryError(ShellMmcError):
    """Component parameters produce a non-positive thickness profile."""


class FemError(ShellMmcError):
    """Finite element model is invalid (inverted elements, singular system)."""


class ConfigError(ShellMmcError):
    """Run configuration is malformed or inconsistent with the mesh."""
