"""Exception types shared across the package.

The CLI maps these onto process exit codes, so the hierarchy mirrors the
failure classes a pipeline run can hit: unreadable or malformed files,
volumes that cannot be segmented, bad configuration, and empty geometry.
"""


class SkinSegError(Exception):
    """Base class for all package-specific errors."""


class VolumeFormatError(SkinSegError):
    """A volume file is missing, truncated, or structurally invalid."""


class MeshFormatError(SkinSegError):
    """A mesh file cannot be parsed or violates its format contract."""


class DegenerateVolumeError(SkinSegError):
    """The volume admits no meaningful segmentation (e.g. constant intensity)."""


class ConfigError(SkinSegError, ValueError):
    """A parameter value is outside its documented domain."""


class EmptyMeshError(SkinSegError):
    """An operation that needs geometry received an empty mesh or point set."""


class NoBackgroundSeedError(SkinSegError):
    """No candidate seed pixel on a slice lies below the isovalue."""
