"""Exception types shared across the toolkit."""


class GraspGeoError(Exception):
    """Base class for all toolkit errors."""


class DegenerateProjectionError(GraspGeoError):
    """Point projects with homogeneous w at or below the safe epsilon."""


class GridMismatchError(GraspGeoError):
    """Two grids that must share dims/origin/cell_size do not."""


class DivergenceError(GraspGeoError):
    """Optimization produced a non-finite loss."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"loss became non-finite at iteration {iteration}")


class FormatError(GraspGeoError):
    """Malformed on-disk artifact; `offset` is the byte position of the defect."""

    def __init__(self, message: str, offset: int = 0):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class ConfigError(GraspGeoError):
    """Invalid run configuration (unknown key, bad value)."""
