"""Exception hierarchy shared by every subsystem."""


class FrameSDEError(Exception):
    """Base class for all package errors."""


class PointOutsideChart(FrameSDEError):
    """Chart coordinates fall on or outside the unit ball."""


class NotInOverlap(FrameSDEError):
    """A transition image lands outside the target chart ball."""


class DegeneratePlane(FrameSDEError):
    """Two tangent vectors do not span a 2-plane."""


class FrameBlowup(FrameSDEError):
    """A frame column norm exceeded the 2K^2 guard."""


class LeftAtlas(FrameSDEError):
    """No chart of the atlas contains the point."""


class ConfigError(FrameSDEError):
    """Invalid run configuration."""
