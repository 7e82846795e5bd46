"""Exception types shared across heightlab."""


class HeightlabError(Exception):
    """Base class for library errors."""


class FormatError(HeightlabError, ValueError):
    """A file could not be parsed (bad magic, truncated payload, ...)."""


class DegenerateGeometryError(HeightlabError, ValueError):
    """A projection or resampling is geometrically undefined."""


class NumericalGuardError(HeightlabError, RuntimeError):
    """A numerical safety guard tripped (e.g. training divergence)."""
