"""Exception types shared across the package."""


class PolyprunerError(Exception):
    """Base class for all package errors."""


class CatalogMismatchError(PolyprunerError):
    """A plant references a type_id the catalog does not define."""


class InvalidInputError(PolyprunerError):
    """Input value or container violates a documented precondition."""


class InvalidScaleError(PolyprunerError):
    """px_per_cm produced a degenerate (zero-area) raster."""


class ShapeMismatchError(PolyprunerError):
    """Two grids that must share a shape do not."""


class OutOfBoundsError(PolyprunerError):
    """A position lies outside the bed or grid extent."""


class NoPrunePointError(PolyprunerError):
    """No prune-point candidate survived filtering for the target plant."""


class DegenerateGeometryError(PolyprunerError):
    """Geometric construction undefined (e.g. coincident points)."""


class NoTargetTissueError(PolyprunerError):
    """A cut was requested at a position with no plant tissue."""


class LocalizationFailed(PolyprunerError):
    """Template localization score fell below the acceptance floor."""

    def __init__(self, message: str, score: float = 0.0):
        super().__init__(message)
        self.score = score
