"""Exception hierarchy shared across the package."""


class QuadfitError(Exception):
    """Base class for all package errors."""


class MeshValidationError(QuadfitError):
    """A mesh violates structural invariants. Carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid mesh: " + "; ".join(self.violations))


class TopologyError(QuadfitError):
    """Connectivity is unusable (non-manifold edge, isolated vertex, ...)."""


class GeometryError(QuadfitError):
    """Degenerate geometry (zero-area triangle, zero-length edge, ...)."""


class ShapeMismatchError(QuadfitError):
    """Array shapes or lengths do not agree."""


class QueryError(QuadfitError):
    """A spatial query against an empty or unusable set."""


class ConfigurationError(QuadfitError):
    """Missing or inconsistent configuration / required input data."""


class CorrespondenceError(QuadfitError):
    """Two meshes or curves cannot be put in correspondence."""


class DegenerateConstraintError(QuadfitError):
    """Boundary constraints do not determine the transform.

    ``deficient_directions`` holds the unit directions (rows) of the
    unresolved subspace.
    """

    def __init__(self, message, deficient_directions=None):
        super().__init__(message)
        self.deficient_directions = deficient_directions


class DivergenceError(QuadfitError):
    """Optimization produced a non-finite loss.

    Carries the stage name, the iteration index at which the loss became
    non-finite, and the last finite vertex state.
    """

    def __init__(self, stage, iteration, last_vertices):
        super().__init__(
            f"non-finite loss in stage '{stage}' at iteration {iteration}"
        )
        self.stage = stage
        self.iteration = iteration
        self.last_vertices = last_vertices


class ParseError(QuadfitError):
    """A mesh or config file failed to parse. Carries path and line."""

    def __init__(self, path, line_number, message):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = str(path)
        self.line_number = line_number


class ConfigError(QuadfitError):
    """Strict config parsing failure (unknown key, bad value)."""
