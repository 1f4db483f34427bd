"""Exception types raised across the package."""


class OutOfDomainError(ValueError):
    """A coordinate lies outside the closed unit cube."""


class DuplicateLandmarkError(ValueError):
    """Two landmarks snap to the same grid node."""


class DegenerateElementError(ValueError):
    """A source tetrahedron has (numerically) zero volume."""


class InvalidWeightFieldError(ValueError):
    """A per-tetrahedron matrix field has a non-positive determinant where
    a positive one is required."""


class NotOrientationPreservingError(ValueError):
    """A 2x2 Jacobian with non-positive determinant was passed where an
    orientation-preserving one is required."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class LandmarkParseError(ValueError):
    """A landmark CSV line could not be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class IllPosedError(ValueError):
    """A dense fitting system is singular (for example coincident landmarks)."""
