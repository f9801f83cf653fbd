"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a basis function."""


class ShapeMismatchError(ValueError):
    """Two tensors, or a tensor and a point set, disagree on order or dimension."""


class EmptySketchError(ValueError):
    """A sketch with zero ingested points cannot be standardized or queried."""


class SingularTransformError(ArithmeticError):
    """The sampled factorized basis could not be mapped onto the standard basis."""


class InsufficientPointsError(ValueError):
    """Too few points for the requested tree depth."""
