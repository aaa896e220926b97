"""Exception types shared across the planner."""


class RegraspError(Exception):
    """Base class for all errors raised by this package."""


class InputError(RegraspError):
    """Structurally invalid input: wrong shapes, lengths, or index ranges."""


class DegenerateGeometryError(RegraspError):
    """Geometry that cannot support the requested operation (flat, collinear,
    or collapsed to a point)."""


class NumericEvalError(RegraspError):
    """A numeric callback produced a non-finite value."""


class ConfigurationError(RegraspError):
    """Hand or planner configuration is missing required structure."""


class SceneLoadError(RegraspError):
    """A scene, hand, object, or plan document failed to parse or validate.

    The message carries a JSON-path style context, e.g.
    ``$.goal_contacts[2]: point is 0.0500 m off the object surface``.
    """
