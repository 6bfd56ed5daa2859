"""Exception types shared across the package."""


class BoxmonError(Exception):
    """Base class for every error this package raises on purpose."""


class DimensionMismatchError(BoxmonError, ValueError):
    """Vector/box/monitor dimensions disagree."""


class InvalidIntervalError(BoxmonError, ValueError):
    """An interval was given with lower bound above its upper bound."""


class EmptyInputError(BoxmonError, ValueError):
    """An operation that needs at least one element received none."""


class EmptyClassError(EmptyInputError):
    """Every record of one or more classes was removed by filtering.

    ``class_keys`` names the offending classes; empty means the whole
    input set was filtered away.
    """

    def __init__(self, message: str, class_keys: tuple[str, ...] = ()):
        super().__init__(message)
        self.class_keys = class_keys


class SchemaError(BoxmonError, ValueError):
    """A file failed structural validation (magic, version, layout)."""


class InvariantViolationError(BoxmonError, ValueError):
    """Data parsed fine but violates a documented invariant."""


class ResourceLimitError(BoxmonError, RuntimeError):
    """A benchmark or build exceeded available memory or similar limits."""
