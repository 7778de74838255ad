"""Error types shared across the library."""


class SpecError(ValueError):
    """A contraction spec string is malformed or inconsistent with its operands."""


class ShapeError(ValueError):
    """Operand shapes disagree with each other or with the requested operation."""


class ConfigError(ValueError):
    """A layer/geometry configuration is invalid."""


class NonFiniteError(ArithmeticError):
    """A forward evaluation produced NaN or infinity where a finite value is required."""
