class ShapeError(ValueError):
    """Operand dimensions do not satisfy an operation's contract."""


class FormatError(ValueError):
    """A file on disk is malformed (bad magic, truncated payload, bad record)."""


class ConfigError(ValueError):
    """A run configuration value is invalid."""
