"""Exception types shared across the package.

Each carries a stable ``code`` used by the CLI when it reports failures as JSON.
"""


class SpikesatError(Exception):
    code = "E_DOMAIN"


class DomainError(SpikesatError, ValueError):
    """Non-finite or otherwise invalid numeric input."""

    code = "E_DOMAIN"


class ShapeError(SpikesatError, ValueError):
    code = "E_SHAPE"


class RangeError(SpikesatError, ValueError):
    code = "E_RANGE"


class FormatError(SpikesatError, ValueError):
    code = "E_FORMAT"


class ConfigError(SpikesatError, ValueError):
    code = "E_CONFIG"


class InputError(SpikesatError, ValueError):
    code = "E_INPUT"


class ConversionError(SpikesatError, ValueError):
    code = "E_CONVERSION"
