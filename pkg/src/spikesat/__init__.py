"""Spiking and dense implementations of satellite-communication workloads."""
from .errors import (ConfigError, ConversionError, DomainError, FormatError, InputError, RangeError,
                     ShapeError, SpikesatError)

__version__ = "0.1.0"

__all__ = ["ConfigError", "ConversionError", "DomainError", "FormatError", "InputError", "RangeError",
           "ShapeError", "SpikesatError", "__version__"]
