"""Dynamic nighttime thermal reconstruction over an explicit Gaussian scene."""

__version__ = "0.1.0"
