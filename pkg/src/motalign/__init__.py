"""Motion-aware contrastive fine-tuning of a text encoder, at toy scale."""

from .errors import (
    ConfigError,
    ContractError,
    CorruptionError,
    DegenerateInputError,
    DimensionError,
    FormatError,
    MotalignError,
    NotPSDError,
    NumericalError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "CorruptionError",
    "DegenerateInputError",
    "DimensionError",
    "FormatError",
    "MotalignError",
    "NotPSDError",
    "NumericalError",
]
