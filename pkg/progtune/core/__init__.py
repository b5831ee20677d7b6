from .errors import (
    ConfigError,
    ContractError,
    DivergenceError,
    FormatError,
    FreezeViolationError,
    IndexOutOfRangeError,
    LengthError,
    OracleError,
    ProgtuneError,
    ShapeError,
    StateError,
    StorageError,
    UsageError,
)
from .gradcheck import GradCheckReport, grad_check
from .tensor import Node, Tape, Tensor, backward

__all__ = [
    "ConfigError",
    "ContractError",
    "DivergenceError",
    "FormatError",
    "FreezeViolationError",
    "GradCheckReport",
    "IndexOutOfRangeError",
    "LengthError",
    "Node",
    "OracleError",
    "ProgtuneError",
    "ShapeError",
    "StateError",
    "StorageError",
    "Tape",
    "Tensor",
    "UsageError",
    "backward",
    "grad_check",
]
