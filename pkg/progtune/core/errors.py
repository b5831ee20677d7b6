from __future__ import annotations

from typing import Any, Dict, Optional


class ProgtuneError(Exception):
    """Base error carrying a stable code and structured details."""

    code: str = "PROGTUNE_ERROR"
    exit_code: int = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": {
                "code": self.code,
                "message": self.message,
                "details": self.details,
            }
        }


class ConfigError(ProgtuneError):
    code = "CONFIG_INVALID"


class ShapeError(ProgtuneError):
    code = "SHAPE_MISMATCH"


class IndexOutOfRangeError(ProgtuneError):
    code = "INDEX_OUT_OF_RANGE"


class LengthError(ProgtuneError):
    code = "SEQUENCE_TOO_LONG"


class ContractError(ProgtuneError):
    code = "CONTRACT_VIOLATION"


class StateError(ProgtuneError):
    code = "INVALID_STATE"


class OracleError(ProgtuneError):
    code = "ORACLE_NONDETERMINISTIC"


class FreezeViolationError(ProgtuneError):
    code = "FREEZE_VIOLATION"


class DivergenceError(ProgtuneError):
    code = "TRAINING_DIVERGED"


class FormatError(ProgtuneError):
    code = "CHECKPOINT_FORMAT"


class StorageError(ProgtuneError):
    code = "IO_ERROR"


class UsageError(ProgtuneError):
    code = "USAGE"
    exit_code = 2
