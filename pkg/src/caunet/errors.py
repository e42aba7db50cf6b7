"""Exception types shared across the package."""
from __future__ import annotations


class CAUNetError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "error"


class DimensionError(CAUNetError, ValueError):
    code = "dimension"


class ConfigurationError(CAUNetError, ValueError):
    code = "configuration"


class ContractError(CAUNetError, ValueError):
    code = "contract"


class ParameterError(CAUNetError, ValueError):
    code = "parameter"


class DecodeError(CAUNetError, OSError):
    code = "decode"

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path

    def __str__(self) -> str:
        return self.args[0]


class DivergenceError(CAUNetError, RuntimeError):
    code = "divergence"
