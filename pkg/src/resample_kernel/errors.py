from __future__ import annotations

from collections.abc import Sequence


class ResampleKernelError(Exception):
    """Base class for every error raised by this package. ``exit_code`` is what the CLI returns."""

    exit_code = 1


class ConfigError(ResampleKernelError, ValueError):
    exit_code = 1


class DataError(ResampleKernelError, ValueError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class InvalidDatasetError(DataError):
    pass


class CannotEvaluateError(DataError):
    pass


class ContractError(ResampleKernelError, ValueError):
    exit_code = 2


class NumericalError(ResampleKernelError, ArithmeticError):
    exit_code = 3


class DegenerateScaleError(NumericalError):
    pass


class DegenerateAffinityError(NumericalError):
    def __init__(self, indices: Sequence[int]) -> None:
        self.indices = [int(i) for i in indices]
        shown = ", ".join(str(i) for i in self.indices[:20])
        more = f" (+{len(self.indices) - 20} more)" if len(self.indices) > 20 else ""
        super().__init__(f"Zero-degree points under the affinity: {shown}{more}")


# Not an error class: sweeps finish, but the CLI reports partial failure with this code.
PARTIAL_FAILURE_EXIT_CODE = 4
