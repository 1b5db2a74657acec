# src/headmask/core/errors.py

"""
Error Hierarchy

Every failure the pipeline reports carries the exit code the CLI returns for it.
"""

from typing import Optional


class HeadmaskError(Exception):
    """Base class for all headmask errors."""

    exit_code = 1

    def __init__(self, message: str, stage: Optional[str] = None) -> None:
        super().__init__(message)
        self.message = message
        self.stage = stage


class ConfigError(HeadmaskError):
    """Invalid configuration or CLI usage."""

    exit_code = 1


class InputError(HeadmaskError):
    """Invalid model input (over-length source, out-of-vocabulary id)."""

    exit_code = 2


class ShapeError(InputError):
    """Operand shapes do not line up."""


class IngestionError(HeadmaskError):
    """Corpus file failed validation."""

    exit_code = 2

    def __init__(
        self,
        message: str,
        line_errors: Optional[list[tuple[int, str]]] = None,
        stage: Optional[str] = None,
    ) -> None:
        self.line_errors = line_errors or []
        if self.line_errors:
            details = "; ".join(f"line {n}: {why}" for n, why in self.line_errors[:20])
            if len(self.line_errors) > 20:
                details += f"; ... {len(self.line_errors) - 20} more"
            message = f"{message} ({details})"
        super().__init__(message, stage)


class TrainingError(HeadmaskError):
    """Training diverged or could not proceed."""

    exit_code = 3

    def __init__(
        self, message: str, epoch: int = 0, step: int = 0, stage: Optional[str] = None
    ) -> None:
        super().__init__(f"{message} (epoch {epoch}, step {step})", stage)
        self.epoch = epoch
        self.step = step


class AnalysisError(HeadmaskError):
    """Decoding or analysis failure."""

    exit_code = 4


class AllMaskedError(AnalysisError):
    """Every position of an attention row is masked out."""
