"""
Exception hierarchy for gsdual.

Library modules raise these; only the CLI converts them into exit codes
(see constants.ExitCode and cli.exit_code_for).

Families:
    ConfigError          - invalid scenario configuration (carries the field name)
    StageDependencyError - a stage ran before the artifacts it needs exist
    NumericalError       - shape problems, singular or indefinite matrices, solver failures
    InfeasibleError      - an SDP (or every point of a line search) is infeasible
    IllPosed             - I - K_s (B_T - B_0) is singular, K_new does not exist
    CertificationFailed  - synthesis and independent analysis disagree
    PerformanceViolation - a sampled closed loop violates quadratic performance
    StageError           - wraps any of the above with the pipeline stage label

stage_label(stage) is the context manager that applies the label.
"""

from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional


class GsdualError(Exception):
    """Root of all gsdual errors."""


class ConfigError(GsdualError):
    """Invalid configuration value; `field` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class StageDependencyError(GsdualError):
    """A prior-stage artifact is missing from the output directory."""


class NumericalError(GsdualError):
    """Base for linear-algebra and solver failures."""


class ShapeMismatch(NumericalError):
    pass


class DimensionMismatch(NumericalError):
    pass


class InvalidMatrix(NumericalError):
    pass


class NotPsd(NumericalError):
    pass


class SingularBlock(NumericalError):
    pass


class SingularMatrix(NumericalError):
    pass


class SingularInfo(NumericalError):
    pass


class DomainError(NumericalError):
    pass


class RankDeficient(NumericalError):
    """Regressors are not persistently exciting."""


class ZeroDisturbance(NumericalError):
    pass


class MissingVariable(NumericalError):
    pass


class NumericalFailure(NumericalError):
    """The backend returned no usable certificate."""

    def __init__(self, message: str, report: Optional[Any] = None):
        self.report = report
        super().__init__(message)


class InfeasibleError(GsdualError):
    pass


class Infeasible(InfeasibleError):
    def __init__(self, message: str, report: Optional[Any] = None):
        self.report = report
        super().__init__(message)


class AllInfeasible(InfeasibleError):
    """No point of the hyperparameter grid produced a feasible design."""

    def __init__(self, message: str, statuses: Optional[list] = None):
        self.statuses = statuses or []
        super().__init__(message)


class IllPosed(GsdualError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class CertificationFailed(GsdualError):
    pass


class PerformanceViolation(GsdualError):
    """Carries the offending (Delta_s, Delta_u, w) triple as a JSON-ready dict."""

    def __init__(self, message: str, triple: Optional[Dict[str, Any]] = None):
        self.triple = triple or {}
        super().__init__(message)


class StageError(GsdualError):
    """Error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: GsdualError):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@contextmanager
def stage_label(stage: str) -> Iterator[None]:
    """
    Wrap errors raised in the block as StageError(stage, cause).

    Errors that already carry a stage, and configuration or missing-artifact
    errors, pass through unchanged.
    """
    try:
        yield
    except (StageError, StageDependencyError, ConfigError):
        raise
    except GsdualError as exc:
        raise StageError(stage, exc) from exc
