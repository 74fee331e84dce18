from typing import Any, Dict

EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


class DiagnosticsError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = EXIT_INPUT
    kind = "diagnostics"

    def to_dict(self) -> Dict[str, Any]:
        return {"error": str(self), "kind": self.kind, "exit_code": self.exit_code}


### INPUT ###
class IngestionError(DiagnosticsError):
    kind = "ingestion"

    def __init__(self, path: str, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number


class AlignmentError(DiagnosticsError):
    kind = "alignment"

    def __init__(self, left: str, left_count: int, right: str, right_count: int):
        super().__init__(
            f"line-count mismatch: {left} has {left_count} sentences, {right} has {right_count}"
        )
        self.left_count = left_count
        self.right_count = right_count


class PartitionError(DiagnosticsError):
    kind = "degenerate-partition"


class DatasetError(DiagnosticsError):
    kind = "dataset"


class TrainingError(DiagnosticsError):
    kind = "training"


class DegenerateTrainingError(TrainingError):
    kind = "degenerate-training"


class IncompatibleHistogramError(DiagnosticsError):
    kind = "incompatible-histogram"


class UndefinedMetricError(DiagnosticsError):
    kind = "undefined-metric"


### CONFIGURATION ###
class ConfigError(DiagnosticsError):
    exit_code = EXIT_CONFIG
    kind = "configuration"


class LexiconError(ConfigError):
    kind = "lexicon"


### NUMERICAL GUARDS ###
class NumericalGuardError(DiagnosticsError):
    exit_code = EXIT_NUMERICAL
    kind = "numerical-guard"


class EnumerationBudgetError(NumericalGuardError):
    kind = "enumeration-budget"


class NotTrainedError(NumericalGuardError):
    kind = "not-trained"
