"""Exception hierarchy shared by every stage of the pipeline."""


class CoughScreenError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "error"

    def to_record(self):
        return {"error": self.code, "message": str(self)}


class InvalidLength(CoughScreenError, ValueError):
    code = "invalid_length"


class EmptyInput(CoughScreenError, ValueError):
    code = "empty_input"


class InvalidFrequency(CoughScreenError, ValueError):
    code = "invalid_frequency"


class TooShort(CoughScreenError, ValueError):
    code = "too_short"


class ParseError(CoughScreenError, ValueError):
    code = "parse_error"

    def __init__(self, offset, reason):
        super().__init__(f"offset {offset}: {reason}")
        self.offset = offset
        self.reason = reason

    def to_record(self):
        return {"error": self.code, "offset": self.offset, "message": self.reason}


class UnsupportedFormat(CoughScreenError, ValueError):
    code = "unsupported_format"


class ManifestError(CoughScreenError, ValueError):
    code = "manifest_error"

    def __init__(self, line, reason, path=None):
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {reason}")
        self.line = line
        self.path = path
        self.reason = reason

    def to_record(self):
        return {"error": self.code, "file": self.path, "line": self.line,
                "message": self.reason}


class ConfigError(ManifestError):
    code = "config_error"


class EmptyAfterTrim(CoughScreenError, ValueError):
    code = "empty_after_trim"


class InsufficientMinority(CoughScreenError, ValueError):
    code = "insufficient_minority"


class ShapeError(CoughScreenError, ValueError):
    code = "shape_error"


class DivergedError(CoughScreenError, ArithmeticError):
    code = "diverged"

    def __init__(self, epoch, loss=float("nan")):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class DegenerateLabels(CoughScreenError, ValueError):
    code = "degenerate_labels"


class InvalidPlan(CoughScreenError, ValueError):
    code = "invalid_plan"


class LeakageError(CoughScreenError, RuntimeError):
    code = "leakage"


class SearchFailed(CoughScreenError, RuntimeError):
    code = "search_failed"


class FormatVersionError(CoughScreenError, ValueError):
    code = "format_version"
