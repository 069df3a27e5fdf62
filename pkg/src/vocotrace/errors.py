"""Exception hierarchy shared by every stage of the pipeline."""


class VocotraceError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VocotraceError, ValueError):
    """Invalid parameters, configuration files or preconditions."""


class FormatError(VocotraceError):
    """A file does not follow the expected container layout."""


class UnsupportedFormatError(FormatError):
    """Well-formed file using a variant we do not read (channels, bit depth)."""


class EmptyAudioError(VocotraceError, ValueError):
    """Audio with zero samples where at least one is required."""


class TooShortError(VocotraceError, ValueError):
    """Input shorter than one analysis window."""


class SilentInputError(VocotraceError, ValueError):
    """Zero-power signal where a signal level is required (e.g. to set an SNR)."""


class LabelError(VocotraceError, ValueError):
    """Labels outside the declared class set, or malformed one-hot targets."""


class ShapeError(VocotraceError, ValueError):
    """Tensor or feature shape does not match what an operation expects."""


class TrainingError(VocotraceError, RuntimeError):
    """Optimisation diverged or could not proceed."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")
        self.epoch = epoch


class StageError(VocotraceError, RuntimeError):
    """A stage of an experiment run failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
