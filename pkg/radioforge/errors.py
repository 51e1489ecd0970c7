# radioforge/errors.py
"""Exception hierarchy for radioforge."""

from typing import Optional


class RadioforgeError(Exception):
    """Base class for every error raised by radioforge."""


class ConfigError(RadioforgeError, ValueError):
    """Configuration could not be parsed or failed validation.

    ``key`` holds the dotted name of the offending entry when one is known.
    """

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class SourceError(RadioforgeError, ValueError):
    """Message source could not be produced (bad WAV, bad tone list)."""


class ModulationError(RadioforgeError, ValueError):
    """Modulator input or parameters are inconsistent."""


class ImpairmentError(RadioforgeError, ValueError):
    """Impairment parameters are invalid."""


class ChannelError(RadioforgeError, ValueError):
    """Channel realization cannot be generated or applied."""


class OsmParseError(RadioforgeError, ValueError):
    """OSM XML is malformed."""


class ScheduleError(RadioforgeError, RuntimeError):
    """No valid time/frequency placement was found within the retry budget."""


class AnnotationError(RadioforgeError, ValueError):
    """Spectrogram or bounding-box mapping failed."""


class ArchiveError(RadioforgeError, OSError):
    """Reading or writing dataset files failed."""

    def __init__(self, message: str, frame_index: Optional[int] = None):
        super().__init__(message)
        self.frame_index = frame_index


class FrameGenerationError(RadioforgeError, RuntimeError):
    """A pipeline stage failed while synthesizing one frame."""

    def __init__(self, frame_index: int, stage: str, cause: BaseException):
        super().__init__(f"Frame {frame_index} failed in stage '{stage}': {cause}")
        self.frame_index = frame_index
        self.stage = stage
        self.cause = cause
