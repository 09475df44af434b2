"""
Exception hierarchy for the speech regularization toolkit

DataError subclasses map to CLI exit code 2, ConfigurationError to exit code 1.
"""
from typing import Optional


class SpeechRegError(Exception):
    """Base class for all toolkit errors"""


class ConfigurationError(SpeechRegError, ValueError):
    """Invalid parameters or configuration values"""


class DataError(SpeechRegError):
    """Input data could not be used"""


class AudioFormatError(DataError):
    """WAV file uses an encoding this toolkit does not read"""

    def __init__(self, message: str, codec_tag: Optional[int] = None):
        super().__init__(message)
        self.codec_tag = codec_tag


class AudioParseError(DataError):
    """WAV file is truncated or structurally invalid"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class SignalError(DataError):
    """Signal cannot be processed, e.g. SNR of a silent buffer"""


class FeatureError(DataError):
    """Feature extraction or normalization failed"""


class ManifestError(DataError):
    """Malformed manifest line"""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ArpaParseError(DataError):
    """Malformed ARPA language model file"""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CheckpointError(DataError):
    """Checkpoint file is unreadable or has the wrong version"""


class NumericalError(SpeechRegError):
    """Non-finite values encountered during optimization"""

    def __init__(self, message: str, parameter: Optional[str] = None):
        super().__init__(message)
        self.parameter = parameter


class InfeasibleAlignmentError(SpeechRegError):
    """Label sequence cannot be aligned to the given number of frames"""
