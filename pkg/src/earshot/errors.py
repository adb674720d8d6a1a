"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 1, ConfigError -> 2,
NumericalError -> 3.
"""


class EarshotError(Exception):
    """Base class for all toolkit errors."""


class DataError(EarshotError):
    """Unreadable, malformed, or contract-violating input data."""


class ConfigError(EarshotError):
    """Invalid configuration or command usage."""


class NumericalError(EarshotError):
    """Numerical failure: divergence, failed gradient check, degenerate values."""


class UnsupportedWavError(DataError):
    """WAV file uses an encoding outside PCM16 / IEEE float32."""


class SampleRateError(DataError):
    """Sample rate differs from the expected 22050 Hz and was not waived."""
