"""Exception types shared across the library."""


class HarmonikaError(Exception):
    """Base class for all library errors."""


class FormatError(HarmonikaError):
    """Malformed or truncated file contents."""


class UnsupportedFormatError(HarmonikaError):
    """Recognized container but unsupported encoding."""


class SizeError(HarmonikaError):
    """Input too short or shape-incompatible with the operation."""


class ConfigError(HarmonikaError):
    """Invalid or inconsistent configuration values."""


class NyquistError(ConfigError):
    """A requested analysis band extends past half the sampling rate."""


class NoOverlapError(HarmonikaError):
    """Two contours share no co-voiced frames; the metric is undefined."""
