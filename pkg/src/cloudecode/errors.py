"""Exception types shared across the package."""


class CloudDecodeError(Exception):
    """Base class for all package errors."""


class ConfigError(CloudDecodeError, ValueError):
    """Invalid configuration, font, or alphabet."""


class DecodeError(CloudDecodeError):
    """Malformed or unusable input image."""


class LayoutError(CloudDecodeError):
    """A word could not be placed by the cloud synthesizer."""

    def __init__(self, word: str, message: str | None = None):
        self.word = word
        super().__init__(message or f"cannot place word {word!r} within the image bounds")
