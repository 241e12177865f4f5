"""Exception types shared across the toolkit."""


class ConfigurationError(Exception):
    """A config file, flag combination, or required setting is invalid."""


class MissingArtifactError(Exception):
    """A required trained artifact (checkpoint, codebook) is absent."""


class CodebookFormatError(ValueError):
    """A codebook file is malformed or has the wrong schema version."""
