"""Exception hierarchy shared across the toolkit."""


class PartsightError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(PartsightError):
    """Invalid configuration or unusable inputs (empty library, bad ranges)."""


class PlacementError(PartsightError):
    """A paste target does not fit inside the canvas."""


class DegenerateMaskError(PartsightError):
    """A mask transform produced an empty or sub-pixel result."""


class RegistryError(PartsightError):
    """Unknown name looked up in an extensible registry."""


class ProviderError(PartsightError):
    """A detector / depth / embedding provider failed."""


class KnowledgeError(PartsightError):
    """Knowledge base construction or retrieval failure."""


class SessionStateError(PartsightError):
    """An operation was attempted in an illegal session state."""


class SessionNotFoundError(PartsightError):
    """Unknown session id."""


class InputError(PartsightError):
    """Unreadable or malformed input files."""
