"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario or cell configuration."""


class NoCellFound(RuntimeError):
    """Cell search found no correlation peak above threshold."""


class DecodeFailed(RuntimeError):
    """PBCH decoding failed the CRC for every hypothesis."""
