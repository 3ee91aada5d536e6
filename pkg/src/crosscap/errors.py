"""Exception types shared across the package."""


class CrosscapError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CrosscapError):
    """Shapes of the operands do not line up; the message names both shapes."""


class ContractError(CrosscapError):
    """A caller violated an operation's precondition."""


class NumericError(CrosscapError):
    """A NaN or Inf appeared mid-computation; the message names the node."""


class DatasetParseError(CrosscapError):
    """A dataset or vocabulary file is malformed; the message names the line."""


class DatasetSchemaError(CrosscapError):
    """A dataset record parses but violates the schema (range, count, order)."""


class ConfigError(CrosscapError):
    """A run configuration is invalid (unknown key, bad value, bad pairing)."""
