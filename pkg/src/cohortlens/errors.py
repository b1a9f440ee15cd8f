"""Exception types shared across the pipeline."""


class CohortlensError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(CohortlensError):
    """Input file could not be read at the syntax level (bad JSON/CSV/timestamp)."""


class SchemaError(CohortlensError):
    """Input parsed but does not match the documented file schema."""


class ValidationError(CohortlensError):
    """Input is schema-valid but violates a semantic invariant."""


class ConfigError(CohortlensError):
    """Course configuration is missing, malformed, or inconsistent."""


class ContractError(CohortlensError):
    """A caller violated a documented precondition."""


class TrainingError(CohortlensError):
    """Model training cannot proceed (degenerate target, non-finite inputs)."""
