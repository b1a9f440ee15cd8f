"""cohortlens: session, forum-graph and outcome analytics for course logs."""

__version__ = "0.1.0"

from .errors import (
    CohortlensError,
    ConfigError,
    ContractError,
    ParseError,
    SchemaError,
    TrainingError,
    ValidationError,
)

__all__ = [
    "__version__",
    "CohortlensError",
    "ConfigError",
    "ContractError",
    "ParseError",
    "SchemaError",
    "TrainingError",
    "ValidationError",
]
