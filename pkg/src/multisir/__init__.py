"""Multi-strain diffusive SIR: propagation predictions and front simulations."""

__version__ = "0.1.0"

from multisir.errors import (  # noqa: F401
    ConfigError,
    ContractError,
    DivergenceError,
    DomainTooSmallError,
    InsufficientDataError,
    IntegrityError,
    MultiSirError,
    NumericalError,
    ParameterError,
)
from multisir.kinetics import StrainParams, asymptotic_value, depleted_level, reaction, speed  # noqa: F401
from multisir.sequence import ModelSpec, PropagationOutcome, compute_sequence  # noqa: F401
