"""Array-level reverse-mode automatic differentiation."""

from .tape import (Active, ActiveScalar, AdError, ContractError, DomainError, Tape,
                   record, vjp)
from . import ops

__all__ = ["Active", "ActiveScalar", "AdError", "ContractError", "DomainError", "Tape",
           "record", "vjp", "ops"]
