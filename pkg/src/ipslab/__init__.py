"""Simulation and verification tools for neighbor-dependent substitution
processes with a cut-and-paste mechanism on a ring."""

from .core import (
    ORDERS,
    CoupledConfig,
    Nucleotide,
    Order,
    RingConfig,
    apply_sigma,
    config_leq,
    get_order,
    rank,
)
from .rates import (
    CutPasteKernel,
    GenericRateModel,
    RnYprParams,
    as_generic,
    derived_constants,
    specialize_jc,
    specialize_rnc,
    specialize_t92,
    substitution_rate,
)

__version__ = "0.1.0"

__all__ = [
    "ORDERS",
    "CoupledConfig",
    "Nucleotide",
    "Order",
    "RingConfig",
    "apply_sigma",
    "config_leq",
    "get_order",
    "rank",
    "CutPasteKernel",
    "GenericRateModel",
    "RnYprParams",
    "as_generic",
    "derived_constants",
    "specialize_jc",
    "specialize_rnc",
    "specialize_t92",
    "substitution_rate",
]
