"""Capacities, error exponents and LM rates of the bottleneck channel."""

from .api import (ExponentQuery, ExponentResult, capacity_curve, capacity_ib,
                  dmc_reference_exponents, e_zero, exponent_no_binning,
                  exponent_random_coding, exponent_sphere_packing,
                  exponent_sphere_packing_conjectured, exponent_wak, lm_rate)
from .capacity import CapacityConfig
from .search import SearchConfig

__all__ = [
    "CapacityConfig", "ExponentQuery", "ExponentResult", "SearchConfig", "capacity_curve",
    "capacity_ib", "dmc_reference_exponents", "e_zero", "exponent_no_binning",
    "exponent_random_coding", "exponent_sphere_packing", "exponent_sphere_packing_conjectured",
    "exponent_wak", "lm_rate",
]
