"""Frontier efficiency toolkit for bank panels.

Measures bank efficiency two ways (slacks-based DEA with undesirable
outputs and super-efficiency; a translog stochastic profit frontier) and
relates the scores to market valuation through panel regressions with
cluster-robust inference. Ships a deterministic synthetic-panel generator
and a reproducible report pipeline.
"""

__version__ = "0.1.0"

from .errors import (
    BankfrontierError,
    CollinearityError,
    DataError,
    DimensionError,
    InputError,
    SchemaError,
)

__all__ = [
    "BankfrontierError",
    "CollinearityError",
    "DataError",
    "DimensionError",
    "InputError",
    "SchemaError",
    "__version__",
]
