"""Analytical models, solvers, a TB array simulator and a netlist generator
for int8 GEMM accelerators on Versal (AIE + PL) and Stratix 10 NX."""

from .core import (
    CatalogError,
    ConstraintError,
    DeviceCatalog,
    GemmDims,
    GemmForgeError,
    InfeasibleError,
    StratixDevice,
    VersalDevice,
    load_device_catalog,
)

__version__ = "0.1.0"

__all__ = [
    "CatalogError",
    "ConstraintError",
    "DeviceCatalog",
    "GemmDims",
    "GemmForgeError",
    "InfeasibleError",
    "StratixDevice",
    "VersalDevice",
    "load_device_catalog",
]
