"""segflow: relaxation and monitored quantities for segregated harmonic pairs
on periodic cylinders."""

__version__ = "0.1.0"

from .grid import CylinderGrid, Field, StateK  # noqa: F401
from .almgren import (  # noqa: F401
    AlmgrenSeries,
    AlmgrenVariant,
    compute_series,
    sym_variant,
    unb_variant,
)
from .relax import FlowConfig, relax_to_equilibrium, rescale_solution  # noqa: F401
