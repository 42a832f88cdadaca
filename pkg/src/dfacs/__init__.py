"""Data-driven modelling and capture control for a drag-free satellite."""

from .dynamics import (
    DisturbanceModel,
    SatelliteParams,
    make_rhs,
    omega_big,
    plant_derivative,
    rotation_orf_to_srf,
    skew,
)
from .integrators import IntegrationError, IntegratorConfig, integrate, integrate_fixed
from .states import (
    INPUT_BLOCKS,
    INPUT_DIM,
    INPUT_NAMES,
    STATE_BLOCKS,
    STATE_DIM,
    STATE_NAMES,
    ControlInput,
    PlantState,
)

__version__ = "0.1.0"
