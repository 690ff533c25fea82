"""3D-1D coupled phase-field simulator for vascularized tumor growth.

A multispecies diffuse-interface tissue model (prolific/hypoxic/necrotic
tumor phases, nutrient, matrix-degrading enzymes, angiogenesis factor,
extracellular matrix) on a uniform 3D mesh, coupled to 1D flow and nutrient
transport on an embedded vessel graph through surface-concentrated
Starling/Kedem-Katchalsky exchange fluxes.
"""

from .config import ScenarioConfig, builtin_scenario, load_config
from .engine import Simulation, TimeLoopConfig, run_scenario
from .grid import CellField, FaceField, Grid3D
from .linalg import CsrMatrix, SolverConfig
from .network import NetworkGraph, VesselState
from .species import Parameters, TissueState

__version__ = "0.1.0"

__all__ = [
    "CellField",
    "CsrMatrix",
    "FaceField",
    "Grid3D",
    "NetworkGraph",
    "Parameters",
    "ScenarioConfig",
    "Simulation",
    "SolverConfig",
    "TimeLoopConfig",
    "TissueState",
    "VesselState",
    "builtin_scenario",
    "load_config",
    "run_scenario",
]
