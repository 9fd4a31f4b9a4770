"""Numerical lab for the three-wave resonant interaction system."""
from .core import (
    SAME_SIGN,
    ComplexTriple,
    CouplingSignature,
    InvariantSet,
    PolarTriple,
    VelocitySet,
    invariants,
    rhs_uniform,
    total_phase,
)
from .ode import Termination, Trajectory, Verdict, classify, estimate_blowup_time, integrate
from .pde import FieldTrajectory, PeriodicDomain, TriadField, run_pde, step_strang
from .scenarios import ScenarioConfig, generate, load_config, parse_config

__all__ = [
    "SAME_SIGN", "ComplexTriple", "CouplingSignature", "InvariantSet", "PolarTriple", "VelocitySet",
    "invariants", "rhs_uniform", "total_phase",
    "Termination", "Trajectory", "Verdict", "classify", "estimate_blowup_time", "integrate",
    "FieldTrajectory", "PeriodicDomain", "TriadField", "run_pde", "step_strang",
    "ScenarioConfig", "generate", "load_config", "parse_config",
]
