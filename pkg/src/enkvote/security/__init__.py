"""Attack-cost model and executable adversaries."""

from .attacks import REQUIRED, SCENARIOS, ScenarioReport, admin_key_sweep, attack_suite, exhaustive_hop_flips
from .costmodel import (
    CostModelReport,
    PhysicalParams,
    generic_gate_bound,
    ion_trap_bound,
    min_password_bits,
    planet_area_bounds,
)
from .guessing import (
    DiscreteLogOracle,
    GuessResult,
    Transcript,
    attack_password_guess,
    demo_group,
    record_transcript,
)

__all__ = [
    "REQUIRED", "SCENARIOS", "CostModelReport", "DiscreteLogOracle", "GuessResult", "PhysicalParams",
    "ScenarioReport", "Transcript", "admin_key_sweep", "attack_password_guess", "attack_suite", "demo_group",
    "exhaustive_hop_flips", "generic_gate_bound", "ion_trap_bound", "min_password_bits", "planet_area_bounds",
    "record_transcript",
]
