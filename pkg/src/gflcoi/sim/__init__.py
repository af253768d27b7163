"""Time-domain simulation of the study system under load steps."""
from .core import (DIVERGENCE_PU, Disturbance, ScenarioResult, SimConfig, SimulationError,
                   collect, integrate)
from .models import (continuous_angle, coi_setup, internal_emf_series,
                     simulate_coi, simulate_multi_generator, simulate_nonlinear_reference,
                     simulate_rotor_motion_baseline, simulate_sfr_baseline)
from .system import (EQ_TOL, Equilibrium, EquilibriumError, StudySystem, solve_equilibrium,
                     system_equilibrium)

VARIANTS = {
    "multi": simulate_multi_generator,
    "proposed": simulate_coi,
    "reference": simulate_nonlinear_reference,
    "sfr": simulate_sfr_baseline,
    "rotor": simulate_rotor_motion_baseline,
}
