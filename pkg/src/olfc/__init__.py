"""Optimal load-frequency control on structure-preserving power networks."""
from .actuation import DroopCertificate, TurbineGovernor, droop_certificate, droop_interval
from .analysis import dissipation_check, linearized_spectrum, passivity_probe, reference_for, run_metrics
from .coordination import CommGraph, DestabilizationOverride
from .dispatch import (
    BenefitFunction,
    CostFunction,
    brute_force_dispatch,
    optimal_dispatch,
    social_welfare_dispatch,
)
from .grid import (
    BusParams,
    DisconnectedNetworkError,
    NetworkModel,
    NetworkTopology,
    SteadyStateError,
    solve_steady_state,
    synchronous_frequency,
)
from .integrate import integrate, rk4_step
from .scenario import ScenarioError, ScenarioWarning, certify, load_scenario, run
from .simulation import (
    ControllableLoad,
    ControllerSpec,
    GeneratorUnit,
    LoadSchedule,
    Scenario,
    Trajectory,
    initialize,
    simulate,
    step,
)

__version__ = "0.1.0"
