"""Online AC optimal power flow by randomized coordinate descent on a lifted augmented Lagrangian."""

from importlib import resources

from .complexity import BoundInputs, Budget, FlopCounts, budget_for_error, flop_counts
from .errors import (
    CaseFormatError,
    DomainError,
    NumericalError,
    OPFError,
    UnboundedSubproblemError,
    ValidationError,
)
from .lifted import (
    BoxSet,
    Lagrangian,
    Metrics,
    ProblemInstance,
    build_box,
    coord_curvature,
    coord_gradient,
    eval_lagrangian,
    eval_metrics,
    initial_state,
    make_instance,
    residuals,
    state_layout,
)
from .network import (
    NetworkModel,
    build_admittance,
    build_constant_matrices,
    build_matrices,
    parse_case,
    synth_case,
    validate_network,
    write_case,
)
from .polynomial import cubic_roots, minimize_univariate
from .report import StepRecord, TrackingReport, emit_outputs, read_report
from .scenario import Scenario, SynthSpec, instance_at, load_scenario, save_scenario, synth_scenario
from .solver import (
    CoordinateDescent,
    SolverConfig,
    coord_update_exact,
    coord_update_prox,
    epoch,
    estimate_drift,
    estimate_lipschitz,
    pl_gap,
    solve_static,
    track,
)

__version__ = "0.1.0"


def bundled_case(name: str):
    """Path to a case shipped with the package (``two_bus`` or ``five_bus``)."""
    return resources.files(__name__) / "data" / f"{name}.json"
