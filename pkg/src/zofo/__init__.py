"""Zeroth-order feedback optimization of dynamical plants.

Simulates a stable discrete-time plant, steers its steady state with
gradient-free controllers driven by output measurements, and checks the
resulting iterates against explicit convergence bounds.
"""

from .controllers import (
    ControllerConfig,
    Method,
    controller_update,
    n_updates_for_budget,
    run_closed_loop,
)
from .errors import (
    ConfigurationError,
    DegenerateObjectiveError,
    EmptySeriesError,
    ExperimentError,
    InvalidComparisonError,
    InvalidParameterError,
    ModelInvalidError,
    ZofoError,
)
from .estimators import (
    draw_perturbation,
    estimator_error,
    feedback_two_point_estimate,
    one_point_residual_estimate,
    two_point_oracle,
)
from .experiments import (
    AggregateResult,
    ExperimentConfig,
    emit_plot,
    export_csv,
    import_csv,
    run_comparison,
    sweep,
)
from .metrics import MetricSeries
from .objective import (
    QuadraticObjective,
    ReducedObjective,
    analytic_minimizer,
    derived_constants,
    gaussian_smoothed_value,
    grad_tilde_phi,
    random_objective,
    tilde_phi,
)
from .plant import (
    PlantModel,
    PlantState,
    generate_random_plant,
    initial_state,
    steady_state_output,
    steady_state_state,
    step,
)
from .theory import (
    SelectedParameters,
    TheoryConstants,
    select_parameters,
    theorem1_bound,
    theorem1_terms,
)

__version__ = "0.1.0"
