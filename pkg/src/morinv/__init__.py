"""Combined state and parameter reduction of parametrized LTI control
systems, with MAP inversion on the reduced surrogate."""

from .inversion import (
    DataSet,
    InversionResult,
    map_full,
    map_reduced,
    reconstruct,
    reduce_prior,
    reduce_state_covariance,
    relative_output_error,
)
from .lti import (
    ControlSystem,
    Parametrization,
    SimulationUnstableError,
    TimeGrid,
    Trajectory,
    add_noise,
    full_parametrization,
    impulse_input,
    simulate,
    vec_inverse,
)
from .models import (
    FmriModel,
    HemodynamicParams,
    connectivity_prior,
    fmri_assemble,
    generic_prior,
    hemodynamic_forward,
    hemodynamic_prior,
    random_fmri_problem,
    random_stable_system,
)
from .optimize import (
    MemoryBudgetError,
    OptimizeOptions,
    OptimizeResult,
    fd_gradient,
    minimize,
)
from .priors import GaussianPrior, prior_seminorm
from .reduction import (
    ConfigurationError,
    ObjectiveContext,
    ProjectionPair,
    ReducedSystem,
    ReductionConfig,
    ReductionTrace,
    combined_reduce,
    misfit_descent_direction,
    objective,
    orthogonalize_insert,
    orthonormality_defect,
    output_misfit,
    project_system,
    select_mean,
    select_pod,
    select_pod_greedy,
    trust_lift,
)

__version__ = "0.1.0"
