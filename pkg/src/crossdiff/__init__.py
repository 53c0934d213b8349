"""crossdiff: structure analysis and simulation of cross-diffusion population systems."""

__version__ = "0.1.0"

from .balance import (  # noqa: F401
    BalanceCertificate,
    InvariantMeasure,
    TransitionGraph,
    check_conditions,
    communicating_classes,
    invariant_measure,
    symmetry_check,
    working_weights,
)
from .entropy import (  # noqa: F401
    EntropyParams,
    InverseTransformError,
    entropy_density,
    entropy_total,
    entropy_variable,
    hessian,
    inverse_transform,
)
from .experiments import (  # noqa: F401
    CounterexampleConfig,
    counterexample_initial_data,
    counterexample_production_bound,
    counterexample_production_reference,
    counterexample_system,
    entropy_production,
    regime_sweep,
)
from .mobility import (  # noqa: F401
    BOUND_IDS,
    MobilityBounds,
    QuadraticFormWitness,
    approx_matrix,
    certify_lower_bound,
    diffusion_matrix,
    dissipation_bound,
    structural_constants,
)
from .model import (  # noqa: F401
    CoefficientSystem,
    ConfigError,
    DomainConfig,
    InitialData,
    RunConfig,
    cutoff,
    cutoff_initial_data,
    parse_config,
    reaction,
    validate_system,
)
from .solver import (  # noqa: F401
    DiagnosticsSeries,
    GridState,
    NewtonError,
    SolverConfig,
    StepReport,
    assemble_residual,
    newton_step,
    simulate,
    weak_residual,
)
