"""Conserved-quantity discovery, bracket verification and intrinsic-coordinate control.

Typical use::

    from koopinv import rigid_body, integrate_ensemble, sample_momentum_shell
    from koopinv import build_dictionary, discover_invariants

    data = integrate_ensemble(rigid_body(), sample_momentum_shell(114))
    result = discover_invariants(build_dictionary(3, 3), data)
"""

__version__ = "0.1.0"

from .actuation import ControlMatrixEstimate, estimate_B, kron_row
from .bracket import (
    BracketKind,
    basis_partial,
    bracket_eval,
    bracket_series,
    build_D_matrix,
    discover_via_bracket,
    involution_check,
    recover_vector_field,
)
from .config import ExperimentConfig
from .control import (
    ClosedLoopResult,
    ControlModel,
    MpcConfig,
    conserved_coordinates,
    control_gain_map,
    mpc_step,
    run_closed_loop,
    run_closed_loop_ensemble,
)
from .discovery import (
    DiscoveryResult,
    InvariantSubspace,
    build_generator_matrix,
    discover_invariants,
    eigenfunction_residual,
    largest_principal_angle,
    null_space,
    sparsify,
)
from .errors import (
    ConditioningWarning,
    ConvergenceWarning,
    DegenerateDataError,
    DivergenceError,
    InvalidArgumentError,
    KoopinvError,
    UncontrollableWarning,
    UnidentifiableError,
    UnsupportedError,
)
from .features import (
    CoefficientVector,
    Dictionary,
    build_dictionary,
    differentiate_trajectory,
    eval_gamma,
    eval_gradients,
    eval_theta,
    grad_theta_at,
)
from .kernels import BACKEND
from .systems import (
    ForcingSignal,
    SystemSpec,
    TrajectoryDataset,
    angular_momentum,
    integrate,
    integrate_ensemble,
    kinetic_energy,
    linear_decay,
    paper_forcing,
    rigid_body,
    rigid_body_rhs,
    sample_momentum_shell,
    sample_momentum_sphere,
    zero_forcing,
)
