"""phonongas: simulation and numerical verification of a 2-d kinetic model
of phonon transport whose rescaled position is diffusive under the anomalous
sqrt(n ln n) normalization."""

from .config import ExperimentConfig, load_config
from .model import (
    E1,
    E2,
    DIAGONAL,
    LIMIT_VARIANCE_RATE,
    DegenerateStateError,
    QuadratureGrid,
    WaveVector,
    clock_mean,
    component_weights,
    conditional_step_variance,
    coupling_matrix,
    finite_variance_rate,
    flip_polarization,
    get_grid,
    jump_density,
    lagged_step_variance,
    mean_displacement,
    mixing_matrix,
    multi_step_density,
    overshoot_mean,
    quadrature,
    scattering_rate,
    stationary_density,
    step_variance_weights,
    total_rate,
    truncated_moment,
    truncated_variance,
    velocity,
)
from .paths import (
    InsufficientTrajectoryError,
    SamplePath,
    Trajectory,
    TruncationPair,
    accumulate,
    path_sup,
    position_at,
    project,
    rescaled_path,
    truncation_split,
)
from .sampling import (
    Chain,
    ChainStep,
    InitialLaw,
    RandomStream,
    sample_initial,
    sample_jump,
    sample_sin2,
    simulate_chain,
    sin2_cdf,
    sin2_ppf,
)
from .runner import run_experiment
from .transport import (
    PhaseField,
    StabilityError,
    bump_field,
    collision_apply,
    constant_field,
    dense_generator_matrix,
    diffusion_limit_compare,
    dirichlet_form,
    evolve_slice,
    invariant_mean,
    l2_norm_sq,
    lp_norm,
    polarization_odd_field,
    random_smooth_field,
    remove_mean,
    semigroup_norm_decay,
    weak_poincare_check,
)

__version__ = "0.1.0"
