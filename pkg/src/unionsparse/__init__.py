"""Sparse recovery for signals lying in a union of subspaces.

The toolkit covers the recovery programs (latent group lasso via coefficient
replication and accelerated proximal gradient), the closed-form measurement
bounds, atomic-norm geometry, Haar parent-child tree grouping, and the
Monte-Carlo harnesses that verify the bounds empirically.
"""

from .atoms import (
    AtomicDecomposition,
    NormalConePoint,
    atomic_norm,
    dist_to_normal_cone,
    dual_norm,
    sample_atoms,
)
from .bounds import (
    BoundReport,
    bound_report,
    lasso_bound,
    noisy_bound,
    perpendicular_bound,
    theorem1_bound,
    theorem2_bound,
    theorem2_upper,
)
from .experiments import (
    PhaseDiagram,
    ScenarioSpec,
    WidthEstimate,
    estimate_width_ub,
    generate_signal,
    run_noise_sweep,
    run_phase,
    verify_ball_bound,
    verify_chisq_max,
    verify_projection_energy,
)
from .solver import (
    MeasurementEnsemble,
    RecoveryResult,
    SolverConfig,
    group_prox,
    lambda_max,
    recover,
    replicate,
    solve_lasso,
    solve_penalized,
)
from .subspaces import (
    GroupStructure,
    SparseSignal,
    SubspaceModel,
    SupportSet,
    condition_number,
    from_groups,
    is_perpendicular,
    load_model,
    orthonormalize,
    random_perpendicular_model,
    save_model,
    sigma_min,
    two_line_model,
)
from .wavelets import (
    WaveletLayout,
    blocks_signal,
    haar_analyze,
    haar_analyze_2d,
    haar_synthesize,
    haar_synthesize_2d,
    measure_group_sparsity,
    parent_child_groups_1d,
    parent_child_groups_2d,
    piecewise_constant_signal,
    recover_in_wavelet_domain,
    tree_recovery_structure,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
