"""Closed-form training and sampling dynamics of linear diffusion denoisers.

The package solves, in closed form, how linear / deep-linear /
convolutional denoisers evolve under full-batch gradient flow, what
distribution the probability-flow ODE generates at every training time,
and validates every closed form against independent brute-force oracles.
"""

__version__ = "0.1.0"

from .analysis import (
    EmergenceCriterion,
    GrayZone,
    InsufficientDataError,
    PowerLawFit,
    alignment_score,
    emergence_time,
    power_law_fit,
)
from .convolution import (
    CirculantDenoiser,
    FourierModeSet,
    PatchCovariance,
    circulant_matrix,
    dft_mode_variance,
    filter_to_gammas,
    full_width_gamma_trajectory,
    patch_covariance,
    patch_filter_trajectory,
)
from .dynamics import (
    DeepLinear,
    DiscreteGD,
    DynamicsConfig,
    LossVariant,
    ModeTrajectory,
    OneLayer,
    Residual,
    TwoLayerSymmetric,
    convergence_rate,
    deep_linear_mode,
    discrete_gd_trajectory,
    mean_cov_coupling,
    mean_coupled_trajectory,
    one_layer_bias,
    one_layer_psi,
    one_layer_trajectory,
    optimal_mode_weight,
    residual_reparam_trajectory,
    two_layer_overlap_simulation,
    two_layer_psi,
    two_layer_trajectory,
)
from .flow_matching import (
    FlowConfig,
    fm_generated_variance_ratio,
    fm_one_layer_weight,
    fm_sampling_converged,
    fm_two_layer_weight,
)
from .gaussian import (
    CovarianceModel,
    DataMoments,
    SpectrumSpec,
    empirical_moments,
    make_covariance,
    project_variances,
    read_samples,
    sample_gaussian,
)
from .metrics import ModeKL, denoiser_error, kl_shared_basis, score_error, training_loss
from .oracle import (
    OdeSolveConfig,
    dense_dft_diag,
    discrete_gd_full,
    gradient_flow_full,
    heun_affine_dense,
    mc_dsm_loss,
)
from .sampler import (
    GeneratedDistribution,
    NoiseSchedule,
    PhiFactor,
    generated_variance,
    mean_transport,
    pf_mode_scaling,
    pf_ode_numeric,
    phi_one_layer,
    phi_two_layer,
    sample_generated,
)
from .special import ToleranceConfig, erf, expint_ei
