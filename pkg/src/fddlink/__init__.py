"""FDD massive MIMO limited-feedback link simulator.

Channel geometry, per-path phase quantization, MSE-optimal downlink
reconstruction with feedback-bit allocation, robust multi-user precoding,
and seeded Monte Carlo experiment campaigns.
"""

from .allocation import (
    Allocation,
    AllocationProblem,
    allocate_bruteforce,
    allocate_greedy,
    allocate_uniform,
    eta,
    nmmse,
    nmmse_pl,
    theoretical_weighted_mse,
)
from .channel import (
    ArrayGeometry,
    ChannelPath,
    EstimationNoise,
    PathSet,
    array_response,
    dl_channel,
    draw_scene,
    draw_user_paths,
    path_loss,
    perturb_estimates,
    ul_channel,
)
from .config import ConfigError, ScenarioConfig, load_config
from .feedback import (
    FeedbackPlan,
    PhaseCodebook,
    QuantizedPhase,
    dft_codebook_feedback,
    feedback_error_bound,
    make_feedback_plan,
    quantize_phase,
)
from .harness import (
    ExperimentRecord,
    derive_trial_seed,
    emit_csv,
    run_delta_experiment,
    run_experiment,
    run_mse_experiment,
    run_se_experiment,
)
from .precoding import (
    GpipConfig,
    GpipError,
    GpipResult,
    PrecoderStack,
    PrecodingProblem,
    build_A_B,
    gamma,
    gpip_solve,
    stationarity_residual,
    sum_se_lower_bound,
    true_sum_se,
    wmmse_precoder,
    zf_precoder,
)
from .reconstruction import (
    ReconstructedChannel,
    asymptotic_delta_norm,
    error_covariance,
    outer_error_norm,
    outer_product_error,
    reconstruct_dft,
    reconstruct_mmse,
    reconstruct_no_feedback,
)

__version__ = "0.1.0"
