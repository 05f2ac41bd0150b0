"""Replica-symmetric analysis of regular LDPC ensembles over memoryless and
Markov channels: closed-form dicode-erasure solvers, population-dynamics
density evolution, and a finite-N joint BP simulator."""

__version__ = "0.1.0"

from .channels import (
    ChannelClass,
    FrozenWitness,
    MarkovChannelSpec,
    MemorylessChannelSpec,
    channel_spec_hash,
    check_irreducible_q0,
    classify,
    embed_memoryless,
    frozen_solution_exists,
    is_generalized_erasure,
    load_channel_spec,
    make_bec,
    make_bsc,
    make_dec,
    make_gilbert_elliott,
    make_z_channel,
    save_channel_spec,
    stationary_left_message,
)
from .dec import (
    DecFixedPoint,
    EntropyPoint,
    SolverConfig,
    dec_bp_threshold,
    dec_conditional_entropy,
    dec_entropy_curve,
    dec_forward_de,
    dec_map_threshold,
    dec_map_threshold_info,
    dec_trivial_fixed_point,
    shannon_threshold_rate_half,
)
from .ensemble import (
    BernoulliMessagePair,
    Ensemble,
    RateMaximizerReport,
    new_ensemble,
    rate_functional,
    verify_rate_maximizer,
)
from .errors import ConfigurationError, ConvergenceError, ValidationError
from .graphs import (
    TannerGraph,
    encode_random_codeword,
    parity_check_rank,
    parity_ok,
    sample_tanner_graph,
)
from .markov_population import (
    MarkovPopulations,
    channel_log_likelihood_rate,
    estimate_dec_erasure_fixed_point,
    init_markov_populations,
    psi_g_const_fraction,
    rs_entropy_markov,
    run_markov_population_dynamics,
    update_markov_check,
    update_markov_var,
    update_psi,
    update_psi_hat,
)
from .population import (
    DePopulations,
    EntropyEstimate,
    init_populations,
    rs_entropy_memoryless,
    run_population_dynamics,
    uniform_fraction,
    update_check_population,
    update_var_population,
)
from .simulator import (
    DecoderState,
    SimStats,
    empirical_threshold,
    joint_bp_decode,
    simulate_channel,
    simulate_rate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
