"""Training and sampling of restricted Boltzmann machines with persistent Gibbs
chains, parallel tempering, coupled adaptive simulated tempering and deep
tempering (cross-model swaps within a jointly trained stack of RBMs)."""

from .rbm import (
    DimensionError,
    EnumerationCapError,
    RbmParams,
    cond_h_given_v,
    cond_v_given_h,
    energy,
    exact_log_prob_v,
    exact_log_z,
    exact_marginal_v,
    free_energy_h,
    free_energy_v,
    gibbs_step,
)
from .samplers import (
    CastEnsemble,
    ChainBank,
    DeepEnsemble,
    SwapStats,
    TemperedEnsemble,
    cast_step,
    dt_neg_swaps,
    dt_swap_log_ratio,
    pt_step,
    pt_swap_log_ratio,
    sml_step,
)

from .training import (
    CheckpointVersionError,
    PretrainConfig,
    TrainConfig,
    Trainer,
    dt_learn_step,
    greedy_pretrain,
    modes_data_fn,
    sml_grad,
    up_pass,
)
from .dataset import ModesSpec, exact_log_density, make_spec, read_set, sample, write_set
from .evaluation import dbn_lower_bound, exact_test_ll, swap_report

__version__ = "0.1.0"
