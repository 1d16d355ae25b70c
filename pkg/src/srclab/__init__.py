"""Desk-scale laboratory for similarity-regulated contrastive learning.

Everything runs in float64 on CPU in seconds-to-minutes. The library has
three layers:

* exact layer: discrete joint distributions with closed-form mutual
  information and density ratios (``synth``, ``miverify``);
* estimation layer: contrastive losses with hand-written gradients and
  Monte Carlo bound checks against the exact layer (``losses``,
  ``miverify``);
* training layer: a synthetic two-modality world with injected false
  negatives, a frozen teacher, and a weight regulator that suppresses
  them (``synth``, ``regulator``, ``trainer``, ``evaluation``).

The ``cli`` module ties the layers into reproducible report runs; the
``config`` module gives every run a canonical, hashable description.
"""

__version__ = "0.1.0"

from .numerics import cosine_sim, grad_check, log_sum_exp, make_rng, softmax
from .synth import (
    DiscreteJoint,
    PairBatch,
    WorldSpec,
    distinct_concept_batch,
    gen_world,
    make_bsc_joint,
    make_deterministic_joint,
    make_uniform_mixing_joint,
    mixture_conditional,
    sample_batch_with_dependence,
)
from .losses import LossConfig, LossOutput, info_nce, srcl, srcl_symmetric
from .regulator import (
    AlphaSchedule,
    RegulatorConfig,
    TeacherHandle,
    WeightMatrix,
    alpha_at,
    blended_similarity,
    covariance_report,
    exp_similarity,
    max_row_mean_deviation,
    weight_similarity_covariance,
    weights_from_similarity,
)
from .miverify import (
    BoundReport,
    ControllabilityReport,
    DensityRatioOracle,
    JensenReport,
    PremiseReport,
    deterministic_equality_cell,
    exact_mi,
    jensen_gap,
    mixture_mi,
    ratio_premise,
    verify_basic_bound,
    verify_controllability,
    verify_general_bound,
)
from .trainer import (
    Encoder,
    HistoryRow,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    student_weights,
    train_student,
    train_teacher,
)
from .evaluation import (
    RetrievalReport,
    SweepPoint,
    WeightHistogram,
    recall_at_k,
    repeated_retrieval,
    retrieval_report,
    threshold_mask_sweep,
    weight_histogram,
)
from .config import (
    ConfigError,
    EvalConfig,
    ExperimentConfig,
    VerifyConfig,
    config_sha256,
    default_config,
    parse_config,
    write_config,
)

__all__ = [
    "__version__",
    "make_rng",
    "cosine_sim",
    "log_sum_exp",
    "softmax",
    "grad_check",
    "DiscreteJoint",
    "WorldSpec",
    "PairBatch",
    "make_bsc_joint",
    "make_deterministic_joint",
    "make_uniform_mixing_joint",
    "mixture_conditional",
    "sample_batch_with_dependence",
    "gen_world",
    "distinct_concept_batch",
    "LossConfig",
    "LossOutput",
    "info_nce",
    "srcl",
    "srcl_symmetric",
    "RegulatorConfig",
    "AlphaSchedule",
    "WeightMatrix",
    "TeacherHandle",
    "exp_similarity",
    "blended_similarity",
    "weights_from_similarity",
    "weight_similarity_covariance",
    "max_row_mean_deviation",
    "covariance_report",
    "alpha_at",
    "BoundReport",
    "PremiseReport",
    "JensenReport",
    "ControllabilityReport",
    "DensityRatioOracle",
    "exact_mi",
    "mixture_mi",
    "ratio_premise",
    "jensen_gap",
    "verify_basic_bound",
    "verify_general_bound",
    "deterministic_equality_cell",
    "verify_controllability",
    "Encoder",
    "TrainConfig",
    "TrainResult",
    "HistoryRow",
    "train_teacher",
    "train_student",
    "student_weights",
    "sgd_step",
    "save_checkpoint",
    "load_checkpoint",
    "RetrievalReport",
    "WeightHistogram",
    "SweepPoint",
    "recall_at_k",
    "retrieval_report",
    "repeated_retrieval",
    "threshold_mask_sweep",
    "weight_histogram",
    "ConfigError",
    "ExperimentConfig",
    "VerifyConfig",
    "EvalConfig",
    "parse_config",
    "write_config",
    "config_sha256",
    "default_config",
]
