"""Concrete strategies: learners, attacks, defenses, watermarks, baselines."""
from .attack import AttackError, AttackOutput, HonestQuerySampler, TransferableAttacker, attack_sizes, transferable_attack
from .baselines import REGISTRY, baseline_suite, make_strategy, register
from .defense import (
    BoundaryBandAttacker,
    ConstantDetector,
    DefenseSession,
    HonestAttacker,
    LearnedFloodAttacker,
    OracleFloodAttacker,
    RejectronDefense,
    ReplayAttacker,
    defense_nash_wrapper,
    defense_vc,
)
from .learners import (
    BoostedLearner,
    DOnesERMLearner,
    ERMHalfplaneLearner,
    InconsistentSamples,
    boosted_learner,
    erm_dones,
    erm_halfplane,
    smooth_classifier,
)
from .rejectron import rejectron, rejectron_eps_star
from .watermark import (
    UniquenessProver,
    WatermarkBuilder,
    WatermarkFailure,
    WatermarkOutput,
    uniqueness_prover,
    watermark_build,
    watermark_verify_theft,
)
