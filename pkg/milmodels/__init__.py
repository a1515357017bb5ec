from .checkpoint import load_checkpoint, save_checkpoint
from .experiment import ExperimentResult, RunResult, run_experiment
from .models import (
    MODEL_REGISTRY,
    AdditiveMIL,
    AttentionMIL,
    BagOutput,
    BaseMILModel,
    HybridAdditiveMIL,
    admil_forward,
    amil_forward,
    attention_leaky,
    attention_tanh,
    bag_matrix,
    build_model,
    hybrid_forward,
)
from .params import BagClassifierParams, LeakyAttentionParams, PatchScoreParams, TanhAttentionParams
from .training import FoldResult, TrainConfig, TrainResult, fit, predict, score_map, train_model
