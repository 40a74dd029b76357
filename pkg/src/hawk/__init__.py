"""Head-importance-aware visual token pruning on a toy multimodal decoder."""

__version__ = "0.1.0"

from .errors import HawkError
from .model import (
    GenerationOutput,
    HeadVisualMask,
    ModelConfig,
    ModelWeights,
    MultimodalSequence,
    decode_greedy,
    kv_cache_bytes,
)
from .pruner import (
    AblationTable,
    HeadWeightVector,
    PruneDecision,
    aggregate_importance,
    apply_decision,
    compute_head_weights,
    select_tokens,
    text_guided_scores,
)

__all__ = [
    "AblationTable",
    "GenerationOutput",
    "HawkError",
    "HeadVisualMask",
    "HeadWeightVector",
    "ModelConfig",
    "ModelWeights",
    "MultimodalSequence",
    "PruneDecision",
    "aggregate_importance",
    "apply_decision",
    "compute_head_weights",
    "decode_greedy",
    "kv_cache_bytes",
    "select_tokens",
    "text_guided_scores",
]
