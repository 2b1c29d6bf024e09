"""Table-to-text summarization with mixed hierarchical attention."""
__version__ = "0.1.0"

from .model import ModelConfig, OpCounts, audit_attention_ops, forward_teacher_forced
from .tables import Schema, Vocabulary, build_vocabulary, encode_table, parse_table_file
from .training import TrainConfig, init_params, load_model, save_model, train

__all__ = [
    "ModelConfig", "OpCounts", "audit_attention_ops", "forward_teacher_forced",
    "Schema", "Vocabulary", "build_vocabulary", "encode_table", "parse_table_file",
    "TrainConfig", "init_params", "load_model", "save_model", "train",
]
