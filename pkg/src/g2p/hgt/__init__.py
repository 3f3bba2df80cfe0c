from .checkpoint import CheckpointError, check_compatible, load_checkpoint, save_checkpoint
from .gradcheck import gradcheck, random_graph
from .model import (
    ConfigError,
    GraphBatch,
    ModelConfig,
    attention_weights,
    embed_nodes,
    forward,
    init_params,
    loss_and_grad,
    node_states,
    param_count,
    param_shapes,
    predict_proba,
)
from .train import Adam, TrainResult, accuracy, history_csv, split_corpus, train, write_history
