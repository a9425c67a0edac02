"""Graphon autoencoder: step-graphon embeddings trained with FGW-rewarded RAML."""
from .data import (
    Checkpoint,
    export_embeddings,
    load_checkpoint,
    load_dataset,
    parse_tudataset,
    read_embeddings,
    save_checkpoint,
    synth_dataset,
    synthetic_dataset,
)
from .dataset import Dataset
from .estimator import GraphonAutoencoder
from .evaluation import EvalReport, cross_validate, generation_stats, knn_classify, transfer_eval
from .exceptions import CheckpointError, InvalidInputError, ParseError
from .graphon import (
    AttributedGraph,
    StepGraphon,
    StepSignal,
    induce_graphon,
    local_degree_profile,
    merged_partition_count,
    sample_graph,
)
from .model import GraphonAutoencoderModel, encode
from .ot import SolverConfig, fgw_distance, sliced_fgw
from .training import TrainConfig, batch_loss, backward, train

__version__ = "0.1.0"
