"""Structure Tree-LSTM: Child-Sum Tree-LSTMs laid over document structure."""

from .doctree import DocNode, DocTree, parse_json_tree, parse_sectioned_text
from .embeddings import EmbeddingStore, load_word2vec_text
from .models import Model
from .training import TrainConfig, train
from .treelstm import Variant, count_params, encode_tree

__all__ = [
    "DocNode",
    "DocTree",
    "EmbeddingStore",
    "Model",
    "TrainConfig",
    "Variant",
    "count_params",
    "encode_tree",
    "load_word2vec_text",
    "parse_json_tree",
    "parse_sectioned_text",
    "train",
]

__version__ = "0.1.0"
