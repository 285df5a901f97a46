"""Recurrent sequence taggers that feed embeddings of their own previous labels back in."""

from .corpus import Vocabs, encode, read_conll
from .decode import BidirModel, predict, predict_bidirectional
from .metrics import evaluate
from .nets import NetConfig, Sizes, count_params, init_params
from .serialize import ModelFile
from .train import TrainConfig, train_bidirectional, train_model

__version__ = "0.1.0"

__all__ = [
    "BidirModel", "ModelFile", "NetConfig", "Sizes", "TrainConfig", "Vocabs", "count_params",
    "encode", "evaluate", "init_params", "predict", "predict_bidirectional", "read_conll",
    "train_bidirectional", "train_model",
]
