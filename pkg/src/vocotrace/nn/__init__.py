"""Autodiff tensors, the Res2Net-style classifier and its training loop."""
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .layers import EMBED_DIM, FingerprintClassifier, Res2NetBlock, Res2NetExtractor
from .tensor import Tensor, cross_entropy, softmax_cross_entropy
from .train import History, TrainConfig, predict, train

__all__ = [
    "Checkpoint", "EMBED_DIM", "FingerprintClassifier", "History", "Res2NetBlock", "Res2NetExtractor",
    "Tensor", "TrainConfig", "cross_entropy", "load_checkpoint", "predict", "save_checkpoint",
    "softmax_cross_entropy", "train",
]
