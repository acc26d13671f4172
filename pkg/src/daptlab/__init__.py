"""daptlab: desk-scale domain-adaptive pretraining lab.

A small, dependency-light stack for studying continued masked-language-model
pretraining on a narrow domain: corpus curation, WordPiece tokenization, a
mini bidirectional encoder with taped reverse-mode autodiff, Adam with
decoupled weight decay, intrinsic and extrinsic evaluation, and a CLI that
chains the stages into reproducible runs.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor
from .model import ModelConfig, forward, init_params
from .tokenizer import Vocab, encode, train_vocab

__all__ = [
    "Tape",
    "Tensor",
    "ModelConfig",
    "Vocab",
    "encode",
    "forward",
    "init_params",
    "train_vocab",
    "__version__",
]
