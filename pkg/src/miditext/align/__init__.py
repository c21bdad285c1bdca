"""Encoder-projection-LM alignment at desk scale, in plain numpy."""

from .config import AlignConfig, Stage, TrainConfig
from .model import (
    AlignModel,
    EmptyMask,
    EmptySequence,
    FieldOutOfRange,
    LoraAdapter,
    NonFiniteGradient,
    Projection,
    SequenceTooLong,
    ShapeMismatch,
    StubEncoder,
    TinyLm,
    encode,
    forward_lm,
    greedy_decode,
    loss,
    make_adapters,
    mean_pool,
    project,
)
from .train import (
    AdamWState,
    LossPoint,
    StepOutOfRange,
    TrainSample,
    adamw_step,
    grad_check,
    lr_schedule,
    pretrain_lm,
    train_stage1,
    train_stage2,
)
from .vocab import EOS_ID, PAD_ID, TextVocab
from .weights import load_checkpoint, load_weights, save_checkpoint, save_weights

__all__ = [
    "AdamWState",
    "AlignConfig",
    "AlignModel",
    "EOS_ID",
    "EmptyMask",
    "EmptySequence",
    "FieldOutOfRange",
    "LoraAdapter",
    "LossPoint",
    "NonFiniteGradient",
    "PAD_ID",
    "Projection",
    "SequenceTooLong",
    "ShapeMismatch",
    "Stage",
    "StepOutOfRange",
    "StubEncoder",
    "TextVocab",
    "TinyLm",
    "TrainConfig",
    "TrainSample",
    "adamw_step",
    "encode",
    "forward_lm",
    "grad_check",
    "greedy_decode",
    "load_checkpoint",
    "load_weights",
    "loss",
    "lr_schedule",
    "make_adapters",
    "mean_pool",
    "pretrain_lm",
    "project",
    "save_checkpoint",
    "save_weights",
    "train_stage1",
    "train_stage2",
]
