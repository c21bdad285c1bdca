"""Configuration for the alignment model and its two-stage trainer."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class Stage(enum.Enum):
    ALIGNMENT = "alignment"
    INSTRUCTION_TUNING = "instruction_tuning"


@dataclass(frozen=True, slots=True)
class AlignConfig:
    """Desk-scale model dimensions.

    encoder_dim is the clip-embedding width produced by the stub encoder;
    lm_dim is the hidden size of the tiny decoder LM. The projection maps
    encoder_dim -> prefix_count * lm_dim, yielding prefix music tokens.
    """

    encoder_dim: int = 64
    lm_dim: int = 128
    lm_layers: int = 2
    lm_heads: int = 4
    vocab_size: int = 512
    prefix_count: int = 1
    max_seq: int = 64
    seed: int = 0
    lora_rank: int = 8
    lora_alpha: float = 16.0

    def __post_init__(self) -> None:
        if min(self.encoder_dim, self.lm_dim, self.lm_layers, self.lm_heads,
               self.vocab_size, self.prefix_count, self.max_seq) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.lm_dim % self.lm_heads:
            raise ValueError(f"lm_dim {self.lm_dim} not divisible by lm_heads {self.lm_heads}")
        if self.lora_rank < 1:
            raise ValueError("lora_rank must be >= 1")


@dataclass(slots=True)
class TrainConfig:
    """Optimizer and schedule settings.

    total_steps may be given directly (exact step budgets in tests) or left
    None to be derived as epochs * ceil(len(dataset) / batch_size).
    """

    max_lr: float = 5e-4
    warmup_ratio: float = 0.03
    batch_size: int = 16
    total_steps: int | None = None
    epochs: int | None = None
    weight_decay: float = 0.01
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    stage: Stage = Stage.ALIGNMENT
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.warmup_ratio < 1:
            raise ValueError("warmup_ratio must be in (0, 1)")
        if self.max_lr <= 0:
            raise ValueError("max_lr must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")

    def resolve_total_steps(self, dataset_size: int) -> int:
        if self.total_steps is not None:
            return self.total_steps
        if self.epochs is None:
            raise ValueError("either total_steps or epochs must be set")
        return self.epochs * math.ceil(dataset_size / self.batch_size)
