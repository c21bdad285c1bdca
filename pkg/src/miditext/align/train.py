"""Two-stage trainer: AdamW, warmup+cosine schedule, freezes, grad checking.

Stage 1 (alignment) optimizes only the projection; encoder and LM stay
bit-identical. Stage 2 (instruction tuning) additionally trains LoRA A/B on
the attention query/value matrices while all base weights stay frozen.
Runs are deterministic for a fixed (seed, config, dataset order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..octuple import OctupleToken
from .config import Stage, TrainConfig
from .model import (
    AlignModel,
    EmptyMask,
    NonFiniteGradient,
    ShapeMismatch,
    backward_batch,
    build_targets,
    encode,
    forward_batch,
    masked_cross_entropy,
    mean_pool,
)


class StepOutOfRange(ValueError):
    """lr_schedule called with step outside [0, total_steps]."""


def lr_schedule(step: int, cfg: TrainConfig, total_steps: int | None = None) -> float:
    """Linear warmup to max_lr over ceil(warmup_ratio * total) steps, then
    cosine decay to zero at total_steps."""
    total = cfg.total_steps if total_steps is None else total_steps
    if total is None:
        raise ValueError("total_steps not resolved")
    if not 0 <= step <= total:
        raise StepOutOfRange(f"step {step} outside [0, {total}]")
    warmup = max(math.ceil(cfg.warmup_ratio * total), 1)
    if step <= warmup:
        return cfg.max_lr * step / warmup
    progress = (step - warmup) / (total - warmup)
    return cfg.max_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass(slots=True)
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    cfg: TrainConfig,
) -> AdamWState:
    """One decoupled-weight-decay Adam update, in place on `params`."""
    beta1, beta2 = cfg.adam_betas
    state.step += 1
    t = state.step
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeMismatch(f"{name}: grad {grad.shape} vs param {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(f"non-finite gradient for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * grad
        v *= beta2
        v += (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        param -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        if cfg.weight_decay:
            param -= lr * cfg.weight_decay * param
    return state


@dataclass(frozen=True, slots=True)
class TrainSample:
    """One training datum: clip tokens plus prompt/answer token ids.

    The loss supervises answer positions only; prompt and prefix positions
    are context. Pure-text samples (tokens=()) train the LM alone.
    """

    tokens: tuple[OctupleToken, ...]
    prompt_ids: tuple[int, ...]
    answer_ids: tuple[int, ...]
    sample_id: str = ""


@dataclass(slots=True)
class LossPoint:
    step: int
    lr: float
    loss: float

    def as_dict(self) -> dict:
        return {"step": self.step, "lr": self.lr, "loss": self.loss}


def _pooled_cache(model: AlignModel, dataset: list[TrainSample]) -> list[np.ndarray | None]:
    # The encoder is frozen in every stage, so clip embeddings are constant.
    pooled: list[np.ndarray | None] = []
    for sample in dataset:
        if sample.tokens:
            pooled.append(mean_pool(encode(list(sample.tokens), model.encoder)))
        else:
            pooled.append(None)
    return pooled


def _assemble(model: AlignModel, batch: list[TrainSample], pooled: list[np.ndarray | None]):
    """Right-padded id/mask arrays and the projected prefix block."""
    cfg = model.cfg
    k = cfg.prefix_count
    lengths = [len(s.prompt_ids) + len(s.answer_ids) for s in batch]
    L = max(lengths)
    B = len(batch)
    ids = np.zeros((B, L), dtype=np.int64)
    mask = np.zeros((B, L), dtype=bool)
    pooled_rows = np.zeros((B, cfg.encoder_dim))
    for row, (sample, vec) in enumerate(zip(batch, pooled)):
        seq = list(sample.prompt_ids) + list(sample.answer_ids)
        ids[row, : len(seq)] = seq
        mask[row, len(sample.prompt_ids) : len(seq)] = True
        if vec is not None:
            pooled_rows[row] = vec
    prefix = (pooled_rows @ model.projection.W.T + model.projection.b).reshape(B, k, cfg.lm_dim)
    return ids, mask, prefix, pooled_rows


def _batch_loss_and_grads(model: AlignModel, batch, pooled, prefix_mode: str = "projection"):
    """prefix_mode: "projection" feeds projected clip embeddings, "zeros"
    feeds an all-zero placeholder slot (LM pretraining), "none" omits the
    prefix entirely."""
    ids, mask, prefix, pooled_rows = _assemble(model, batch, pooled)
    if prefix_mode == "zeros":
        prefix = np.zeros_like(prefix)
    k = model.cfg.prefix_count if prefix_mode != "none" else 0
    logits, cache = forward_batch(model.lm, model.adapters,
                                  prefix if prefix_mode != "none" else None, ids,
                                  want_cache=True)
    targets = build_targets(ids, mask, k)
    value, dlogits = masked_cross_entropy(logits, targets)
    grads = backward_batch(model.lm, cache, dlogits)
    dpref = grads.pop("prefix", None)
    if prefix_mode == "projection":
        flat = dpref.reshape(len(batch), -1)
        grads["proj.W"] = flat.T @ pooled_rows
        grads["proj.b"] = flat.sum(axis=0)
    return value, grads


def _batches(dataset_indices: list[int], batch_size: int, total_steps: int,
             rng: np.random.Generator):
    """Deterministic epoch shuffles, cycled until total_steps batches."""
    emitted = 0
    while emitted < total_steps:
        order = np.array(dataset_indices)
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            if emitted >= total_steps:
                return
            yield order[start : start + batch_size].tolist()
            emitted += 1


def _trainable_arrays(model: AlignModel, stage: Stage) -> dict[str, np.ndarray]:
    arrays = {"proj.W": model.projection.W, "proj.b": model.projection.b}
    if stage is Stage.INSTRUCTION_TUNING:
        for adapter in model.adapters:
            arrays[f"lora.{adapter.target}.A"] = adapter.A
            arrays[f"lora.{adapter.target}.B"] = adapter.B
    return arrays


def _run_training(model: AlignModel, dataset: list[TrainSample], cfg: TrainConfig,
                  trainable: dict[str, np.ndarray]) -> list[LossPoint]:
    if not dataset:
        return []
    total_steps = cfg.resolve_total_steps(len(dataset))
    if total_steps == 0:
        return []
    pooled = _pooled_cache(model, dataset)
    rng = np.random.default_rng(cfg.seed)
    state = AdamWState()
    curve: list[LossPoint] = []
    for step_index, batch_indices in enumerate(
        _batches(list(range(len(dataset))), cfg.batch_size, total_steps, rng)
    ):
        batch = [dataset[i] for i in batch_indices]
        batch_pooled = [pooled[i] for i in batch_indices]
        value, grads = _batch_loss_and_grads(model, batch, batch_pooled)
        lr = lr_schedule(step_index + 1, cfg, total_steps)
        adamw_step(trainable, {n: grads[n] for n in trainable}, state, lr, cfg)
        curve.append(LossPoint(step=step_index + 1, lr=lr, loss=value))
    return curve


def train_stage1(dataset: list[TrainSample], model: AlignModel,
                 cfg: TrainConfig) -> list[LossPoint]:
    """Alignment stage: only the projection parameters move."""
    if cfg.stage is not Stage.ALIGNMENT:
        raise ValueError("train_stage1 requires cfg.stage == Stage.ALIGNMENT")
    return _run_training(model, dataset, cfg, _trainable_arrays(model, Stage.ALIGNMENT))


def train_stage2(dataset: list[TrainSample], model: AlignModel,
                 cfg: TrainConfig) -> list[LossPoint]:
    """Instruction-tuning stage: projection plus LoRA A/B matrices move."""
    if cfg.stage is not Stage.INSTRUCTION_TUNING:
        raise ValueError("train_stage2 requires cfg.stage == Stage.INSTRUCTION_TUNING")
    return _run_training(model, dataset, cfg, _trainable_arrays(model, Stage.INSTRUCTION_TUNING))


def pretrain_lm(dataset: list[TrainSample], model: AlignModel, cfg: TrainConfig,
                prefix_slot: bool = True) -> list[LossPoint]:
    """Text-only pretraining of every LM parameter (no adapters).

    Produces the frozen "pretrained LM" the two-stage alignment assumes; the
    projection, encoder, and adapters are untouched. With prefix_slot the
    sequences carry an all-zero placeholder row where the projected music
    tokens will later sit, so alignment starts from matching positions.
    """
    if not dataset:
        return []
    total_steps = cfg.resolve_total_steps(len(dataset))
    trainable = {f"lm.{name}": param for name, param in model.lm.params.items()}
    rng = np.random.default_rng(cfg.seed)
    state = AdamWState()
    curve: list[LossPoint] = []
    adapters_saved = model.adapters
    model.adapters = []  # pretraining happens on the bare backbone
    mode = "zeros" if prefix_slot else "none"
    try:
        for step_index, batch_indices in enumerate(
            _batches(list(range(len(dataset))), cfg.batch_size, total_steps, rng)
        ):
            batch = [dataset[i] for i in batch_indices]
            value, grads = _batch_loss_and_grads(model, batch, [None] * len(batch),
                                                 prefix_mode=mode)
            lr = lr_schedule(step_index + 1, cfg, total_steps)
            adamw_step(trainable, {n: grads[n] for n in trainable}, state, lr, cfg)
            curve.append(LossPoint(step=step_index + 1, lr=lr, loss=value))
    finally:
        model.adapters = adapters_saved
    return curve


def dataset_loss(model: AlignModel, dataset: list[TrainSample], batch_size: int = 16,
                 prefix_mode: str = "projection") -> float:
    """Mean supervised cross-entropy over the whole dataset, no updates."""
    pooled = _pooled_cache(model, dataset)
    total = 0.0
    count = 0
    for start in range(0, len(dataset), batch_size):
        batch = dataset[start : start + batch_size]
        value, _ = _batch_loss_and_grads(model, batch, pooled[start : start + batch_size],
                                         prefix_mode=prefix_mode)
        supervised = sum(len(s.answer_ids) for s in batch)
        total += value * supervised
        count += supervised
    return total / count if count else 0.0


def grad_check(
    model: AlignModel,
    batch: list[TrainSample],
    trainable_names: list[str] | None = None,
    epsilon: float = 1e-4,
) -> float:
    """Max relative error between analytic gradients and central differences.

    Perturbs every scalar in the requested trainable tensors (defaults to
    the stage-2 set: projection + LoRA A/B). Double precision throughout.
    """
    from .model import masked_nll

    pooled = _pooled_cache(model, batch)
    _, analytic = _batch_loss_and_grads(model, batch, pooled)
    arrays = _trainable_arrays(model, Stage.INSTRUCTION_TUNING)
    if trainable_names is not None:
        arrays = {name: arrays[name] for name in trainable_names}

    # Everything but the perturbed parameter is constant across evaluations.
    ids, mask, base_prefix, pooled_rows = _assemble(model, batch, pooled)
    targets = build_targets(ids, mask, model.cfg.prefix_count)
    shape = (len(batch), model.cfg.prefix_count, model.cfg.lm_dim)

    def loss_only(recompute_prefix: bool) -> float:
        if recompute_prefix:
            prefix = (pooled_rows @ model.projection.W.T + model.projection.b).reshape(shape)
        else:
            prefix = base_prefix
        logits, _ = forward_batch(model.lm, model.adapters, prefix, ids)
        return masked_nll(logits, targets)

    worst = 0.0
    for name, array in arrays.items():
        grad = analytic[name]
        flat = array.reshape(-1)
        flat_grad = grad.reshape(-1)
        is_projection = name.startswith("proj.")
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + epsilon
            upper = loss_only(is_projection)
            flat[index] = original - epsilon
            lower = loss_only(is_projection)
            flat[index] = original
            numeric = (upper - lower) / (2 * epsilon)
            denom = max(abs(numeric), abs(flat_grad[index]), 1e-8)
            worst = max(worst, abs(numeric - flat_grad[index]) / denom)
    return worst
