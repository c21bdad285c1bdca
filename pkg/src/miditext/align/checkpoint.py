"""Model checkpointing: SMAW1 weights plus a JSON config with the vocab."""

from __future__ import annotations

import dataclasses
from pathlib import Path

from ..octuple import QuantConfig
from .config import AlignConfig
from .model import AlignModel
from .vocab import TextVocab
from .weights import load_checkpoint, save_checkpoint


def save_model(model: AlignModel, vocab: TextVocab, directory: str | Path) -> None:
    config = {
        "align": dataclasses.asdict(model.cfg),
        "quant": {
            "positions_per_bar_unit": model.quant.positions_per_bar_unit,
            "duration_bins": model.quant.duration_bins,
            "velocity_bins": model.quant.velocity_bins,
            "tempo_bins": model.quant.tempo_bins,
            "max_bars": model.quant.max_bars,
            "timesig_vocab": [list(sig) for sig in model.quant.timesig_vocab],
            "instrument_vocab_size": model.quant.instrument_vocab_size,
        },
        "vocab": vocab.to_dict(),
    }
    save_checkpoint(directory, model.tensors(), config)


def load_model(directory: str | Path) -> tuple[AlignModel, TextVocab]:
    tensors, config = load_checkpoint(directory)
    quant_data = config["quant"]
    quant = QuantConfig(
        positions_per_bar_unit=quant_data["positions_per_bar_unit"],
        duration_bins=quant_data["duration_bins"],
        velocity_bins=quant_data["velocity_bins"],
        tempo_bins=quant_data["tempo_bins"],
        max_bars=quant_data["max_bars"],
        timesig_vocab=tuple(tuple(sig) for sig in quant_data["timesig_vocab"]),
        instrument_vocab_size=quant_data["instrument_vocab_size"],
    )
    cfg = AlignConfig(**config["align"])
    model = AlignModel.create(cfg, quant)
    for name, table in model.encoder.tables.items():
        table[:] = tensors[f"enc.{name}"]
    model.projection.W[:] = tensors["proj.W"]
    model.projection.b[:] = tensors["proj.b"]
    for name, param in model.lm.params.items():
        param[:] = tensors[f"lm.{name}"]
    for adapter in model.adapters:
        adapter.A[:] = tensors[f"lora.{adapter.target}.A"]
        adapter.B[:] = tensors[f"lora.{adapter.target}.B"]
    return model, TextVocab.from_dict(config["vocab"])
