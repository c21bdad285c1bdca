"""Built-in oracle suite: quick self-contained checks with known answers.

Each check recomputes its expected value from first principles (hand-derived
constants, fixed-point identities, finite differences) and prints one
PASS/FAIL line; run_selftest returns True only if everything passes.
"""

from __future__ import annotations

import math

import numpy as np

from .abcnotation import to_abc, validate_abc
from .align import (
    AlignConfig,
    AlignModel,
    AdamWState,
    Stage,
    TrainConfig,
    TrainSample,
    adamw_step,
    grad_check,
    lr_schedule,
)
from .midi import NoteEvent, Timeline, make_piece, parse_smf, write_smf
from .octuple import QuantConfig, detokenize, tokenize
from .synthetic import generate_clip_corpus
from .textmetrics import bleu, meteor, rouge_l, tokenize_text


def _constant_piece(seconds: float = 30.0):
    tpq = 480
    end_tick = round(seconds * 2 * tpq)  # 120 BPM: 2 ticks per ms at 480 TPQ
    notes = [NoteEvent(onset_tick=t, track=0, pitch=60 + (t // 480) % 12,
                       duration_tick=240, velocity=80)
             for t in range(0, end_tick - 480, 480)]
    return make_piece(notes, Timeline(ticks_per_quarter=tpq, end_tick=end_tick))


def check_metrics() -> bool:
    hyp = tokenize_text("the cat sat")
    ok = abs(bleu([hyp], [tokenize_text("the cat sat down")]) - math.exp(1 - 4 / 3)) < 1e-12
    ok &= abs(rouge_l(hyp, tokenize_text("the cat ate")) - 2 / 3) < 1e-12
    ok &= abs(meteor(["cat", "the"], ["the", "cat"]) - 0.5) < 1e-12
    ok &= abs(meteor(["a", "b", "c"], ["a", "b", "c"]) - (1 - 0.5 / 27)) < 1e-12
    return bool(ok)


def check_tokenizer_fixed_point() -> bool:
    quant = QuantConfig()
    for clip in generate_clip_corpus(40, seed=11, quant=quant):
        tokens = list(clip.tokens)
        if tokenize(detokenize(tokens, quant), quant) != tokens:
            return False
    return True


def check_smf_round_trip() -> bool:
    piece = _constant_piece(10.0)
    back = parse_smf(write_smf(piece))
    return back.notes == piece.notes and back.timeline == piece.timeline


def check_abc_closure() -> bool:
    for clip in generate_clip_corpus(15, seed=13):
        piece = detokenize(list(clip.tokens))
        if validate_abc(to_abc(piece)):
            return False
    return True


def check_segmenter() -> bool:
    from .segment import select_clips

    clips = select_clips(_constant_piece(100.0), piece_id="p")
    if len(clips) != 3:
        return False
    for a, b in zip(clips, clips[1:]):
        if a.end_tick > b.start_tick:
            return False
    return all(18.0 - 1e-9 <= c.duration_s() <= 20.0 + 1e-9 for c in clips)


def check_lr_schedule() -> bool:
    cfg = TrainConfig(total_steps=200)
    warmup = math.ceil(0.03 * 200)
    return lr_schedule(warmup, cfg) == 5e-4 and abs(lr_schedule(200, cfg)) < 1e-18


def check_adamw() -> bool:
    cfg = TrainConfig(total_steps=10, weight_decay=0.0)
    params = {"p": np.array([1.0])}
    adamw_step(params, {"p": np.array([1.0])}, AdamWState(), 0.1, cfg)
    return abs(params["p"][0] - 0.9) < 1e-6


def check_gradients() -> bool:
    cfg = AlignConfig(encoder_dim=8, lm_dim=16, lm_layers=1, lm_heads=2,
                      vocab_size=16, max_seq=16, seed=3)
    model = AlignModel.create(cfg)
    rng = np.random.default_rng(3)
    for adapter in model.adapters:
        adapter.B[:] = rng.normal(0, 0.05, adapter.B.shape)
    corpus = generate_clip_corpus(2, seed=17)
    batch = [
        TrainSample(tokens=clip.tokens[:6],
                    prompt_ids=tuple(int(x) for x in rng.integers(2, 16, size=2)),
                    answer_ids=tuple(int(x) for x in rng.integers(2, 16, size=3)))
        for clip in corpus
    ]
    return grad_check(model, batch, epsilon=1e-4) < 1e-4


CHECKS = (
    ("metric oracle values", check_metrics),
    ("tokenizer fixed point", check_tokenizer_fixed_point),
    ("smf round trip", check_smf_round_trip),
    ("abc generator/validator closure", check_abc_closure),
    ("segmenter contract", check_segmenter),
    ("lr schedule boundary and terminal", check_lr_schedule),
    ("adamw reference step", check_adamw),
    ("gradient check vs central differences", check_gradients),
)


def run_selftest(print_fn=print) -> bool:
    all_ok = True
    for name, check in CHECKS:
        try:
            ok = check()
        except Exception as exc:  # a crashing check is a failing check
            ok = False
            print_fn(f"FAIL {name}: {exc!r}")
            all_ok = False
            continue
        print_fn(f"{'PASS' if ok else 'FAIL'} {name}")
        all_ok &= ok
    return all_ok
