"""Synthetic clip corpus with template gold captions, plus the end-to-end
two-stage reproduction run used by the acceptance suite and demos.

Each synthetic clip is a short piece in a known key at a known tempo bin and
time signature; its gold caption is a fixed template over those three
features robustly decodable from the clip's tokens. The reproduction run
pretrains the tiny LM on caption text (standing in for a pretrained
backbone), then runs alignment (stage 1) and instruction tuning (stage 2)
with the reference optimizer settings, and scores greedy decodes of held-out
clips against their gold captions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import (
    AlignConfig,
    AlignModel,
    LossPoint,
    Stage,
    TextVocab,
    TrainConfig,
    TrainSample,
    greedy_decode,
    pretrain_lm,
    train_stage1,
    train_stage2,
)
from .align.train import dataset_loss
from .features import Mode
from .midi import MidiPiece, NoteEvent, Timeline, make_piece
from .octuple import OctupleToken, QuantConfig, tokenize
from .textmetrics import rouge_l, tokenize_text

MAJOR_STEPS = (0, 2, 4, 5, 7, 9, 11)
MINOR_STEPS = (0, 2, 3, 5, 7, 8, 11)
TONIC_NAMES = ("c", "c#", "d", "eb", "e", "f", "f#", "g", "ab", "a", "bb", "b")
TEMPO_BINS = (25, 30, 35, 40)
TIMESIGS = ((4, 4), (3, 4))


@dataclass(frozen=True, slots=True)
class SyntheticClip:
    clip_id: str
    tokens: tuple[OctupleToken, ...]
    caption: str
    tonic: int
    mode: Mode
    tempo_bin: int
    timesig: tuple[int, int]


def caption_for(tonic: int, mode: Mode, tempo_bin: int, timesig: tuple[int, int],
                quant: QuantConfig = QuantConfig()) -> str:
    """Deterministic caption template over (key, tempo bin, time signature).

    Slot values lead the sentence so the very first generated token is
    already feature-bearing.
    """
    bpm = round(quant.bin_to_bpm(tempo_bin))
    return (
        f"{TONIC_NAMES[tonic]} {mode.value} piece at {bpm} "
        f"beats per minute in {timesig[0]} {timesig[1]} time"
    )


_TEMPO_QUESTIONS = (
    "what is the tempo of this clip",
    "how fast is this music",
    "state the tempo in beats per minute",
    "give the speed of this clip",
    "tell me the tempo here",
)
_KEY_QUESTIONS = (
    "what key is this clip in",
    "name the key of this piece",
    "which key does this music use",
    "identify the key of this clip",
    "tell me the key here",
)
_TIMESIG_QUESTIONS = (
    "what is the time signature",
    "state the meter of this clip",
    "which time signature does this clip follow",
    "give the meter of this music",
    "tell me the time signature here",
)


def qa_pairs_for(clip: SyntheticClip, quant: QuantConfig = QuantConfig()) -> list[tuple[str, str]]:
    """Question/answer pairs per feature, three paraphrased questions each."""
    bpm = round(quant.bin_to_bpm(clip.tempo_bin))
    answers = {
        "tempo": f"{bpm} beats per minute",
        "key": f"{TONIC_NAMES[clip.tonic]} {clip.mode.value}",
        "timesig": f"{clip.timesig[0]} {clip.timesig[1]} time",
    }
    pairs = [(q, answers["tempo"]) for q in _TEMPO_QUESTIONS]
    pairs += [(q, answers["key"]) for q in _KEY_QUESTIONS]
    pairs += [(q, answers["timesig"]) for q in _TIMESIG_QUESTIONS]
    return pairs


def synthetic_piece(rng: np.random.Generator, tonic: int, mode: Mode,
                    tempo_bin: int, timesig: tuple[int, int],
                    quant: QuantConfig = QuantConfig()) -> MidiPiece:
    """Two-bar piece whose notes are drawn from the chosen key's scale.

    Roughly a third of the notes restate the tonic at a fixed octave (a
    pedal point), so the key is cleanly decodable from the pooled clip
    embedding as well as by profile correlation.
    """
    tpq = 480
    num, den = timesig
    bar_ticks = num * 4 * tpq // den
    steps = MAJOR_STEPS if mode is Mode.MAJOR else MINOR_STEPS
    grid = tpq // 4  # 16th-note onsets
    notes = []
    n_melody = int(rng.integers(12, 25))
    for _ in range(n_melody):
        onset = int(rng.integers(0, 2 * bar_ticks // grid)) * grid
        degree = int(rng.integers(0, len(steps)))
        octave = int(rng.integers(4, 7))
        pitch = 12 * octave + tonic + steps[degree]
        notes.append(
            NoteEvent(onset_tick=onset, track=0, pitch=min(pitch, 127),
                      duration_tick=int(rng.integers(1, 5)) * grid,
                      velocity=int(rng.integers(40, 100)))
        )
    third = 4 if mode is Mode.MAJOR else 3
    for index in range(max(n_melody, 8)):  # tonic/third pedal, fixed octave
        onset = int(rng.integers(0, 2 * bar_ticks // grid)) * grid
        pitch = 36 + tonic + (third if index % 2 else 0)
        notes.append(
            NoteEvent(onset_tick=onset, track=0, pitch=pitch,
                      duration_tick=int(rng.integers(2, 9)) * grid,
                      velocity=int(rng.integers(60, 110)))
        )
    us = round(60e6 / quant.bin_to_bpm(tempo_bin))
    timeline = Timeline(ticks_per_quarter=tpq, tempo_map=((0, us),),
                        timesig_map=((0, num, den),), end_tick=2 * bar_ticks)
    return make_piece(notes, timeline)


def generate_clip_corpus(count: int, seed: int = 0,
                         quant: QuantConfig = QuantConfig()) -> list[SyntheticClip]:
    rng = np.random.default_rng(seed)
    clips = []
    for index in range(count):
        tonic = int(rng.integers(0, 12))
        mode = Mode.MAJOR if rng.random() < 0.5 else Mode.MINOR
        tempo_bin = int(TEMPO_BINS[rng.integers(0, len(TEMPO_BINS))])
        timesig = TIMESIGS[rng.integers(0, len(TIMESIGS))]
        piece = synthetic_piece(rng, tonic, mode, tempo_bin, timesig, quant)
        clips.append(
            SyntheticClip(
                clip_id=f"clip-{index:04d}",
                tokens=tuple(tokenize(piece, quant)),
                caption=caption_for(tonic, mode, tempo_bin, timesig, quant),
                tonic=tonic,
                mode=mode,
                tempo_bin=tempo_bin,
                timesig=timesig,
            )
        )
    return clips


@dataclass(slots=True)
class ReproductionResult:
    initial_loss: float
    final_loss: float
    rouge_l: float
    pretrain_curve: list[LossPoint]
    stage1_curve: list[LossPoint]
    stage2_curve: list[LossPoint]
    decoded: list[tuple[str, str, str]]  # (clip_id, decoded, gold)
    vocab: TextVocab
    model: AlignModel


def build_instruction_samples(
    clips: list[SyntheticClip],
    vocab: TextVocab,
    quant: QuantConfig,
    with_tokens: bool,
) -> list[TrainSample]:
    """One caption sample plus one Q&A sample per feature for every clip.

    Mirrors the data pipeline: the instruction-tuning corpus carries both
    captioning and question answering over the same clips. Caption samples
    use an empty prompt (prefix conditions the caption directly); Q&A
    samples supervise only the answer tokens.
    """
    samples: list[TrainSample] = []
    for clip in clips:
        tokens = clip.tokens if with_tokens else ()
        samples.append(
            TrainSample(tokens=tokens, prompt_ids=(),
                        answer_ids=tuple(vocab.encode(clip.caption, append_eos=True)),
                        sample_id=f"{clip.clip_id}/caption")
        )
        for question, answer in qa_pairs_for(clip, quant):
            samples.append(
                TrainSample(tokens=tokens,
                            prompt_ids=tuple(vocab.encode(question)),
                            answer_ids=tuple(vocab.encode(answer, append_eos=True)),
                            sample_id=f"{clip.clip_id}/qa")
            )
    return samples


def corpus_texts(clips: list[SyntheticClip], quant: QuantConfig) -> list[str]:
    texts = [c.caption for c in clips]
    for clip in clips:
        for question, answer in qa_pairs_for(clip, quant):
            texts.append(question)
            texts.append(answer)
    return texts


def run_synthetic_reproduction(
    n_clips: int = 200,
    seed: int = 0,
    stage_epochs: int = 2,
    pretrain_epochs: int = 25,
    quant: QuantConfig | None = None,
    cfg: AlignConfig | None = None,
    max_decode: int | None = None,
) -> ReproductionResult:
    """Full desk-scale run: pretrain LM on the corpus text, then the two
    stages at the reference settings (max_lr 5e-4, warmup 0.03, cosine
    decay, batch 16). Loss is reported as the mean supervised cross-entropy
    over the full training set before stage 1 and after stage 2."""
    quant = quant if quant is not None else QuantConfig()
    clips = generate_clip_corpus(n_clips, seed=seed, quant=quant)
    vocab = TextVocab.build(sorted(set(corpus_texts(clips, quant))))
    # prefix_count 4: extra prefix rows give attention more conditioning
    # surface, which speeds feature extraction within the short stage budget.
    cfg = cfg if cfg is not None else AlignConfig(vocab_size=len(vocab), seed=seed,
                                                  prefix_count=4)
    model = AlignModel.create(cfg, quant)

    rng = np.random.default_rng(seed + 1)
    order = rng.permutation(len(clips))
    n_test = max(len(clips) // 10, 1)
    test_clips = [clips[i] for i in order[:n_test]]
    train_clips = [clips[i] for i in order[n_test:]]

    text_data = build_instruction_samples(train_clips, vocab, quant, with_tokens=False)
    align_data = build_instruction_samples(train_clips, vocab, quant, with_tokens=True)

    pretrain_curve = pretrain_lm(
        text_data, model,
        TrainConfig(max_lr=3e-3, epochs=pretrain_epochs, stage=Stage.ALIGNMENT, seed=seed),
    )
    initial_loss = dataset_loss(model, align_data)
    stage1_curve = train_stage1(
        align_data, model,
        TrainConfig(epochs=stage_epochs, stage=Stage.ALIGNMENT, seed=seed + 2),
    )
    stage2_curve = train_stage2(
        align_data, model,
        TrainConfig(epochs=stage_epochs, stage=Stage.INSTRUCTION_TUNING, seed=seed + 3),
    )
    final_loss = dataset_loss(model, align_data)

    decoded: list[tuple[str, str, str]] = []
    scores = []
    eval_clips = test_clips if max_decode is None else test_clips[:max_decode]
    for clip in eval_clips:
        prefix = model.clip_prefix(list(clip.tokens))
        out_ids = greedy_decode(prefix, [], model.lm, model.adapters,
                                max_new=cfg.max_seq - cfg.prefix_count - 1)
        text = vocab.decode(out_ids)
        decoded.append((clip.clip_id, text, clip.caption))
        scores.append(rouge_l(tokenize_text(text), tokenize_text(clip.caption)))

    return ReproductionResult(
        initial_loss=initial_loss,
        final_loss=final_loss,
        rouge_l=float(np.mean(scores)) if scores else 0.0,
        pretrain_curve=pretrain_curve,
        stage1_curve=stage1_curve,
        stage2_curve=stage2_curve,
        decoded=decoded,
        vocab=vocab,
        model=model,
    )
