"""OctupleMIDI tokenization: one 8-field token per note event.

Fields are (bar, position, instrument, pitch, duration, velocity, tempo,
time signature), each quantized against an explicit table in QuantConfig.
tokenize/detokenize form a quantization fixed point: re-tokenizing a
detokenized token list reproduces it exactly.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .midi import (
    DEFAULT_TEMPO_US,
    EmptyPiece,
    MidiPiece,
    NoteEvent,
    Timeline,
    make_piece,
)

logger = logging.getLogger(__name__)

DETOKENIZE_TPQ = 480

DEFAULT_TIMESIG_VOCAB: tuple[tuple[int, int], ...] = (
    (4, 4), (3, 4), (2, 4), (2, 2), (6, 8), (3, 8), (9, 8), (12, 8),
    (5, 4), (6, 4), (7, 8), (5, 8), (4, 2), (1, 4), (7, 4), (3, 2),
)

DRUM_INSTRUMENT = 128


class TokenOutOfRange(ValueError):
    """Token field outside the range allowed by the quantization config."""


class UnsupportedTimeSignature(ValueError):
    """Time signature absent from the vocabulary (strict_timesigs mode)."""


def us_to_bpm(us_per_quarter: int) -> float:
    return 60e6 / us_per_quarter


@dataclass(frozen=True, slots=True)
class QuantConfig:
    """Quantization tables for OctupleMIDI.

    positions_per_bar_unit is the grid resolution as a fraction of a whole
    note (64 = 1/64-note grid). Durations are counted in grid units and
    clamped to [1, duration_bins - 1]. Velocity bins have uniform width 4
    over 1..127. Tempo bins are log-spaced: bin i <-> 16 * 2**(i / 12) BPM,
    so the default 49 bins span 16..256 BPM.
    """

    positions_per_bar_unit: int = 64
    duration_bins: int = 128
    velocity_bins: int = 32
    tempo_bins: int = 49
    max_bars: int = 256
    timesig_vocab: tuple[tuple[int, int], ...] = DEFAULT_TIMESIG_VOCAB
    instrument_vocab_size: int = 129
    strict_timesigs: bool = False  # raise instead of remapping unknown signatures

    def __post_init__(self) -> None:
        if min(self.positions_per_bar_unit, self.duration_bins, self.velocity_bins,
               self.tempo_bins, self.max_bars, self.instrument_vocab_size) <= 0:
            raise ValueError("all bin counts must be positive")
        if not self.timesig_vocab:
            raise ValueError("timesig_vocab must be non-empty")
        if len(set(self.timesig_vocab)) != len(self.timesig_vocab):
            raise ValueError("timesig_vocab contains duplicates")
        if 4 * DETOKENIZE_TPQ % self.positions_per_bar_unit:
            raise ValueError(f"positions_per_bar_unit must divide {4 * DETOKENIZE_TPQ}")
        for num, den in self.timesig_vocab:
            if num * self.positions_per_bar_unit % den:
                raise ValueError(f"time signature {num}/{den} is off the position grid")

    def positions_in_bar(self, num: int, den: int) -> int:
        return num * self.positions_per_bar_unit // den

    def max_positions(self) -> int:
        return max(self.positions_in_bar(n, d) for n, d in self.timesig_vocab)

    def grid_step(self, ticks_per_quarter: int) -> Fraction:
        return Fraction(4 * ticks_per_quarter, self.positions_per_bar_unit)

    def velocity_to_bin(self, velocity: int) -> int:
        return min((velocity - 1) // 4, self.velocity_bins - 1)

    def bin_to_velocity(self, bin_index: int) -> int:
        return min(bin_index * 4 + 2, 127)

    def bpm_to_bin(self, bpm: float) -> int:
        raw = round(12 * math.log2(bpm / 16.0))
        return min(max(raw, 0), self.tempo_bins - 1)

    def bin_to_bpm(self, bin_index: int) -> float:
        return 16.0 * 2 ** (bin_index / 12)

    def duration_to_bin(self, duration_ticks: int, ticks_per_quarter: int) -> int:
        units = round(Fraction(duration_ticks) / self.grid_step(ticks_per_quarter))
        return min(max(units, 1), self.duration_bins - 1)

    def timesig_index(self, num: int, den: int) -> int:
        """Vocabulary index; unknown signatures map to the nearest bar-length ratio."""
        sig = (num, den)
        if sig in self.timesig_vocab:
            return self.timesig_vocab.index(sig)
        if self.strict_timesigs:
            raise UnsupportedTimeSignature(f"{num}/{den} not in vocabulary")
        target = Fraction(num, den)
        best = min(
            range(len(self.timesig_vocab)),
            key=lambda i: abs(math.log(float(Fraction(*self.timesig_vocab[i]) / target))),
        )
        logger.warning("time signature %d/%d not in vocabulary, using %d/%d",
                       num, den, *self.timesig_vocab[best])
        return best


@dataclass(frozen=True, slots=True, order=True)
class OctupleToken:
    """One note as an 8-tuple of quantization-table indices."""

    bar: int
    position: int
    instrument: int
    pitch: int
    duration: int
    velocity: int
    tempo: int
    timesig: int

    def as_tuple(self) -> tuple[int, ...]:
        return (self.bar, self.position, self.instrument, self.pitch,
                self.duration, self.velocity, self.tempo, self.timesig)


def validate_token(token: OctupleToken, cfg: QuantConfig) -> None:
    """Raise TokenOutOfRange unless every field is inside its table."""
    num, den = cfg.timesig_vocab[token.timesig] if 0 <= token.timesig < len(cfg.timesig_vocab) else (0, 1)
    checks = (
        ("bar", token.bar, cfg.max_bars),
        ("instrument", token.instrument, cfg.instrument_vocab_size),
        ("pitch", token.pitch, 128),
        ("velocity", token.velocity, cfg.velocity_bins),
        ("tempo", token.tempo, cfg.tempo_bins),
        ("timesig", token.timesig, len(cfg.timesig_vocab)),
    )
    for name, value, bound in checks:
        if not 0 <= value < bound:
            raise TokenOutOfRange(f"{name}={value} outside [0, {bound})")
    if not 1 <= token.duration < cfg.duration_bins:
        raise TokenOutOfRange(f"duration={token.duration} outside [1, {cfg.duration_bins})")
    if not 0 <= token.position < cfg.positions_in_bar(num, den):
        raise TokenOutOfRange(
            f"position={token.position} outside bar of {cfg.positions_in_bar(num, den)} grid units"
        )


@dataclass(frozen=True, slots=True)
class _Segment:
    """One time-signature span mapped onto the bar/position grid."""

    start_tick: int
    first_bar: int
    positions_in_bar: int
    timesig_index: int


def _segments(timeline: Timeline, cfg: QuantConfig) -> list[_Segment]:
    step = cfg.grid_step(timeline.ticks_per_quarter)
    segments: list[_Segment] = []
    next_bar = 0
    for i, (tick, num, den) in enumerate(timeline.timesig_map):
        sig_idx = cfg.timesig_index(num, den)
        vnum, vden = cfg.timesig_vocab[sig_idx]
        positions = cfg.positions_in_bar(vnum, vden)
        segments.append(_Segment(tick, next_bar, positions, sig_idx))
        if i + 1 < len(timeline.timesig_map):
            span_units = Fraction(timeline.timesig_map[i + 1][0] - tick) / step
            next_bar += max(math.ceil(span_units / positions), 1)
    return segments


def _snap_units(offset_ticks: int, step: Fraction) -> int:
    # Ties round half-up, to the later grid point.
    return math.floor(Fraction(offset_ticks) / step + Fraction(1, 2))


def tokenize(piece: MidiPiece, cfg: QuantConfig = QuantConfig()) -> list[OctupleToken]:
    """Quantize a piece into OctupleMIDI tokens sorted by (bar, position, instrument, pitch).

    Onsets snap to the nearest grid point; tempo and time signature reflect
    the active map values at the snapped onset. Notes landing beyond max_bars
    are dropped with a logged count.
    """
    if not piece.notes:
        raise EmptyPiece("cannot tokenize a piece with no notes")
    timeline = piece.timeline
    step = cfg.grid_step(timeline.ticks_per_quarter)
    segments = _segments(timeline, cfg)
    seg_starts = [s.start_tick for s in segments]

    tokens: list[OctupleToken] = []
    truncated = 0
    for note in piece.notes:
        seg = segments[max(bisect.bisect_right(seg_starts, note.onset_tick) - 1, 0)]
        units = _snap_units(note.onset_tick - seg.start_tick, step)
        bar = seg.first_bar + units // seg.positions_in_bar
        if bar >= cfg.max_bars:
            truncated += 1
            continue
        snapped_tick = seg.start_tick + units * step
        tokens.append(
            OctupleToken(
                bar=bar,
                position=units % seg.positions_in_bar,
                instrument=DRUM_INSTRUMENT if note.channel == 9 else note.program,
                pitch=note.pitch,
                duration=cfg.duration_to_bin(note.duration_tick, timeline.ticks_per_quarter),
                velocity=cfg.velocity_to_bin(note.velocity),
                tempo=cfg.bpm_to_bin(us_to_bpm(timeline.tempo_at(math.floor(snapped_tick)))),
                timesig=seg.timesig_index,
            )
        )
    if truncated:
        logger.warning("dropped %d note(s) beyond bar %d", truncated, cfg.max_bars)
    tokens.sort()
    return tokens


def detokenize(tokens: list[OctupleToken], cfg: QuantConfig = QuantConfig()) -> MidiPiece:
    """Reconstruct a 480-TPQ piece at bin-center values.

    The inverse tables place velocities at bin*4 + 2 (capped at 127) and
    tempos at 16 * 2**(bin/12) BPM. Bars derive their length from the time
    signature of their first token; empty bars keep the previous signature.
    """
    if not tokens:
        return MidiPiece(notes=(), timeline=Timeline(ticks_per_quarter=DETOKENIZE_TPQ))
    for token in tokens:
        validate_token(token, cfg)
    if any(a.as_tuple() > b.as_tuple() for a, b in zip(tokens, tokens[1:])):
        raise ValueError("tokens must be sorted")

    step = int(cfg.grid_step(DETOKENIZE_TPQ))
    bar_sig: dict[int, int] = {}
    for token in tokens:
        bar_sig.setdefault(token.bar, token.timesig)

    # Cumulative bar starts; a signature change lands at its bar's start tick.
    bar_starts: list[int] = [0]
    timesig_map: list[tuple[int, int, int]] = []
    current_sig = bar_sig[min(bar_sig)]
    for bar in range(max(bar_sig) + 1):
        current_sig = bar_sig.get(bar, current_sig)
        num, den = cfg.timesig_vocab[current_sig]
        if not timesig_map or timesig_map[-1][1:] != (num, den):
            timesig_map.append((bar_starts[bar], num, den))
        bar_starts.append(bar_starts[bar] + cfg.positions_in_bar(num, den) * step)

    notes: list[NoteEvent] = []
    tempo_map: list[tuple[int, int]] = []
    for token in tokens:
        onset = bar_starts[token.bar] + token.position * step
        us = round(60e6 / cfg.bin_to_bpm(token.tempo))
        if not tempo_map:
            tempo_map.append((0, us))
        elif tempo_map[-1][1] != us:
            tempo_map.append((onset, us))
        notes.append(
            NoteEvent(
                onset_tick=onset,
                track=0,
                pitch=token.pitch,
                duration_tick=token.duration * step,
                velocity=cfg.bin_to_velocity(token.velocity),
                channel=9 if token.instrument == DRUM_INSTRUMENT else 0,
                program=0 if token.instrument == DRUM_INSTRUMENT else token.instrument,
            )
        )

    timeline = Timeline(
        ticks_per_quarter=DETOKENIZE_TPQ,
        tempo_map=tuple(tempo_map) or ((0, DEFAULT_TEMPO_US),),
        timesig_map=tuple(timesig_map),
        end_tick=0,
    )
    return make_piece(notes, timeline)


def tokens_to_lines(tokens: list[OctupleToken]) -> str:
    """Line-oriented text form: 8 space-separated integers per token, one per line."""
    return "".join(" ".join(str(v) for v in t.as_tuple()) + "\n" for t in tokens)


def lines_to_tokens(text: str) -> list[OctupleToken]:
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"line {lineno}: expected 8 integers, got {len(parts)}")
        tokens.append(OctupleToken(*(int(p) for p in parts)))
    return tokens
