"""Basic musical feature extraction: tempo, key, and time signature.

Key finding uses the Krumhansl-Schmuckler algorithm: a duration-weighted
pitch-class histogram is Pearson-correlated against the 24 rotations of the
Krumhansl-Kessler major and minor profiles and the best correlation wins.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .midi import EmptyPiece, MidiPiece, Timeline, ticks_to_seconds

# Krumhansl-Kessler tonal hierarchy profiles, index = pitch class relative to
# the tonic (Krumhansl, "Cognitive Foundations of Musical Pitch", p. 30).
KK_MAJOR = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
KK_MINOR = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])

PITCH_CLASS_NAMES_SHARP = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
PITCH_CLASS_NAMES_FLAT = ("C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B")


class Mode(enum.Enum):
    MAJOR = "major"
    MINOR = "minor"


@dataclass(frozen=True, slots=True)
class Key:
    """Estimated key with the winning profile correlation as confidence."""

    tonic: int  # pitch class 0..11, C = 0
    mode: Mode
    confidence: float = 0.0

    def name(self) -> str:
        names = PITCH_CLASS_NAMES_SHARP if sharps_in_key(self.tonic, self.mode) >= 0 else PITCH_CLASS_NAMES_FLAT
        suffix = "" if self.mode is Mode.MAJOR else " minor"
        return names[self.tonic] + suffix


@dataclass(frozen=True, slots=True)
class FeatureSummary:
    tempo_bpm: float
    key: Key
    timesig: tuple[int, int]
    duration_s: float


# Circle-of-fifths position for each (tonic, mode); positive = sharp keys.
# Enharmonic tonics take the spelling with fewer accidentals, sharps on ties.
_MAJOR_FIFTHS = {0: 0, 7: 1, 2: 2, 9: 3, 4: 4, 11: 5, 6: 6, 5: -1, 10: -2, 3: -3, 8: -4, 1: -5}


def sharps_in_key(tonic: int, mode: Mode) -> int:
    """Signed accidental count of the key signature (sharps positive, flats negative)."""
    relative_major = tonic if mode is Mode.MAJOR else (tonic + 3) % 12
    return _MAJOR_FIFTHS[relative_major]


def pitch_class_histogram(piece: MidiPiece) -> np.ndarray:
    """Duration-weighted (in ticks) pitch-class histogram, shape (12,)."""
    hist = np.zeros(12)
    for note in piece.notes:
        hist[note.pitch % 12] += note.duration_tick
    return hist


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xd = x - x.mean()
    yd = y - y.mean()
    denom = np.sqrt((xd @ xd) * (yd @ yd))
    if denom == 0:
        return 0.0
    return float((xd @ yd) / denom)


def estimate_key(piece: MidiPiece) -> Key:
    """Krumhansl-Schmuckler key estimate.

    Ties break in favor of major over minor, then the lowest tonic.
    """
    if not piece.notes:
        raise EmptyPiece("key estimation requires at least one note")
    hist = pitch_class_histogram(piece)
    best: Key | None = None
    for mode, profile in ((Mode.MAJOR, KK_MAJOR), (Mode.MINOR, KK_MINOR)):
        for tonic in range(12):
            r = _pearson(hist, np.roll(profile, tonic))
            if best is None or r > best.confidence + 1e-12:
                best = Key(tonic=tonic, mode=mode, confidence=r)
    assert best is not None
    return best


def estimate_tempo(timeline: Timeline) -> float:
    """Duration-weighted (in seconds) mean BPM over the tempo map across [0, end_tick]."""
    if timeline.end_tick == 0:
        return 60e6 / timeline.tempo_map[0][1]
    total_s = ticks_to_seconds(timeline, timeline.end_tick)
    weighted = 0.0
    for i, (seg_start, us) in enumerate(timeline.tempo_map):
        if seg_start >= timeline.end_tick:
            break
        seg_end = timeline.tempo_map[i + 1][0] if i + 1 < len(timeline.tempo_map) else timeline.end_tick
        seg_end = min(seg_end, timeline.end_tick)
        span_s = (seg_end - seg_start) * us / (timeline.ticks_per_quarter * 1e6)
        weighted += (60e6 / us) * span_s
    return weighted / total_s


def dominant_time_signature(timeline: Timeline) -> tuple[int, int]:
    """The signature active for the greatest tick span; ties go to the earliest occurrence."""
    spans: dict[tuple[int, int], int] = {}
    first_seen: dict[tuple[int, int], int] = {}
    for i, (seg_start, num, den) in enumerate(timeline.timesig_map):
        seg_end = timeline.timesig_map[i + 1][0] if i + 1 < len(timeline.timesig_map) else timeline.end_tick
        sig = (num, den)
        spans[sig] = spans.get(sig, 0) + max(min(seg_end, timeline.end_tick) - seg_start, 0)
        first_seen.setdefault(sig, seg_start)
    return max(spans, key=lambda sig: (spans[sig], -first_seen[sig]))


def summarize(piece: MidiPiece) -> FeatureSummary:
    """Piece-level features used as supplementary information in annotation tags."""
    return FeatureSummary(
        tempo_bpm=estimate_tempo(piece.timeline),
        key=estimate_key(piece),
        timesig=dominant_time_signature(piece.timeline),
        duration_s=piece.duration_seconds(),
    )
