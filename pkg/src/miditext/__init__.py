"""Symbolic music (MIDI) to text pipeline toolkit.

Modules cover the full data path: SMF parsing (`midi`), OctupleMIDI
tokenization (`octuple`), clip segmentation (`segment`), ABC notation export
(`abcnotation`), musical feature extraction (`features`), annotation and Q&A
dataset generation (`annotate`), text-generation metrics (`textmetrics`), a
numpy implementation of the encoder-projection-LM alignment trainer
(`align`), and a synthetic reproduction harness (`synthetic`). The `miditext`
console script exposes everything as batch subcommands.
"""

from .abcnotation import AbcDocument, to_abc, validate_abc
from .features import FeatureSummary, Key, Mode, estimate_key, estimate_tempo
from .midi import (
    EmptyPiece,
    MalformedHeader,
    MidiError,
    MidiPiece,
    NoteEvent,
    TickOutOfRange,
    Timeline,
    TruncatedTrack,
    UnsupportedFormat,
    bar_grid,
    make_piece,
    parse_smf,
    seconds_to_ticks,
    ticks_to_seconds,
    write_smf,
)
from .octuple import OctupleToken, QuantConfig, detokenize, tokenize
from .segment import Clip, Region, select_clips, slice_tokens
from .textmetrics import MetricReport, bert_score, bleu, corpus_report, meteor, rouge_l, tokenize_text

__version__ = "0.1.0"

__all__ = [
    "AbcDocument",
    "Clip",
    "EmptyPiece",
    "FeatureSummary",
    "Key",
    "MalformedHeader",
    "MetricReport",
    "MidiError",
    "MidiPiece",
    "Mode",
    "NoteEvent",
    "OctupleToken",
    "QuantConfig",
    "Region",
    "TickOutOfRange",
    "Timeline",
    "TruncatedTrack",
    "UnsupportedFormat",
    "bar_grid",
    "bert_score",
    "bleu",
    "corpus_report",
    "detokenize",
    "estimate_key",
    "estimate_tempo",
    "make_piece",
    "meteor",
    "parse_smf",
    "rouge_l",
    "seconds_to_ticks",
    "select_clips",
    "slice_tokens",
    "ticks_to_seconds",
    "to_abc",
    "tokenize",
    "tokenize_text",
    "validate_abc",
    "write_smf",
]
