"""MIDI piece to ABC notation text, with an explicit information-loss report.

The emitted subset is deterministic and narrow: unit note length 1/8,
durations quantized to multiples of a 1/32 note, one voice per MIDI track,
simultaneous equal-onset notes as chords, notes split at bar lines with ties.
Accidentals are written explicitly on every altered note (the key signature
never implies accidentals in the body), which keeps pitch recovery from the
text exact. Everything the subset cannot express is counted in the loss
report instead of silently discarded.

Subset grammar (UTF-8 text, LF line endings):

    document    = header body
    header      = "X:" int NL "T:" text NL "M:" int "/" int NL
                  "L:1/8" NL "Q:1/4=" int NL "K:" key NL
    body        = voice+ | tokens NL
    voice       = "V:" int NL tokens NL
    tokens      = (note | chord | rest | bar | " ")*
    note        = accidental? letter marks? multiplier? tie?
    chord       = "[" note+ "]"
    rest        = "z" multiplier?
    bar         = "|"
    tie         = "-"
    accidental  = "^" | "_"
    letter      = [A-Ga-g]           ; uppercase = middle-C octave
    marks       = "'"+ | ","+        ; octave marks, up / down
    multiplier  = int | int? "/" int ; length in L:1/8 units

Bar lines are separators, not checked duration sums; a tied note's segments
sound as one note.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .features import Key, Mode, estimate_key, estimate_tempo, sharps_in_key
from .midi import EmptyPiece, MidiPiece, bar_grid

_SHARP_NAMES = ("C", "^C", "D", "^D", "E", "F", "^F", "G", "^G", "A", "^A", "B")
_FLAT_NAMES = ("C", "_D", "D", "_E", "E", "F", "_G", "G", "_A", "A", "_B", "B")

UNITS_PER_WHOLE = 32  # quantization grid: 1/32 note
UNITS_PER_DEFAULT_LENGTH = 4  # L:1/8 -> one length unit = 4 grid units


@dataclass(slots=True)
class LossReport:
    """Counts of everything the ABC subset could not represent exactly."""

    quantized_notes: int = 0  # onset or duration moved onto the 1/32 grid
    merged_notes: int = 0  # chord members truncated to the chord's duration
    overlap_truncations: int = 0  # notes shortened to the next onset in the voice
    dropped_notes: int = 0  # duplicate chord pitches removed
    extra_tempo_events: int = 0  # tempo changes beyond the single Q: field
    extra_timesig_events: int = 0  # signature changes beyond the single M: field

    def total(self) -> int:
        return (self.quantized_notes + self.merged_notes + self.overlap_truncations
                + self.dropped_notes + self.extra_tempo_events + self.extra_timesig_events)


@dataclass(frozen=True, slots=True)
class AbcViolation:
    line: int
    column: int
    message: str


@dataclass(slots=True)
class AbcDocument:
    """Header fields in X,T,M,L,Q,K order plus one body per voice."""

    index: int
    title: str
    meter: tuple[int, int]
    unit_length: str
    tempo_bpm: int
    key: str
    voices: list[tuple[str, str]] = field(default_factory=list)
    loss_report: LossReport = field(default_factory=LossReport)

    def header_lines(self) -> list[str]:
        return [
            f"X:{self.index}",
            f"T:{self.title}",
            f"M:{self.meter[0]}/{self.meter[1]}",
            f"L:{self.unit_length}",
            f"Q:1/4={self.tempo_bpm}",
            f"K:{self.key}",
        ]

    def text(self) -> str:
        lines = self.header_lines()
        if len(self.voices) == 1:
            lines.append(self.voices[0][1])
        else:
            for voice_id, body in self.voices:
                lines.append(f"V:{voice_id}")
                lines.append(body)
        return "\n".join(lines) + "\n"


def key_field(key: Key) -> str:
    names = _SHARP_NAMES if sharps_in_key(key.tonic, key.mode) >= 0 else _FLAT_NAMES
    raw = names[key.tonic]
    if raw[0] == "^":
        name = raw[1] + "#"
    elif raw[0] == "_":
        name = raw[1] + "b"
    else:
        name = raw
    return name + ("m" if key.mode is Mode.MINOR else "")


def pitch_to_abc(midi_pitch: int, use_sharps: bool) -> str:
    """Explicit-accidental spelling: uppercase letters cover the middle-C octave."""
    names = _SHARP_NAMES if use_sharps else _FLAT_NAMES
    name = names[midi_pitch % 12]
    octave = midi_pitch // 12 - 1
    if octave >= 5:
        name = name[:-1] + name[-1].lower() + "'" * (octave - 5)
    else:
        name = name + "," * (4 - octave)
    return name


def multiplier(units: int) -> str:
    """ABC length multiplier for a duration of `units` grid steps (L:1/8 base)."""
    frac = Fraction(units, UNITS_PER_DEFAULT_LENGTH)
    if frac.denominator == 1:
        return "" if frac.numerator == 1 else str(frac.numerator)
    if frac.numerator == 1:
        return f"/{frac.denominator}"
    return f"{frac.numerator}/{frac.denominator}"


@dataclass(frozen=True, slots=True)
class _Event:
    onset: int  # grid units
    pitches: tuple[int, ...]
    duration: int  # grid units


def _voice_events(notes, unit: Fraction, report: LossReport) -> list[_Event]:
    """Quantize, chord-group, deduplicate, and truncate one voice's notes."""
    quantized = []
    for note in notes:
        onset = round(Fraction(note.onset_tick) / unit)
        duration = max(round(Fraction(note.duration_tick) / unit), 1)
        if onset * unit != note.onset_tick or duration * unit != note.duration_tick:
            report.quantized_notes += 1
        quantized.append((onset, note.pitch, duration))

    groups: dict[int, list[tuple[int, int]]] = {}
    for onset, pitch, duration in quantized:
        groups.setdefault(onset, []).append((pitch, duration))

    events: list[_Event] = []
    onsets = sorted(groups)
    for i, onset in enumerate(onsets):
        members = groups[onset]
        common = min(duration for _, duration in members)
        if i + 1 < len(onsets) and onset + common > onsets[i + 1]:
            report.overlap_truncations += sum(
                1 for _, duration in members if duration > onsets[i + 1] - onset
            )
            common = onsets[i + 1] - onset
        report.merged_notes += sum(1 for _, duration in members if duration > common)
        seen: set[int] = set()
        pitches = []
        for pitch, _ in sorted(members):
            if pitch in seen:
                report.dropped_notes += 1
            else:
                seen.add(pitch)
                pitches.append(pitch)
        events.append(_Event(onset=onset, pitches=tuple(pitches), duration=common))
    return events


def _render_voice(events: list[_Event], boundaries: list[int], use_sharps: bool) -> str:
    """Emit rests, notes, chords, ties, and bar lines for one voice."""
    out: list[str] = []

    def next_boundary(pos: int) -> int | None:
        for b in boundaries:
            if b > pos:
                return b
        return None

    def emit_span(start: int, duration: int, pitches: tuple[int, ...] | None) -> None:
        pos = start
        remaining = duration
        while remaining > 0:
            boundary = next_boundary(pos)
            seg = remaining if boundary is None else min(remaining, boundary - pos)
            tie = "-" if seg < remaining and pitches is not None else ""
            if pitches is None:
                out.append(f"z{multiplier(seg)}")
            elif len(pitches) == 1:
                out.append(f"{pitch_to_abc(pitches[0], use_sharps)}{multiplier(seg)}{tie}")
            else:
                inner = "".join(
                    f"{pitch_to_abc(p, use_sharps)}{multiplier(seg)}{tie}" for p in pitches
                )
                out.append(f"[{inner}]")
            pos += seg
            remaining -= seg
            if boundary is not None and pos == boundary:
                out.append("|")

    cursor = 0
    for event in events:
        if event.onset > cursor:
            emit_span(cursor, event.onset - cursor, None)
        emit_span(event.onset, event.duration, event.pitches)
        cursor = event.onset + event.duration
    return " ".join(out)


def to_abc(piece: MidiPiece, key_hint: Key | None = None) -> AbcDocument:
    """Convert a piece to an ABC document, one voice per note-bearing track.

    The key comes from key_hint or the Krumhansl-Schmuckler estimate; sharp
    keys spell black keys with ^, flat keys with _. Q: is the duration-
    weighted mean tempo rounded to an integer BPM.
    """
    if not piece.notes:
        raise EmptyPiece("cannot convert a piece with no notes")
    from .features import dominant_time_signature

    report = LossReport()
    timeline = piece.timeline
    report.extra_tempo_events = len(timeline.tempo_map) - 1
    report.extra_timesig_events = len(timeline.timesig_map) - 1

    key = key_hint if key_hint is not None else estimate_key(piece)
    use_sharps = sharps_in_key(key.tonic, key.mode) >= 0
    unit = Fraction(4 * timeline.ticks_per_quarter, UNITS_PER_WHOLE)
    boundaries = sorted({int(round(Fraction(b) / unit)) for b in bar_grid(timeline)[1:]})

    voices = []
    for track in sorted({n.track for n in piece.notes}):
        notes = [n for n in piece.notes if n.track == track]
        events = _voice_events(notes, unit, report)
        voices.append((str(track + 1), _render_voice(events, boundaries, use_sharps)))

    return AbcDocument(
        index=1,
        title=piece.title or "Untitled",
        meter=dominant_time_signature(timeline),
        unit_length="1/8",
        tempo_bpm=round(estimate_tempo(timeline)),
        key=key_field(key),
        voices=voices,
        loss_report=report,
    )


_LETTERS = set("ABCDEFGabcdefg")


def _scan_body(body: str, line: int, violations: list[AbcViolation]) -> None:
    i = 0
    depth = 0
    notes_in_chord = 0
    length = len(body)

    def violation(col: int, message: str) -> None:
        violations.append(AbcViolation(line=line, column=col + 1, message=message))

    while i < length:
        ch = body[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "|":
            if depth:
                violation(i, "bar line inside chord")
            i += 1
            continue
        if ch == "[":
            if depth:
                violation(i, "nested chord")
            depth = 1
            notes_in_chord = 0
            i += 1
            continue
        if ch == "]":
            if not depth:
                violation(i, "unmatched ]")
            elif notes_in_chord == 0:
                violation(i, "empty chord")
            depth = 0
            i += 1
            continue
        if ch == "z":
            i += 1
            i = _scan_multiplier(body, i, line, violations)
            continue
        start = i
        if ch in "^_":
            i += 1
            if i >= length or body[i] not in _LETTERS:
                violation(start, "accidental without pitch letter")
                i += 1
                continue
            ch = body[i]
        if ch not in _LETTERS:
            violation(i, f"invalid token start {body[i]!r}")
            i += 1
            i = _scan_multiplier(body, i, line, [])  # recovery: swallow any multiplier
            continue
        i += 1
        if i < length and body[i] == "'":
            while i < length and body[i] == "'":
                i += 1
        else:
            while i < length and body[i] == ",":
                i += 1
        i = _scan_multiplier(body, i, line, violations)
        if i < length and body[i] == "-":
            i += 1
        if depth:
            notes_in_chord += 1
    if depth:
        violation(length - 1 if length else 0, "unterminated chord")


def _scan_multiplier(body: str, i: int, line: int, violations: list[AbcViolation]) -> int:
    start = i
    while i < len(body) and body[i].isdigit():
        i += 1
    if i < len(body) and body[i] == "/":
        i += 1
        digits = i
        while i < len(body) and body[i].isdigit():
            i += 1
        if i == digits:
            violations.append(AbcViolation(line=line, column=start + 1, message="fraction without denominator"))
    return i


def validate_abc(doc: AbcDocument) -> list[AbcViolation]:
    """Grammar check of the rendered document; empty list means conforming."""
    violations: list[AbcViolation] = []
    text = doc.text()
    lines = text.splitlines()
    expected_prefixes = ["X:", "T:", "M:", "L:", "Q:", "K:"]
    for i, prefix in enumerate(expected_prefixes):
        if i >= len(lines) or not lines[i].startswith(prefix):
            violations.append(AbcViolation(line=i + 1, column=1, message=f"expected header {prefix}"))
            return violations
    for lineno, raw in enumerate(lines[len(expected_prefixes):], start=len(expected_prefixes) + 1):
        if raw.startswith("V:"):
            if not raw[2:].strip().isdigit():
                violations.append(AbcViolation(line=lineno, column=3, message="voice id must be an integer"))
            continue
        _scan_body(raw, lineno, violations)
    return violations
