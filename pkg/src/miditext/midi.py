"""Standard MIDI File parsing into a normalized note-event representation.

Supports format 0 and 1 files with PPQ (ticks-per-quarter) division. Note-on /
note-off pairs are matched FIFO per (channel, pitch) within each track; a
note-on with velocity 0 counts as a note-off. Dangling note-ons are closed at
end of track and reported through the module logger rather than rejected,
since transcription MIDI routinely contains them.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction

logger = logging.getLogger(__name__)

DEFAULT_TEMPO_US = 500_000  # 120 BPM
DEFAULT_TIMESIG = (4, 4)


class MidiError(Exception):
    """Base class for MIDI parsing and timeline errors."""


class MalformedHeader(MidiError):
    """Missing "MThd" marker, bad chunk length, or invalid header fields."""


class UnsupportedFormat(MidiError):
    """SMPTE division or SMF format other than 0/1."""


class TruncatedTrack(MidiError):
    """Track chunk ends before its declared length or mid-event."""


class TickOutOfRange(MidiError):
    """Tick or second position outside [0, end of timeline]."""


class EmptyPiece(MidiError):
    """Operation requires at least one note."""


@dataclass(frozen=True, slots=True, order=True)
class NoteEvent:
    """One note with onset and duration in absolute MIDI ticks."""

    onset_tick: int
    track: int
    pitch: int
    duration_tick: int
    velocity: int
    channel: int = 0
    program: int = 0

    def validate(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0..127")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1..127")
        if self.onset_tick < 0:
            raise ValueError(f"negative onset_tick {self.onset_tick}")
        if self.duration_tick <= 0:
            raise ValueError(f"non-positive duration_tick {self.duration_tick}")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel {self.channel} outside 0..15")
        if not 0 <= self.program <= 127:
            raise ValueError(f"program {self.program} outside 0..127")

    @property
    def end_tick(self) -> int:
        return self.onset_tick + self.duration_tick


@dataclass(frozen=True, slots=True)
class Timeline:
    """Tempo map, time-signature map, and tick<->second conversion state.

    Both maps are sorted strictly increasing by tick and start at tick 0
    (defaults 120 BPM / 4/4 are inserted by the parser when absent).
    """

    ticks_per_quarter: int
    tempo_map: tuple[tuple[int, int], ...] = ((0, DEFAULT_TEMPO_US),)
    timesig_map: tuple[tuple[int, int, int], ...] = ((0, 4, 4),)
    end_tick: int = 0

    def validate(self) -> None:
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")
        for name, entries in (("tempo_map", self.tempo_map), ("timesig_map", self.timesig_map)):
            if not entries or entries[0][0] != 0:
                raise ValueError(f"{name} must start at tick 0")
            ticks = [e[0] for e in entries]
            if any(b <= a for a, b in zip(ticks, ticks[1:])):
                raise ValueError(f"{name} not strictly increasing by tick")
        for _, us in self.tempo_map:
            if us <= 0:
                raise ValueError("microseconds_per_quarter must be positive")
        for _, num, den in self.timesig_map:
            if num <= 0 or den <= 0 or den & (den - 1):
                raise ValueError(f"bad time signature {num}/{den}")

    def tempo_at(self, tick: int) -> int:
        idx = bisect.bisect_right([t for t, _ in self.tempo_map], tick) - 1
        return self.tempo_map[max(idx, 0)][1]

    def timesig_at(self, tick: int) -> tuple[int, int]:
        idx = bisect.bisect_right([t for t, _, _ in self.timesig_map], tick) - 1
        _, num, den = self.timesig_map[max(idx, 0)]
        return num, den


@dataclass(frozen=True, slots=True)
class MidiPiece:
    """Parsed piece: canonical sorted notes plus the timeline."""

    notes: tuple[NoteEvent, ...]
    timeline: Timeline
    title: str | None = None
    composer: str | None = None

    def validate(self) -> None:
        self.timeline.validate()
        for note in self.notes:
            note.validate()
            if note.end_tick > self.timeline.end_tick:
                raise ValueError("note extends past timeline end_tick")
        keys = [(n.onset_tick, n.track, n.pitch) for n in self.notes]
        if keys != sorted(keys):
            raise ValueError("notes not sorted by (onset_tick, track, pitch)")

    def duration_seconds(self) -> float:
        return ticks_to_seconds(self.timeline, self.timeline.end_tick)


def _sorted_notes(notes: list[NoteEvent]) -> tuple[NoteEvent, ...]:
    # Canonical order is (onset, track, pitch); remaining fields break ties
    # so equal-key notes still serialize deterministically.
    return tuple(
        sorted(
            notes,
            key=lambda n: (n.onset_tick, n.track, n.pitch, n.duration_tick, n.velocity, n.channel, n.program),
        )
    )


def make_piece(
    notes: list[NoteEvent] | tuple[NoteEvent, ...],
    timeline: Timeline,
    title: str | None = None,
    composer: str | None = None,
) -> MidiPiece:
    """Build a MidiPiece with canonical note order, growing end_tick to cover all notes."""
    notes = _sorted_notes(list(notes))
    end = max([timeline.end_tick] + [n.end_tick for n in notes])
    piece = MidiPiece(notes=notes, timeline=replace(timeline, end_tick=end), title=title, composer=composer)
    piece.validate()
    return piece


class _Reader:
    """Byte cursor with bounds-checked reads that raise TruncatedTrack."""

    __slots__ = ("data", "pos", "end")

    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def remaining(self) -> int:
        return self.end - self.pos

    def bytes(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise TruncatedTrack(f"needed {n} bytes at offset {self.pos}, only {self.remaining()} left")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.bytes(1)[0]

    def peek_u8(self) -> int:
        if self.pos >= self.end:
            raise TruncatedTrack(f"unexpected end of data at offset {self.pos}")
        return self.data[self.pos]

    def u16(self) -> int:
        b = self.bytes(2)
        return (b[0] << 8) | b[1]

    def u32(self) -> int:
        b = self.bytes(4)
        return (b[0] << 24) | (b[1] << 16) | (b[2] << 8) | b[3]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise TruncatedTrack(f"variable-length quantity longer than 4 bytes at offset {self.pos}")


def _data_byte(reader: _Reader) -> int:
    byte = reader.u8()
    if byte & 0x80:
        raise TruncatedTrack(f"status byte 0x{byte:02x} where data byte expected at offset {reader.pos - 1}")
    return byte


@dataclass
class _TrackResult:
    notes: list[NoteEvent] = field(default_factory=list)
    tempos: list[tuple[int, int]] = field(default_factory=list)
    timesigs: list[tuple[int, int, int]] = field(default_factory=list)
    name: str | None = None
    end_tick: int = 0


def _parse_track(chunk: bytes, track_index: int) -> _TrackResult:
    reader = _Reader(chunk)
    result = _TrackResult()
    # FIFO of open (onset, velocity, program) per (channel, pitch).
    open_notes: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    channel_program = [0] * 16
    tick = 0
    running_status: int | None = None

    def close_note(channel: int, pitch: int, off_tick: int) -> None:
        stack = open_notes.get((channel, pitch))
        if not stack:
            logger.warning("track %d: note-off without note-on (pitch %d, tick %d)", track_index, pitch, off_tick)
            return
        onset, velocity, program = stack.pop(0)
        duration = off_tick - onset
        if duration <= 0:
            logger.warning("track %d: zero-length note at tick %d clamped to 1", track_index, onset)
            duration = 1
        result.notes.append(
            NoteEvent(
                onset_tick=onset,
                track=track_index,
                pitch=pitch,
                duration_tick=duration,
                velocity=velocity,
                channel=channel,
                program=program,
            )
        )

    while reader.remaining() > 0:
        tick += reader.varlen()
        status = reader.peek_u8()
        if status & 0x80:
            reader.u8()
            if status < 0xF0:
                running_status = status
        else:
            if running_status is None:
                raise TruncatedTrack(f"data byte 0x{status:02x} before any status byte")
            status = running_status

        kind = status & 0xF0
        channel = status & 0x0F

        if status == 0xFF:
            meta_type = reader.u8()
            length = reader.varlen()
            data = reader.bytes(length)
            if meta_type == 0x2F:  # end of track
                result.end_tick = tick
                break
            if meta_type == 0x51 and length == 3:
                us = (data[0] << 16) | (data[1] << 8) | data[2]
                if us > 0:
                    result.tempos.append((tick, us))
                else:
                    logger.warning("track %d: ignoring zero tempo at tick %d", track_index, tick)
            elif meta_type == 0x58 and length >= 2:
                num, dd = data[0], data[1]
                if num > 0 and dd <= 10:
                    result.timesigs.append((tick, num, 1 << dd))
                else:
                    logger.warning("track %d: ignoring bad time signature at tick %d", track_index, tick)
            elif meta_type == 0x03 and result.name is None:
                result.name = data.decode("latin-1", errors="replace").strip() or None
        elif status in (0xF0, 0xF7):  # sysex: length-prefixed payload, skipped
            reader.bytes(reader.varlen())
        elif status >= 0xF0:
            raise TruncatedTrack(f"unexpected system byte 0x{status:02x} in track")
        elif kind == 0x90:
            pitch = _data_byte(reader)
            velocity = _data_byte(reader)
            if velocity > 0:
                open_notes.setdefault((channel, pitch), []).append((tick, velocity, channel_program[channel]))
            else:
                close_note(channel, pitch, tick)
        elif kind == 0x80:
            pitch = _data_byte(reader)
            _data_byte(reader)  # release velocity, ignored
            close_note(channel, pitch, tick)
        elif kind == 0xC0:
            channel_program[channel] = _data_byte(reader)
        elif kind == 0xD0:
            _data_byte(reader)
        elif kind in (0xA0, 0xB0, 0xE0):
            _data_byte(reader)
            _data_byte(reader)
        else:  # pragma: no cover - all 0x80..0xEF kinds handled above
            raise TruncatedTrack(f"unhandled status byte 0x{status:02x}")
    else:
        result.end_tick = tick

    result.end_tick = max([result.end_tick] + [n.end_tick for n in result.notes])
    dangling = sum(len(stack) for stack in open_notes.values())
    if dangling:
        logger.warning("track %d: %d dangling note-on(s) closed at track end", track_index, dangling)
        for (channel, pitch), stack in sorted(open_notes.items()):
            for onset, velocity, program in stack:
                duration = max(result.end_tick - onset, 1)
                result.notes.append(
                    NoteEvent(
                        onset_tick=onset,
                        track=track_index,
                        pitch=pitch,
                        duration_tick=duration,
                        velocity=velocity,
                        channel=channel,
                        program=program,
                    )
                )
    return result


def _merge_map(entries: list, default: tuple) -> tuple:
    """Sort map entries by tick, last entry wins per tick, default inserted at 0."""
    by_tick: dict[int, tuple] = {}
    for entry in entries:
        by_tick[entry[0]] = entry
    if 0 not in by_tick:
        by_tick[0] = (0, *default)
    return tuple(by_tick[t] for t in sorted(by_tick))


def parse_smf(data: bytes) -> MidiPiece:
    """Parse Standard MIDI File bytes into a MidiPiece.

    Raises MalformedHeader for a missing "MThd" marker or bad header fields,
    UnsupportedFormat for format-2 or SMPTE-division files, and TruncatedTrack
    when chunk contents end early or events are corrupt.
    """
    if not data:
        raise MalformedHeader("empty input")
    reader = _Reader(data)
    try:
        marker = reader.bytes(4)
    except TruncatedTrack as exc:
        raise MalformedHeader("file shorter than chunk marker") from exc
    if marker != b"MThd":
        raise MalformedHeader("missing MThd marker")
    try:
        header_len = reader.u32()
        if header_len < 6:
            raise MalformedHeader(f"header length {header_len} < 6")
        fmt = reader.u16()
        ntrks = reader.u16()
        division = reader.u16()
        reader.bytes(header_len - 6)
    except TruncatedTrack as exc:
        raise MalformedHeader("truncated header chunk") from exc
    if fmt not in (0, 1):
        raise UnsupportedFormat(f"SMF format {fmt} not supported (only 0 and 1)")
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE division not supported (PPQ only)")
    if division == 0:
        raise MalformedHeader("zero ticks-per-quarter division")

    tracks: list[_TrackResult] = []
    while reader.remaining() > 0 and len(tracks) < ntrks:
        chunk_id = reader.bytes(4)
        chunk_len = reader.u32()
        chunk = reader.bytes(chunk_len)
        if chunk_id != b"MTrk":
            continue  # alien chunks are skipped per the SMF spec
        tracks.append(_parse_track(chunk, len(tracks)))
    if len(tracks) < ntrks:
        raise TruncatedTrack(f"header declared {ntrks} tracks, found {len(tracks)}")

    notes: list[NoteEvent] = []
    tempos: list[tuple[int, int]] = []
    timesigs: list[tuple[int, int, int]] = []
    title = None
    end_tick = 0
    for track in tracks:
        notes.extend(track.notes)
        tempos.extend(track.tempos)
        timesigs.extend(track.timesigs)
        if title is None:
            title = track.name
        end_tick = max(end_tick, track.end_tick)

    timeline = Timeline(
        ticks_per_quarter=division,
        tempo_map=_merge_map(tempos, (DEFAULT_TEMPO_US,)),
        timesig_map=_merge_map(timesigs, DEFAULT_TIMESIG),
        end_tick=end_tick,
    )
    return make_piece(notes, timeline, title=title)


def ticks_to_seconds(timeline: Timeline, tick: int) -> float:
    """Map an absolute tick to seconds by piecewise-linear integration of the tempo map."""
    if not 0 <= tick <= timeline.end_tick:
        raise TickOutOfRange(f"tick {tick} outside [0, {timeline.end_tick}]")
    seconds = 0.0
    tempo_map = timeline.tempo_map
    for i, (seg_start, us_per_quarter) in enumerate(tempo_map):
        if seg_start >= tick:
            break
        seg_end = tempo_map[i + 1][0] if i + 1 < len(tempo_map) else tick
        span = min(tick, seg_end) - seg_start
        seconds += span * us_per_quarter / (timeline.ticks_per_quarter * 1e6)
    return seconds


def seconds_to_ticks(timeline: Timeline, seconds: float) -> int:
    """Inverse of ticks_to_seconds, rounded to the nearest tick."""
    total = ticks_to_seconds(timeline, timeline.end_tick)
    if not 0 <= seconds <= total + 1e-9:
        raise TickOutOfRange(f"{seconds} s outside [0, {total}]")
    tempo_map = timeline.tempo_map
    elapsed = 0.0
    for i, (seg_start, us_per_quarter) in enumerate(tempo_map):
        seg_end = tempo_map[i + 1][0] if i + 1 < len(tempo_map) else timeline.end_tick
        per_tick = us_per_quarter / (timeline.ticks_per_quarter * 1e6)
        seg_seconds = (seg_end - seg_start) * per_tick
        if seconds <= elapsed + seg_seconds or i + 1 == len(tempo_map):
            tick = seg_start + (seconds - elapsed) / per_tick
            return min(int(round(tick)), timeline.end_tick)
        elapsed += seg_seconds
    return timeline.end_tick


def bar_length_ticks(num: int, den: int, ticks_per_quarter: int) -> Fraction:
    """Length of one num/den bar in ticks (exact rational)."""
    return Fraction(num * 4 * ticks_per_quarter, den)


def bar_grid(timeline: Timeline) -> list[int]:
    """Bar start ticks over [0, end_tick]; the grid restarts at each time-signature change."""
    grid: list[int] = []
    timesig_map = timeline.timesig_map
    for i, (seg_start, num, den) in enumerate(timesig_map):
        seg_end = timesig_map[i + 1][0] if i + 1 < len(timesig_map) else None
        bar_len = bar_length_ticks(num, den, timeline.ticks_per_quarter)
        t = Fraction(seg_start)
        while t <= timeline.end_tick and (seg_end is None or t < seg_end):
            grid.append(int(round(t)))
            t += bar_len
    return grid


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _track_chunk(events: list[tuple[int, bytes]], end_tick: int) -> bytes:
    """Assemble an MTrk chunk from (tick, payload) events sorted by tick."""
    body = bytearray()
    tick = 0
    for event_tick, payload in events:
        body += _vlq(event_tick - tick)
        body += payload
        tick = event_tick
    body += _vlq(max(end_tick - tick, 0))
    body += b"\xff\x2f\x00"
    return b"MTrk" + len(body).to_bytes(4, "big") + bytes(body)


def write_smf(piece: MidiPiece) -> bytes:
    """Serialize a MidiPiece as a format-1 SMF byte string.

    The conductor track carries tempo/time-signature maps and the title; each
    note track index maps to its own MTrk chunk. parse_smf(write_smf(p)) == p
    for pieces whose same-pitch notes do not overlap within one channel.
    """
    timeline = piece.timeline

    def note_events(track_index: int) -> list[tuple[int, int, bytes]]:
        # Note-offs sort before note-ons at equal ticks so FIFO re-pairing on
        # parse reproduces the original notes.
        events: list[tuple[int, int, bytes]] = []
        channel_program = [0] * 16
        for note in sorted((n for n in piece.notes if n.track == track_index), key=lambda n: n.onset_tick):
            if channel_program[note.channel] != note.program:
                events.append((note.onset_tick, 1, bytes([0xC0 | note.channel, note.program])))
                channel_program[note.channel] = note.program
            events.append((note.onset_tick, 2, bytes([0x90 | note.channel, note.pitch, note.velocity])))
            events.append((note.end_tick, 0, bytes([0x80 | note.channel, note.pitch, 0])))
        return events

    # Track 0 carries tempo/time-signature maps and the title alongside any
    # track-0 notes, so parsed track indices match the original piece.
    first: list[tuple[int, int, bytes]] = []
    if piece.title:
        name = piece.title.encode("latin-1", errors="replace")
        first.append((0, 0, b"\xff\x03" + _vlq(len(name)) + name))
    for tick, us in timeline.tempo_map:
        first.append((tick, 0, b"\xff\x51\x03" + us.to_bytes(3, "big")))
    for tick, num, den in timeline.timesig_map:
        first.append((tick, 0, bytes([0xFF, 0x58, 0x04, num, den.bit_length() - 1, 24, 8])))
    first.extend(note_events(0))

    n_tracks = max([n.track for n in piece.notes] + [0]) + 1
    chunks = []
    for track_index in range(n_tracks):
        events = first if track_index == 0 else note_events(track_index)
        events.sort(key=lambda e: (e[0], e[1]))
        chunks.append(_track_chunk([(t, p) for t, _, p in events], timeline.end_tick))

    header = b"MThd" + (6).to_bytes(4, "big") + (1).to_bytes(2, "big")
    header += len(chunks).to_bytes(2, "big") + timeline.ticks_per_quarter.to_bytes(2, "big")
    return header + b"".join(chunks)
