"""Independent reference SMF writer used as a parser oracle.

Deliberately not shared with the package: bytes are assembled directly from
the published Standard MIDI File layout (big-endian chunk/header integers,
variable-length delta times) so parser tests check against a second,
independently written encoder.
"""

from __future__ import annotations

import struct


def encode_varlen(value: int) -> bytes:
    if value < 0:
        raise ValueError("delta times are non-negative")
    groups = []
    while True:
        groups.append(value & 0x7F)
        value >>= 7
        if not value:
            break
    out = bytearray()
    for i, g in enumerate(reversed(groups)):
        out.append(g | (0x80 if i < len(groups) - 1 else 0))
    return bytes(out)


def header_chunk(fmt: int, ntrks: int, division: int) -> bytes:
    return b"MThd" + struct.pack(">IHHH", 6, fmt, ntrks, division)


def track_chunk(events: list[tuple[int, bytes]]) -> bytes:
    """events: (absolute_tick, raw event bytes). End-of-track appended at the last tick."""
    body = bytearray()
    now = 0
    for tick, raw in events:
        body += encode_varlen(tick - now) + raw
        now = tick
    body += encode_varlen(0) + b"\xff\x2f\x00"
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def note_on(channel: int, pitch: int, velocity: int) -> bytes:
    return bytes([0x90 | channel, pitch, velocity])


def note_off(channel: int, pitch: int) -> bytes:
    return bytes([0x80 | channel, pitch, 64])


def program_change(channel: int, program: int) -> bytes:
    return bytes([0xC0 | channel, program])


def tempo_meta(us_per_quarter: int) -> bytes:
    return b"\xff\x51\x03" + struct.pack(">I", us_per_quarter)[1:]


def timesig_meta(numerator: int, denominator: int) -> bytes:
    dd = denominator.bit_length() - 1
    return bytes([0xFF, 0x58, 0x04, numerator, dd, 24, 8])


def single_note_format0(
    pitch: int = 60,
    velocity: int = 80,
    onset: int = 0,
    off_tick: int = 480,
    division: int = 480,
) -> bytes:
    """Format-0 file holding exactly one note on channel 0."""
    events = [
        (onset, note_on(0, pitch, velocity)),
        (off_tick, note_off(0, pitch)),
    ]
    return header_chunk(0, 1, division) + track_chunk(events)


def format1_file(division: int, tracks: list[list[tuple[int, bytes]]], fmt: int = 1) -> bytes:
    return header_chunk(fmt, len(tracks), division) + b"".join(track_chunk(t) for t in tracks)
