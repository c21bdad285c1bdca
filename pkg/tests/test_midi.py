"""Parser, timeline, and bar-grid tests against the reference byte writer."""

import numpy as np
import pytest

import smf_reference as ref
from gen import bpm_to_us, random_piece
from oracles import bar_starts_by_walk, seconds_by_tick_enumeration

from miditext.midi import (
    MalformedHeader,
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


class TestParseSmf:
    def test_single_note_format0(self):
        data = ref.single_note_format0(pitch=60, velocity=80, onset=0, off_tick=480, division=480)
        piece = parse_smf(data)
        assert len(piece.notes) == 1
        note = piece.notes[0]
        assert note.pitch == 60
        assert note.velocity == 80
        assert note.onset_tick == 0
        assert note.duration_tick == 480
        assert piece.timeline.ticks_per_quarter == 480

    def test_missing_mthd(self):
        with pytest.raises(MalformedHeader):
            parse_smf(b"RIFF" + bytes(20))

    def test_empty_input(self):
        with pytest.raises(MalformedHeader):
            parse_smf(b"")

    def test_note_on_velocity_zero_is_note_off(self):
        events = [(0, ref.note_on(0, 64, 80)), (240, ref.note_on(0, 64, 0))]
        piece = parse_smf(ref.header_chunk(0, 1, 480) + ref.track_chunk(events))
        assert len(piece.notes) == 1
        assert piece.notes[0].duration_tick == 240

    def test_format2_rejected(self):
        data = ref.format1_file(480, [[(0, ref.note_on(0, 60, 64)), (10, ref.note_off(0, 60))]], fmt=2)
        with pytest.raises(UnsupportedFormat):
            parse_smf(data)

    def test_smpte_division_rejected(self):
        data = ref.header_chunk(0, 1, 0xE250) + ref.track_chunk([])
        with pytest.raises(UnsupportedFormat):
            parse_smf(data)

    def test_truncated_track(self):
        data = ref.single_note_format0()
        with pytest.raises(TruncatedTrack):
            parse_smf(data[:-4])

    def test_dangling_note_on_closed_at_track_end(self, caplog):
        events = [
            (0, ref.note_on(0, 60, 70)),
            (480, ref.note_on(0, 62, 70)),
            (960, ref.note_off(0, 62)),
        ]
        with caplog.at_level("WARNING"):
            piece = parse_smf(ref.header_chunk(0, 1, 480) + ref.track_chunk(events))
        assert len(piece.notes) == 2
        dangling = next(n for n in piece.notes if n.pitch == 60)
        assert dangling.duration_tick == 960
        assert any("dangling" in r.message for r in caplog.records)

    def test_defaults_inserted(self):
        piece = parse_smf(ref.single_note_format0())
        assert piece.timeline.tempo_map[0] == (0, 500_000)
        assert piece.timeline.timesig_map[0] == (0, 4, 4)

    def test_running_status(self):
        # Second note-on omits the status byte.
        body = (
            ref.encode_varlen(0) + bytes([0x90, 60, 64])
            + ref.encode_varlen(0) + bytes([64, 64])
            + ref.encode_varlen(480) + bytes([60, 0])
            + ref.encode_varlen(0) + bytes([64, 0])
            + ref.encode_varlen(0) + b"\xff\x2f\x00"
        )
        data = ref.header_chunk(0, 1, 480) + b"MTrk" + len(body).to_bytes(4, "big") + body
        piece = parse_smf(data)
        assert sorted(n.pitch for n in piece.notes) == [60, 64]
        assert all(n.duration_tick == 480 for n in piece.notes)

    def test_program_recorded_at_onset(self):
        events = [
            (0, ref.program_change(0, 40)),
            (0, ref.note_on(0, 60, 64)),
            (480, ref.note_off(0, 60)),
        ]
        piece = parse_smf(ref.header_chunk(0, 1, 480) + ref.track_chunk(events))
        assert piece.notes[0].program == 40

    def test_tempo_and_timesig_collected(self):
        track0 = [(0, ref.tempo_meta(bpm_to_us(100))), (0, ref.timesig_meta(3, 4))]
        track1 = [(0, ref.note_on(0, 60, 64)), (960, ref.note_off(0, 60))]
        piece = parse_smf(ref.format1_file(480, [track0, track1]))
        assert piece.timeline.tempo_map == ((0, bpm_to_us(100)),)
        assert piece.timeline.timesig_map == ((0, 3, 4),)
        assert piece.notes[0].track == 1

    def test_fifo_same_pitch_overlap(self):
        events = [
            (0, ref.note_on(0, 60, 64)),
            (240, ref.note_on(0, 60, 64)),
            (480, ref.note_off(0, 60)),
            (960, ref.note_off(0, 60)),
        ]
        piece = parse_smf(ref.header_chunk(0, 1, 480) + ref.track_chunk(events))
        durations = sorted(n.duration_tick for n in piece.notes)
        assert durations == [480, 720]  # first-on pairs with first-off

    def test_fuzz_never_crashes(self):
        rng = np.random.default_rng(2024)
        valid = ref.single_note_format0()
        for _ in range(400):
            if rng.random() < 0.5:
                data = bytes(rng.integers(0, 256, size=rng.integers(0, 120), dtype=np.uint8))
            else:
                corrupted = bytearray(valid)
                for _ in range(rng.integers(1, 6)):
                    corrupted[rng.integers(0, len(corrupted))] = rng.integers(0, 256)
                data = bytes(corrupted)
            try:
                piece = parse_smf(data)
                piece.validate()
            except (MalformedHeader, UnsupportedFormat, TruncatedTrack):
                pass


class TestTimeline:
    def test_tick_zero(self):
        tl = Timeline(ticks_per_quarter=480, end_tick=960)
        assert ticks_to_seconds(tl, 0) == 0.0

    def test_constant_120bpm(self):
        tl = Timeline(ticks_per_quarter=480, end_tick=960)
        assert ticks_to_seconds(tl, 480) == pytest.approx(0.5, abs=1e-12)

    def test_piecewise_oracle_example(self):
        tempo = ((0, bpm_to_us(120)), (480, bpm_to_us(60)))
        tl = Timeline(ticks_per_quarter=480, tempo_map=tempo, end_tick=960)
        expected = seconds_by_tick_enumeration(480, list(tempo), 960)
        assert expected == pytest.approx(1.5, abs=1e-9)
        assert ticks_to_seconds(tl, 960) == pytest.approx(expected, abs=1e-9)

    def test_piecewise_oracle_random(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            tempo = [(0, bpm_to_us(float(rng.uniform(40, 240))))]
            for tick in sorted(set(rng.integers(1, 2000, size=3).tolist())):
                tempo.append((tick, bpm_to_us(float(rng.uniform(40, 240)))))
            tl = Timeline(ticks_per_quarter=96, tempo_map=tuple(tempo), end_tick=2400)
            tick = int(rng.integers(0, 2401))
            assert ticks_to_seconds(tl, tick) == pytest.approx(
                seconds_by_tick_enumeration(96, tempo, tick), rel=1e-9, abs=1e-9
            )

    def test_monotone_and_inverse(self):
        tempo = ((0, bpm_to_us(120)), (480, bpm_to_us(63)), (1000, bpm_to_us(201)))
        tl = Timeline(ticks_per_quarter=480, tempo_map=tempo, end_tick=4000)
        previous = -1.0
        for tick in range(0, 4001, 13):
            s = ticks_to_seconds(tl, tick)
            assert s > previous
            previous = s
            assert abs(seconds_to_ticks(tl, s) - tick) <= 1

    def test_out_of_range(self):
        tl = Timeline(ticks_per_quarter=480, end_tick=960)
        with pytest.raises(TickOutOfRange):
            ticks_to_seconds(tl, 961)
        with pytest.raises(TickOutOfRange):
            ticks_to_seconds(tl, -1)


class TestBarGrid:
    def test_44_throughout(self):
        tl = Timeline(ticks_per_quarter=480, end_tick=3840)
        assert bar_grid(tl) == [0, 1920, 3840]

    def test_34_throughout(self):
        tl = Timeline(ticks_per_quarter=480, timesig_map=((0, 3, 4),), end_tick=2880)
        assert bar_grid(tl) == [0, 1440, 2880]

    def test_signature_change(self):
        tl = Timeline(
            ticks_per_quarter=480,
            timesig_map=((0, 4, 4), (1920, 3, 4)),
            end_tick=6240,
        )
        assert bar_grid(tl) == [0, 1920, 3360, 4800, 6240]

    def test_against_walk_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            piece = random_piece(rng)
            tl = piece.timeline
            assert bar_grid(tl) == bar_starts_by_walk(
                tl.ticks_per_quarter, list(tl.timesig_map), tl.end_tick
            )


class TestRoundTrip:
    def test_write_parse_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            piece = random_piece(rng)
            back = parse_smf(write_smf(piece))
            assert back.notes == piece.notes
            assert back.timeline == piece.timeline

    def test_title_preserved(self):
        piece = make_piece(
            [NoteEvent(onset_tick=0, track=0, pitch=60, duration_tick=10, velocity=5)],
            Timeline(ticks_per_quarter=480, end_tick=10),
            title="Nocturne",
        )
        assert parse_smf(write_smf(piece)).title == "Nocturne"

    def test_piece_invariants_on_parse(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            piece = parse_smf(write_smf(random_piece(rng)))
            piece.validate()
