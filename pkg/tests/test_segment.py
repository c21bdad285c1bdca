"""Clip selection and token slicing tests."""

import numpy as np
import pytest

from gen import bpm_to_us, random_long_piece, random_piece
from oracles import exhaustive_best_clip_layout

from miditext.midi import EmptyPiece, MidiPiece, NoteEvent, Timeline, make_piece, ticks_to_seconds
from miditext.octuple import QuantConfig, tokenize
from miditext.segment import (
    Clip,
    Region,
    clip_from_json,
    clip_to_json,
    select_clips,
    slice_tokens,
)

CFG = QuantConfig()


def constant_piece(seconds: float, bpm: float = 120, timesig=(4, 4)) -> MidiPiece:
    tpq = 480
    us = bpm_to_us(bpm)
    end_tick = round(seconds * 1e6 * tpq / us)
    notes = [
        NoteEvent(onset_tick=t, track=0, pitch=60 + (t // 480) % 12, duration_tick=240, velocity=80)
        for t in range(0, end_tick - 480, 480)
    ]
    timeline = Timeline(
        ticks_per_quarter=tpq,
        tempo_map=((0, us),),
        timesig_map=((0, *timesig),),
        end_tick=end_tick,
    )
    return make_piece(notes, timeline)


class TestSelectClips:
    def test_100s_piece_gives_three_clips(self):
        clips = select_clips(constant_piece(100.0), piece_id="p")
        assert [c.region for c in clips] == [Region.BEGIN, Region.MIDDLE, Region.LATE]
        assert all(c.bar_aligned for c in clips)
        for clip in clips:
            assert 18.0 - 1e-9 <= clip.duration_s() <= 20.0 + 1e-9
        for a, b in zip(clips, clips[1:]):
            assert a.end_tick <= b.start_tick

    def test_exactly_20s_piece_gives_one_clip(self):
        piece = constant_piece(20.0)
        clips = select_clips(piece)
        assert len(clips) == 1
        assert clips[0].start_tick == 0
        assert clips[0].end_tick == piece.timeline.end_tick

    def test_59s_piece_gives_two_clips(self):
        clips = select_clips(constant_piece(59.0))
        assert len(clips) == 2

    def test_counts_match_layout_oracle(self):
        # Constant 4/4 at 120 BPM: bars last exactly 2 s.
        for seconds in np.linspace(5, 130, 60):
            piece = constant_piece(float(seconds))
            total = ticks_to_seconds(piece.timeline, piece.timeline.end_tick)
            expected = exhaustive_best_clip_layout(total, 2.0, 20.0, 3)
            assert len(select_clips(piece)) == expected, f"length {seconds}"

    def test_empty_piece(self):
        with pytest.raises(EmptyPiece):
            select_clips(MidiPiece(notes=(), timeline=Timeline(ticks_per_quarter=480)))

    def test_fuzzed_non_overlap_sorted(self):
        rng = np.random.default_rng(53)
        for _ in range(100):
            piece = random_piece(rng)
            clips = select_clips(piece, piece_id="x")
            for a, b in zip(clips, clips[1:]):
                assert a.end_tick <= b.start_tick
                assert a.start_tick < b.start_tick

    def test_long_pieces_give_exactly_three(self):
        rng = np.random.default_rng(59)
        for _ in range(60):
            piece = random_long_piece(rng, min_seconds=60.0)
            clips = select_clips(piece)
            assert len(clips) == 3
            for clip in clips:
                assert 18.0 - 1e-9 <= clip.duration_s() <= 20.0 + 1e-9

    def test_starts_are_bar_lines(self):
        rng = np.random.default_rng(61)
        from miditext.midi import bar_grid

        for _ in range(40):
            piece = random_piece(rng)
            bars = set(bar_grid(piece.timeline))
            for clip in select_clips(piece):
                assert clip.start_tick in bars


class TestSliceTokens:
    def test_whole_piece_identity(self):
        piece = constant_piece(40.0)
        tokens = tokenize(piece, CFG)
        clip = Clip(piece_id="p", start_tick=0, end_tick=piece.timeline.end_tick,
                    start_s=0.0, end_s=40.0, region=Region.BEGIN, bar_aligned=True)
        assert slice_tokens(tokens, clip, CFG, piece.timeline) == tokens

    def test_bar_rebase(self):
        piece = constant_piece(60.0)
        tokens = tokenize(piece, CFG)
        start_tick = 10 * 1920
        clip = Clip(piece_id="p", start_tick=start_tick, end_tick=start_tick + 4 * 1920,
                    start_s=20.0, end_s=28.0, region=Region.MIDDLE, bar_aligned=True)
        sliced = slice_tokens(tokens, clip, CFG, piece.timeline)
        assert sliced
        assert min(t.bar for t in sliced) == 0
        original_bar12 = [t for t in tokens if t.bar == 12]
        rebased_bar2 = [t for t in sliced if t.bar == 2]
        assert [t.pitch for t in rebased_bar2] == [t.pitch for t in original_bar12]

    def test_empty_window(self):
        piece = constant_piece(40.0)
        tokens = tokenize(piece, CFG)
        clip = Clip(piece_id="p", start_tick=piece.timeline.end_tick - 1,
                    end_tick=piece.timeline.end_tick, start_s=0.0, end_s=0.0,
                    region=Region.LATE, bar_aligned=False)
        assert slice_tokens(tokens, clip, CFG, piece.timeline) == []

    def test_sliced_tokens_valid(self):
        from miditext.octuple import validate_token

        rng = np.random.default_rng(67)
        for _ in range(30):
            piece = random_long_piece(rng)
            tokens = tokenize(piece, CFG)
            for clip in select_clips(piece):
                sliced = slice_tokens(tokens, clip, CFG, piece.timeline)
                for token in sliced:
                    validate_token(token, CFG)
                if sliced:
                    assert min(t.bar for t in sliced) >= 0

    def test_dense_piece_rebases_to_zero(self):
        # With an onset in every bar, the clip's first bar must map to bar 0.
        piece = constant_piece(80.0)
        tokens = tokenize(piece, CFG)
        for clip in select_clips(piece):
            sliced = slice_tokens(tokens, clip, CFG, piece.timeline)
            assert sliced and min(t.bar for t in sliced) == 0


class TestClipJson:
    def test_round_trip(self):
        clip = Clip(piece_id="p", start_tick=0, end_tick=960, start_s=0.0,
                    end_s=1.0, region=Region.BEGIN, bar_aligned=True)
        assert clip_from_json(clip_to_json(clip)) == clip
