"""Parse a Standard MIDI File and explore its timeline.

Builds a two-track piece in memory, serializes it to SMF bytes, parses the
bytes back, and walks the tempo map: tick/second conversion and the bar grid.
"""

from miditext import (
    NoteEvent, Timeline, bar_grid, make_piece, parse_smf,
    seconds_to_ticks, ticks_to_seconds, write_smf,
)

TPQ = 480

# One melody track and one bass track; tempo drops to 60 BPM halfway through.
melody = [NoteEvent(onset_tick=i * TPQ, track=0, pitch=60 + [0, 4, 7, 12][i % 4],
                    duration_tick=TPQ // 2, velocity=90) for i in range(16)]
bass = [NoteEvent(onset_tick=i * 2 * TPQ, track=1, pitch=36, duration_tick=2 * TPQ,
                  velocity=70) for i in range(8)]
timeline = Timeline(
    ticks_per_quarter=TPQ,
    tempo_map=((0, 500_000), (8 * TPQ, 1_000_000)),  # 120 BPM then 60 BPM
    timesig_map=((0, 4, 4),),
    end_tick=16 * TPQ,
)
piece = make_piece(melody + bass, timeline, title="Demo piece")

data = write_smf(piece)
print(f"serialized to {len(data)} bytes of SMF")

parsed = parse_smf(data)
assert parsed.notes == piece.notes and parsed.timeline == piece.timeline
print(f"parsed back: {len(parsed.notes)} notes, title {parsed.title!r}")

print("\ntick -> seconds across the tempo change:")
for tick in (0, 4 * TPQ, 8 * TPQ, 12 * TPQ, 16 * TPQ):
    s = ticks_to_seconds(parsed.timeline, tick)
    print(f"  tick {tick:6d} -> {s:6.2f} s -> tick {seconds_to_ticks(parsed.timeline, s)}")

print("\nbar grid (4/4, so one bar = 1920 ticks):")
print(" ", bar_grid(parsed.timeline))
