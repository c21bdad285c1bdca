"""Segment a piece into 20-second clips and export ABC notation.

Clips come from the beginning, middle, and late sections, snap to bar lines,
and never overlap. The ABC export shows the text-only baseline
representation along with its information-loss report.
"""

from miditext import (
    NoteEvent, QuantConfig, Timeline, make_piece, select_clips, slice_tokens,
    ticks_to_seconds, to_abc, tokenize, validate_abc,
)

TPQ = 480
END = 120 * TPQ  # 60 seconds at 120 BPM

pattern = [0, 4, 7, 4, 0, 5, 9, 5]
notes = [NoteEvent(onset_tick=i * TPQ // 2, track=0, pitch=60 + pattern[i % 8],
                   duration_tick=TPQ // 2, velocity=75)
         for i in range(2 * END // TPQ - 4)]
piece = make_piece(notes, Timeline(ticks_per_quarter=TPQ, end_tick=END), title="March")

clips = select_clips(piece, target_s=20.0, count=3, piece_id="march")
print(f"piece lasts {ticks_to_seconds(piece.timeline, END):.0f} s; clips:")
for clip in clips:
    print(f"  {clip.region.value:6s} [{clip.start_s:6.2f}, {clip.end_s:6.2f}] s"
          f"  bar_aligned={clip.bar_aligned}")

cfg = QuantConfig()
tokens = tokenize(piece, cfg)
middle = slice_tokens(tokens, clips[1], cfg, piece.timeline)
print(f"\nmiddle clip holds {len(middle)} of {len(tokens)} tokens,"
      f" bars rebased to start at {min(t.bar for t in middle)}")

doc = to_abc(piece)
assert validate_abc(doc) == []
print("\nABC header:")
for line in doc.header_lines():
    print(" ", line)
body = doc.voices[0][1]
print("body (first 70 tokens):")
print(" ", " ".join(body.split()[:70]))
print("loss report:", doc.loss_report)
