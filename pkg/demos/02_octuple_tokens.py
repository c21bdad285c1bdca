"""Tokenize a piece into OctupleMIDI events and back.

Each note becomes one 8-field token (bar, position, instrument, pitch,
duration, velocity, tempo, time signature). Detokenizing reconstructs a
piece at bin-center values, and re-tokenizing that piece reproduces the
token list exactly: quantization is a fixed point.
"""

from miditext import NoteEvent, QuantConfig, Timeline, detokenize, make_piece, tokenize
from miditext.octuple import tokens_to_lines

TPQ = 480
cfg = QuantConfig()

notes = [
    NoteEvent(onset_tick=0, track=0, pitch=60, duration_tick=TPQ, velocity=80),
    NoteEvent(onset_tick=0, track=0, pitch=64, duration_tick=TPQ, velocity=80),
    NoteEvent(onset_tick=TPQ, track=0, pitch=67, duration_tick=TPQ // 2, velocity=96),
    NoteEvent(onset_tick=2 * TPQ + 7, track=0, pitch=72, duration_tick=TPQ + 11, velocity=55),
]
timeline = Timeline(ticks_per_quarter=TPQ, tempo_map=((0, 500_000),), end_tick=4 * TPQ)
piece = make_piece(notes, timeline)

tokens = tokenize(piece, cfg)
print("tokens (bar position instrument pitch duration velocity tempo timesig):")
print(tokens_to_lines(tokens))

print("quantization tables at work:")
print(f"  velocity 80 -> bin {cfg.velocity_to_bin(80)} -> back to {cfg.bin_to_velocity(19)}")
print(f"  120 BPM     -> bin {cfg.bpm_to_bin(120)} -> back to {cfg.bin_to_bpm(35):.1f} BPM")
print(f"  off-grid onset {2 * TPQ + 7} snapped to position {tokens[-1].position}"
      f" (grid step = {cfg.grid_step(TPQ)} ticks)")

rebuilt = detokenize(tokens, cfg)
print(f"\ndetokenized piece: {len(rebuilt.notes)} notes at {rebuilt.timeline.ticks_per_quarter} TPQ")
assert tokenize(rebuilt, cfg) == tokens
print("fixed point holds: tokenize(detokenize(T)) == T")
