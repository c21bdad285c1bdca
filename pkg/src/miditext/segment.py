"""Non-overlapping, bar-aligned fixed-duration clip extraction.

Clip anchors sit at the beginning, middle, and late sections of a piece and
snap backward to bar lines; clip ends snap to the last bar line inside the
target duration. Later clips shift right past earlier ones, and clips whose
full target duration does not fit inside the piece are dropped.
"""

from __future__ import annotations

import bisect
import enum
import json
from dataclasses import asdict, dataclass

from .midi import EmptyPiece, MidiPiece, Timeline, bar_grid, seconds_to_ticks, ticks_to_seconds
from .octuple import OctupleToken, QuantConfig


class Region(enum.Enum):
    BEGIN = "begin"
    MIDDLE = "middle"
    LATE = "late"


@dataclass(frozen=True, slots=True)
class Clip:
    """One extracted excerpt; ticks refer to the source piece's timeline."""

    piece_id: str
    start_tick: int
    end_tick: int
    start_s: float
    end_s: float
    region: Region
    bar_aligned: bool

    def duration_s(self) -> float:
        return self.end_s - self.start_s


def _region_for(index: int, count: int) -> Region:
    if index == 0:
        return Region.BEGIN
    if index == count - 1:
        return Region.LATE
    return Region.MIDDLE


def select_clips(
    piece: MidiPiece,
    target_s: float = 20.0,
    count: int = 3,
    piece_id: str = "",
) -> list[Clip]:
    """Pick up to `count` disjoint clips of roughly `target_s` seconds.

    Anchors are evenly spread over [0, L - target_s] for piece duration L,
    snapped back to the previous bar line. Ends snap to the last bar line
    within the target span, falling back to exactly target_s past the start
    (bar_aligned False) when no bar line falls inside it. A clip fits only if
    its full target span lies inside the piece; unfittable clips are dropped.
    """
    if not piece.notes:
        raise EmptyPiece("cannot segment a piece with no notes")
    timeline = piece.timeline
    total_s = ticks_to_seconds(timeline, timeline.end_tick)
    bars = bar_grid(timeline)
    bar_seconds = [ticks_to_seconds(timeline, b) for b in bars]

    span = max(total_s - target_s, 0.0)
    anchors = [span * i / (count - 1) if count > 1 else 0.0 for i in range(count)]

    clips: list[Clip] = []
    prev_end_tick = 0
    for index, anchor_s in enumerate(anchors):
        i = bisect.bisect_right(bar_seconds, anchor_s + 1e-9) - 1
        start_tick = bars[max(i, 0)]
        if clips and start_tick < prev_end_tick:
            # Overlap: shift right to the first bar line not before the previous end.
            i = bisect.bisect_left(bars, prev_end_tick)
            if i >= len(bars):
                continue
            start_tick = bars[i]
        start_s = ticks_to_seconds(timeline, start_tick)
        limit_s = start_s + target_s
        if limit_s > total_s + 1e-9:
            continue  # the full target span does not fit
        j = bisect.bisect_right(bar_seconds, limit_s + 1e-9) - 1
        if j >= 0 and bars[j] > start_tick:
            end_tick, end_s, aligned = bars[j], bar_seconds[j], True
        else:
            end_tick = seconds_to_ticks(timeline, min(limit_s, total_s))
            end_s, aligned = ticks_to_seconds(timeline, end_tick), False
        if end_tick <= start_tick:
            continue
        clips.append(
            Clip(
                piece_id=piece_id,
                start_tick=start_tick,
                end_tick=end_tick,
                start_s=start_s,
                end_s=end_s,
                region=_region_for(index, count),
                bar_aligned=aligned,
            )
        )
        prev_end_tick = end_tick
    return clips


def slice_tokens(
    tokens: list[OctupleToken],
    clip: Clip,
    cfg: QuantConfig,
    timeline: Timeline,
) -> list[OctupleToken]:
    """Tokens whose onsets fall in [start_tick, end_tick), bars rebased to start at 0.

    The source timeline locates each token's onset tick on the piece's bar
    grid; clip starts are bar lines, so rebasing subtracts whole bars.
    """
    bars = bar_grid(timeline)
    step = cfg.grid_step(timeline.ticks_per_quarter)
    start_bar = bisect.bisect_right(bars, clip.start_tick) - 1
    out: list[OctupleToken] = []
    for token in tokens:
        if token.bar >= len(bars):
            continue
        onset = bars[token.bar] + token.position * step
        if clip.start_tick <= onset < clip.end_tick:
            out.append(
                OctupleToken(
                    bar=token.bar - start_bar,
                    position=token.position,
                    instrument=token.instrument,
                    pitch=token.pitch,
                    duration=token.duration,
                    velocity=token.velocity,
                    tempo=token.tempo,
                    timesig=token.timesig,
                )
            )
    return out


def clip_to_json(clip: Clip) -> str:
    record = asdict(clip)
    record["region"] = clip.region.value
    return json.dumps(record, sort_keys=True)


def clip_from_json(line: str) -> Clip:
    record = json.loads(line)
    record["region"] = Region(record["region"])
    return Clip(**record)
