"""Independent brute-force oracles.

Each function recomputes a quantity by the most direct method available
(per-tick enumeration, DP tables, exhaustive search) without importing the
implementation paths it is used to check.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter


def seconds_by_tick_enumeration(tpq: int, tempo_map: list[tuple[int, int]], tick: int) -> float:
    """Tick-by-tick tempo integration: sum each tick's own microsecond length."""
    total_us = 0.0
    for t in range(tick):
        us = tempo_map[0][1]
        for start, value in tempo_map:
            if start <= t:
                us = value
        total_us += us / tpq
    return total_us / 1e6


def bar_starts_by_walk(tpq: int, timesig_map: list[tuple[int, int, int]], end_tick: int) -> list[int]:
    """Walk bar by bar, re-reading the signature map at every bar start."""
    starts = []
    t = 0.0
    changes = sorted(timesig_map)
    while t <= end_tick:
        starts.append(round(t))
        num, den = 4, 4
        for start, n, d in changes:
            if start <= t:
                num, den = n, d
        nxt = t + num * (4 / den) * tpq
        upcoming = [s for s, _, _ in changes if t < s <= nxt - 1e-9]
        t = float(upcoming[0]) if upcoming else nxt
    return starts


def weighted_mean_tempo(tpq: int, tempo_map: list[tuple[int, int]], end_tick: int) -> float:
    """Second-weighted mean BPM computed from per-segment spans."""
    total_s = 0.0
    acc = 0.0
    for i, (start, us) in enumerate(tempo_map):
        end = tempo_map[i + 1][0] if i + 1 < len(tempo_map) else end_tick
        span_s = (min(end, end_tick) - start) * us / tpq / 1e6
        if span_s <= 0:
            continue
        total_s += span_s
        acc += (60e6 / us) * span_s
    return acc / total_s


def key_by_correlation(histogram: list[float]) -> tuple[int, str, float]:
    """Pure-python Krumhansl-Schmuckler: best of 24 rotated profile correlations."""
    major = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88]
    minor = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17]

    def pearson(xs: list[float], ys: list[float]) -> float:
        n = len(xs)
        mx = sum(xs) / n
        my = sum(ys) / n
        num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
        dx = math.sqrt(sum((x - mx) ** 2 for x in xs))
        dy = math.sqrt(sum((y - my) ** 2 for y in ys))
        if dx == 0 or dy == 0:
            return 0.0
        return num / (dx * dy)

    best = (-2.0, 0, "major")
    for mode_name, profile in (("major", major), ("minor", minor)):
        for tonic in range(12):
            rotated = [profile[(pc - tonic) % 12] for pc in range(12)]
            r = pearson(histogram, rotated)
            if r > best[0] + 1e-12:
                best = (r, tonic, mode_name)
    return best[1], best[2], best[0]


def ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_brute_force(hyps: list[list[str]], refs: list[list[str]], max_n: int = 4) -> float:
    """Pooled corpus BLEU with add-one smoothing on zero counts for n >= 2."""
    log_sum = 0.0
    for n in range(1, max_n + 1):
        matches = 0
        total = 0
        for hyp, ref in zip(hyps, refs):
            hc = ngram_counts(hyp, n)
            rc = ngram_counts(ref, n)
            matches += sum(min(count, rc[gram]) for gram, count in hc.items())
            total += max(len(hyp) - n + 1, 0)
        if matches == 0:
            if n == 1:
                return 0.0
            matches, total = matches + 1, total + 1
        log_sum += math.log(matches / total) / max_n
    c = sum(len(h) for h in hyps)
    r = sum(len(rf) for rf in refs)
    if c == 0:
        return 0.0
    bp = math.exp(1 - r / c) if c < r else 1.0
    return bp * math.exp(log_sum)


def lcs_table(a: list[str], b: list[str]) -> int:
    rows = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                rows[i][j] = rows[i - 1][j - 1] + 1
            else:
                rows[i][j] = max(rows[i - 1][j], rows[i][j - 1])
    return rows[len(a)][len(b)]


def rouge_l_brute_force(hyp: list[str], ref: list[str], beta: float = 1.0) -> float:
    if not hyp or not ref:
        return 0.0
    lcs = lcs_table(hyp, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    return (1 + beta * beta) * p * r / (r + beta * beta * p)


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    pairs = sorted(pairs)
    chunks = 0
    prev = None
    for h, r in pairs:
        if prev is None or h != prev[0] + 1 or r != prev[1] + 1:
            chunks += 1
        prev = (h, r)
    return chunks


def meteor_exhaustive(hyp: list[str], ref: list[str], stem) -> float:
    """Exhaustive two-stage METEOR: enumerate every maximal alignment.

    Stage 1 pairs exact-equal tokens, stage 2 pairs leftover tokens whose
    stems match; both stages take the maximum number of pairs and the final
    chunk count is minimized over all choices.
    """
    exact_sets = _all_maximal_matchings(hyp, ref, lambda a, b: a == b, frozenset(), frozenset())
    best_score = 0.0
    evaluated = False
    for exact in exact_sets:
        used_h = frozenset(h for h, _ in exact)
        used_r = frozenset(r for _, r in exact)
        stem_sets = _all_maximal_matchings(hyp, ref, lambda a, b: stem(a) == stem(b), used_h, used_r)
        for stems in stem_sets:
            pairs = list(exact) + list(stems)
            m = len(pairs)
            if m == 0:
                return 0.0
            p = m / len(hyp)
            r = m / len(ref)
            f_mean = 10 * p * r / (r + 9 * p)
            penalty = 0.5 * (_chunk_count(pairs) / m) ** 3
            score = f_mean * (1 - penalty)
            if not evaluated or score > best_score:
                best_score = score
                evaluated = True
    return best_score if evaluated else 0.0


def _all_maximal_matchings(hyp, ref, compatible, used_h, used_r):
    """Every injective pairing of maximal size between unused positions."""
    h_free = [i for i in range(len(hyp)) if i not in used_h]
    r_free = [j for j in range(len(ref)) if j not in used_r]

    best_size = 0
    results: list[frozenset] = [frozenset()]

    def recurse(h_idx: int, taken_r: frozenset, pairs: frozenset):
        nonlocal best_size, results
        if len(pairs) + (len(h_free) - h_idx) < best_size:
            return  # cannot reach a maximal matching anymore
        if h_idx == len(h_free):
            if len(pairs) > best_size:
                best_size = len(pairs)
                results = [pairs]
            elif len(pairs) == best_size:
                results.append(pairs)
            return
        h = h_free[h_idx]
        recurse(h_idx + 1, taken_r, pairs)  # leave h unmatched
        for j in r_free:
            if j not in taken_r and compatible(hyp[h], ref[j]):
                recurse(h_idx + 1, taken_r | {j}, pairs | {(h, j)})

    recurse(0, frozenset(), frozenset())
    return {p for p in results if len(p) == best_size}


def greedy_bert_score(sim: list[list[float]]) -> tuple[float, float, float]:
    """Greedy matching on an explicit (ref x hyp) similarity matrix."""
    if not sim or not sim[0]:
        return (0.0, 0.0, 0.0)
    recall = sum(max(row) for row in sim) / len(sim)
    precision = sum(max(sim[i][j] for i in range(len(sim))) for j in range(len(sim[0]))) / len(sim[0])
    if precision + recall == 0:
        return (precision, recall, 0.0)
    return (precision, recall, 2 * precision * recall / (precision + recall))


def exhaustive_best_clip_layout(total_s: float, bar_s: float, target_s: float, count: int) -> int:
    """How many disjoint target windows fit left to right on a bar grid."""
    fitted = 0
    cursor = 0.0
    for _ in range(count):
        start = math.ceil(cursor / bar_s - 1e-9) * bar_s
        if start + target_s > total_s + 1e-9:
            break
        fitted += 1
        end_bars = math.floor((start + target_s) / bar_s + 1e-9)
        cursor = max(end_bars * bar_s, start + 1e-9)
    return fitted


def abc_reexpand(body: str) -> tuple[Counter, float]:
    """Independent ABC body semantics: (sounding-pitch multiset, total units).

    Parses notes/chords/rests with its own scanner, re-expands multipliers
    into 1/32-note units, and merges tie chains so a held note counts once.
    """
    i = 0
    pitches: Counter = Counter()
    total_units = 0.0
    open_ties: dict[int, bool] = {}  # midi pitch -> previous segment ended with a tie

    def read_multiplier(text: str, j: int) -> tuple[float, int]:
        num_start = j
        while j < len(text) and text[j].isdigit():
            j += 1
        numerator = int(text[num_start:j]) if j > num_start else 1
        denominator = 1
        if j < len(text) and text[j] == "/":
            j += 1
            den_start = j
            while j < len(text) and text[j].isdigit():
                j += 1
            denominator = int(text[den_start:j])
        return 4.0 * numerator / denominator, j

    def read_note(text: str, j: int) -> tuple[int, float, bool, int]:
        accidental = 0
        if text[j] == "^":
            accidental, j = 1, j + 1
        elif text[j] == "_":
            accidental, j = -1, j + 1
        letter = text[j]
        j += 1
        base = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}[letter.upper()]
        octave = 5 if letter.islower() else 4
        while j < len(text) and text[j] == "'":
            octave, j = octave + 1, j + 1
        while j < len(text) and text[j] == ",":
            octave, j = octave - 1, j + 1
        units, j = read_multiplier(text, j)
        tied = j < len(text) and text[j] == "-"
        if tied:
            j += 1
        return (octave + 1) * 12 + base + accidental, units, tied, j

    while i < len(body):
        ch = body[i]
        if ch in " \t|":
            i += 1
        elif ch == "z":
            _, i = read_multiplier(body, i + 1)
        elif ch == "[":
            i += 1
            while body[i] != "]":
                pitch, units, tied, i = read_note(body, i)
                if not open_ties.get(pitch):
                    pitches[pitch] += 1
                total_units += units
                open_ties[pitch] = tied
            i += 1
        else:
            pitch, units, tied, i = read_note(body, i)
            if not open_ties.get(pitch):
                pitches[pitch] += 1
            total_units += units
            open_ties[pitch] = tied
    return pitches, total_units
