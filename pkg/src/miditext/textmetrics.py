"""Text-generation metrics: BLEU, METEOR, ROUGE-L, and BERTScore.

All metrics operate on token lists from tokenize_text and score one
reference per hypothesis. BLEU is corpus-level over pooled n-gram counts
with add-one smoothing on zero counts for n >= 2. METEOR runs an exact
two-stage alignment (exact matches, then Porter-stem matches) choosing the
minimum-chunk assignment. BERTScore is greedy cosine matching over a
pluggable embedding provider and is reported without baseline rescaling.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .stemmer import stem

EmbeddingProvider = Callable[[Sequence[str]], np.ndarray]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class EmptyCorpus(ValueError):
    """Corpus-level metric called with no samples."""


class ProviderDimensionMismatch(ValueError):
    """Embedding provider returned the wrong number or shape of vectors."""


def tokenize_text(text: str) -> list[str]:
    """Lowercase word tokens with punctuation split into separate tokens."""
    return _TOKEN_RE.findall(text.lower())


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Corpus BLEU from pooled clipped n-gram counts, one reference per hypothesis."""
    if not hyps or not refs:
        raise EmptyCorpus("bleu needs at least one hypothesis/reference pair")
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    hyp_len = sum(len(h) for h in hyps)
    ref_len = sum(len(r) for r in refs)
    if hyp_len == 0:
        return 0.0
    log_precision_sum = 0.0
    for n in range(1, max_n + 1):
        matches = 0
        total = 0
        for hyp, ref in zip(hyps, refs):
            ref_counts = _ngram_counts(ref, n)
            for gram, count in _ngram_counts(hyp, n).items():
                matches += min(count, ref_counts[gram])
            total += max(len(hyp) - n + 1, 0)
        if matches == 0:
            if n == 1:
                return 0.0
            matches, total = 1, total + 1
        log_precision_sum += math.log(matches / total)
    brevity = math.exp(1 - ref_len / hyp_len) if hyp_len < ref_len else 1.0
    return brevity * math.exp(log_precision_sum / max_n)


def sentence_bleu(hyp: Sequence[str], ref: Sequence[str], max_n: int = 4) -> float:
    return bleu([hyp], [ref], max_n=max_n)


def rouge_l(hyp: Sequence[str], ref: Sequence[str], beta: float = 1.0) -> float:
    """LCS-based F-measure; 0 when either side is empty or nothing matches."""
    if not hyp or not ref:
        return 0.0
    previous = [0] * (len(ref) + 1)
    for token in hyp:
        current = [0]
        for j, ref_token in enumerate(ref, start=1):
            if token == ref_token:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[-1]))
        previous = current
    lcs = previous[-1]
    if lcs == 0:
        return 0.0
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    return (1 + beta * beta) * precision * recall / (recall + beta * beta * precision)


class _AlignmentSearch:
    """Branch-and-bound over match assignments, minimizing chunk count.

    Stage quotas fix how many pairs each word type (exact stage) and each
    stem class (stem stage, on the tokens left over after exact matching)
    must contribute, so every completed assignment is a maximal METEOR
    alignment; only the pair positions vary. Branches that can no longer
    meet a quota are pruned. The node budget guards pathological repetitive
    inputs; the first DFS descent already reaches a valid maximal alignment,
    so exhausting the budget degrades optimality, never validity.
    """

    def __init__(self, hyp: Sequence[str], ref: Sequence[str],
                 exact_quota: Counter, stem_quota: Counter, node_budget: int = 250_000):
        self.hyp = hyp
        self.ref = ref
        self.hyp_stems = [stem(w) for w in hyp]
        self.ref_stems = [stem(w) for w in ref]
        self.exact_left = exact_quota.copy()
        self.stem_left = stem_quota.copy()
        self.rem_word = Counter(hyp)
        self.words_by_stem: dict[str, set[str]] = {}
        for word, word_stem in zip(hyp, self.hyp_stems):
            self.words_by_stem.setdefault(word_stem, set()).add(word)
        self.node_budget = node_budget
        self.nodes = 0
        self.best_chunks = 1 << 30

    def run(self) -> int:
        self.ref_free = [True] * len(self.ref)
        self._descend(0, None, 0)
        return self.best_chunks

    def _feasible(self, word: str, word_stem: str) -> bool:
        """Can the remaining hypothesis suffix still fill both quotas?"""
        if self.rem_word[word] < self.exact_left.get(word, 0):
            return False
        surplus = sum(
            max(self.rem_word[w] - self.exact_left.get(w, 0), 0)
            for w in self.words_by_stem.get(word_stem, ())
        )
        return surplus >= self.stem_left.get(word_stem, 0)

    def _descend(self, h: int, last_pair: tuple[int, int] | None, chunks: int) -> None:
        if chunks >= self.best_chunks or self.nodes > self.node_budget:
            return
        self.nodes += 1
        if h == len(self.hyp):
            self.best_chunks = chunks
            return
        word = self.hyp[h]
        word_stem = self.hyp_stems[h]
        self.rem_word[word] -= 1

        moves: list[tuple[Counter, str, list[int]]] = []
        if self.exact_left.get(word):
            exact_refs = [j for j in range(len(self.ref))
                          if self.ref_free[j] and self.ref[j] == word]
            moves.append((self.exact_left, word, exact_refs))
        if self.stem_left.get(word_stem):
            stem_refs = [j for j in range(len(self.ref))
                         if self.ref_free[j] and self.ref[j] != word
                         and self.ref_stems[j] == word_stem]
            moves.append((self.stem_left, word_stem, stem_refs))

        for quota, key, candidates in moves:
            if last_pair is not None and last_pair[1] + 1 in candidates:
                # Try the chunk-extending ref position first.
                candidates.remove(last_pair[1] + 1)
                candidates.insert(0, last_pair[1] + 1)
            quota[key] -= 1
            if self._feasible(word, word_stem):
                for j in candidates:
                    extends = (last_pair is not None
                               and last_pair[0] + 1 == h and last_pair[1] + 1 == j)
                    self.ref_free[j] = False
                    self._descend(h + 1, (h, j), chunks + (0 if extends else 1))
                    self.ref_free[j] = True
            quota[key] += 1

        if self._feasible(word, word_stem):  # leave h unmatched
            self._descend(h + 1, last_pair, chunks)
        self.rem_word[word] += 1


def _meteor_quotas(hyp: Sequence[str], ref: Sequence[str]) -> tuple[Counter, Counter]:
    """Per-type exact quotas, then per-stem-class quotas on the leftovers."""
    hyp_counts = Counter(hyp)
    ref_counts = Counter(ref)
    exact = Counter()
    for word in set(hyp_counts) & set(ref_counts):
        exact[word] = min(hyp_counts[word], ref_counts[word])

    hyp_left = Counter()
    ref_left = Counter()
    for word, count in hyp_counts.items():
        leftover = count - exact.get(word, 0)
        if leftover:
            hyp_left[stem(word)] += leftover
    for word, count in ref_counts.items():
        leftover = count - exact.get(word, 0)
        if leftover:
            ref_left[stem(word)] += leftover
    stems = Counter()
    for word_stem in set(hyp_left) & set(ref_left):
        quota = min(hyp_left[word_stem], ref_left[word_stem])
        if quota:
            stems[word_stem] = quota
    return exact, stems


def meteor(hyp: Sequence[str], ref: Sequence[str]) -> float:
    """Two-stage METEOR: F_mean weighted toward recall times a chunk penalty.

    score = F_mean * (1 - 0.5 * (chunks / matches)^3) with
    F_mean = 10PR / (R + 9P); zero when nothing matches.
    """
    if not hyp or not ref:
        return 0.0
    exact, stems = _meteor_quotas(hyp, ref)
    matches = sum(exact.values()) + sum(stems.values())
    if matches == 0:
        return 0.0
    chunks = _AlignmentSearch(hyp=hyp, ref=ref, exact_quota=exact, stem_quota=stems).run()
    precision = matches / len(hyp)
    recall = matches / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1 - penalty)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = np.where(norms > 0, matrix / norms, 0.0)
    return normalized


def bert_score(
    hyp: Sequence[str],
    ref: Sequence[str],
    provider: EmbeddingProvider,
) -> tuple[float, float, float]:
    """Greedy cosine matching without rescaling: returns (precision, recall, F1)."""
    if not hyp or not ref:
        return (0.0, 0.0, 0.0)
    hyp_emb = np.asarray(provider(list(hyp)), dtype=np.float64)
    ref_emb = np.asarray(provider(list(ref)), dtype=np.float64)
    if hyp_emb.ndim != 2 or hyp_emb.shape[0] != len(hyp):
        raise ProviderDimensionMismatch(
            f"provider returned shape {hyp_emb.shape} for {len(hyp)} tokens"
        )
    if ref_emb.ndim != 2 or ref_emb.shape[0] != len(ref) or ref_emb.shape[1] != hyp_emb.shape[1]:
        raise ProviderDimensionMismatch(
            f"provider returned shape {ref_emb.shape} for {len(ref)} tokens of dim {hyp_emb.shape[1]}"
        )
    similarity = _normalize_rows(ref_emb) @ _normalize_rows(hyp_emb).T
    recall = float(similarity.max(axis=1).mean())
    precision = float(similarity.max(axis=0).mean())
    if precision + recall == 0:
        return (precision, recall, 0.0)
    return (precision, recall, 2 * precision * recall / (precision + recall))


class HashEmbeddingProvider:
    """Deterministic per-token embeddings seeded from a token content hash.

    The test/reference provider: reproducible bit-for-bit across runs and
    processes, no model weights involved.
    """

    def __init__(self, dim: int = 32, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def __call__(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.empty((len(tokens), self.dim))
        for i, token in enumerate(tokens):
            digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            out[i] = rng.standard_normal(self.dim)
        return out


class FileEmbeddingProvider:
    """Embeddings from a text file: each line is a token followed by its values.

    Unknown tokens embed as zero vectors (cosine similarity 0).
    """

    def __init__(self, path):
        self.table: dict[str, np.ndarray] = {}
        dim = None
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                parts = line.split()
                if not parts:
                    continue
                vector = np.array([float(v) for v in parts[1:]])
                if dim is None:
                    dim = len(vector)
                elif len(vector) != dim:
                    raise ProviderDimensionMismatch(f"inconsistent dimension for {parts[0]!r}")
                self.table[parts[0]] = vector
        self.dim = dim or 1

    def __call__(self, tokens: Sequence[str]) -> np.ndarray:
        return np.stack([self.table.get(t, np.zeros(self.dim)) for t in tokens])


@dataclass(slots=True)
class SampleScores:
    bleu: float
    meteor: float
    rouge_l: float
    bert_score: float | None = None


@dataclass(slots=True)
class MetricReport:
    """Corpus metrics plus per-sample values.

    Corpus BLEU pools n-gram counts across samples; the other corpus values
    are means of per-sample scores. bert_score stays None when no embedding
    provider is configured.
    """

    bleu: float
    meteor: float
    rouge_l: float
    bert_score: float | None
    per_sample: list[SampleScores]

    def as_dict(self) -> dict:
        return {
            "variants": {
                "bleu": "corpus, pooled counts, max_n=4, add-one smoothing on zero counts for n>=2",
                "meteor": "exact+Porter-stem stages, min-chunk alignment, penalty 0.5*(ch/m)^3",
                "rouge_l": "LCS F-measure, beta=1",
                "bert_score": "greedy cosine matching, no rescaling, F1",
            },
            "bleu": self.bleu,
            "meteor": self.meteor,
            "rouge_l": self.rouge_l,
            "bert_score": self.bert_score,
            "per_sample": [
                {"bleu": s.bleu, "meteor": s.meteor, "rouge_l": s.rouge_l, "bert_score": s.bert_score}
                for s in self.per_sample
            ],
        }


def corpus_report(
    hyp_texts: Sequence[str],
    ref_texts: Sequence[str],
    provider: EmbeddingProvider | None = None,
) -> MetricReport:
    """Tokenize and score a parallel corpus of hypothesis/reference strings."""
    if not hyp_texts or not ref_texts:
        raise EmptyCorpus("no samples to score")
    if len(hyp_texts) != len(ref_texts):
        raise ValueError(f"{len(hyp_texts)} hypotheses vs {len(ref_texts)} references")
    hyps = [tokenize_text(t) for t in hyp_texts]
    refs = [tokenize_text(t) for t in ref_texts]
    per_sample = []
    for hyp, ref in zip(hyps, refs):
        bert_f = None
        if provider is not None:
            bert_f = bert_score(hyp, ref, provider)[2]
        per_sample.append(
            SampleScores(
                bleu=sentence_bleu(hyp, ref),
                meteor=meteor(hyp, ref),
                rouge_l=rouge_l(hyp, ref),
                bert_score=bert_f,
            )
        )
    n = len(per_sample)
    return MetricReport(
        bleu=bleu(hyps, refs),
        meteor=sum(s.meteor for s in per_sample) / n,
        rouge_l=sum(s.rouge_l for s in per_sample) / n,
        bert_score=(sum(s.bert_score for s in per_sample) / n) if provider is not None else None,
        per_sample=per_sample,
    )
