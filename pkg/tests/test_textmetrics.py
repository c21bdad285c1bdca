"""Metric implementations versus independent brute-force oracles."""

import math

import numpy as np
import pytest

from gen import random_sentence
from oracles import (
    bleu_brute_force,
    greedy_bert_score,
    meteor_exhaustive,
    rouge_l_brute_force,
)

from miditext.stemmer import stem
from miditext.textmetrics import (
    EmptyCorpus,
    HashEmbeddingProvider,
    ProviderDimensionMismatch,
    bert_score,
    bleu,
    corpus_report,
    meteor,
    rouge_l,
    sentence_bleu,
    tokenize_text,
)


class TestTokenize:
    def test_punctuation_separated(self):
        assert tokenize_text("The cat, sat.") == ["the", "cat", ",", "sat", "."]

    def test_empty(self):
        assert tokenize_text("") == []

    def test_whitespace_collapsed(self):
        assert tokenize_text("A  B") == ["a", "b"]

    def test_no_empty_tokens(self):
        assert all(tokenize_text("  a .. b  !? ") )


class TestPorterStemmer:
    # Canonical pairs traceable through the published rule set.
    CASES = [
        ("caresses", "caress"), ("ponies", "poni"), ("ties", "ti"),
        ("caress", "caress"), ("cats", "cat"), ("feed", "feed"),
        ("plastered", "plaster"), ("motoring", "motor"), ("sing", "sing"),
        ("hopping", "hop"), ("sized", "size"), ("falling", "fall"),
        ("hissing", "hiss"), ("failing", "fail"), ("happy", "happi"),
        ("sky", "sky"), ("relational", "relat"), ("conditional", "condit"),
        ("rational", "ration"), ("digitizer", "digit"), ("electrical", "electr"),
        ("electriciti", "electr"), ("hopeful", "hope"), ("goodness", "good"),
        ("formaliti", "formal"), ("adjustable", "adjust"), ("defensible", "defens"),
        ("adoption", "adopt"), ("rate", "rate"), ("cease", "ceas"),
        ("controll", "control"), ("roll", "roll"),
    ]

    @pytest.mark.parametrize("word,expected", CASES)
    def test_known_words(self, word, expected):
        assert stem(word) == expected

    def test_short_words_untouched(self):
        assert stem("is") == "is"
        assert stem("a") == "a"

    def test_non_alpha_untouched(self):
        assert stem("120") == "120"
        assert stem(",") == ","


class TestBleu:
    def test_perfect_match(self):
        tokens = tokenize_text("a small piece in c major")
        assert bleu([tokens], [tokens]) == pytest.approx(1.0)

    def test_disjoint_unigrams(self):
        assert bleu([["a", "b"]], [["c", "d"]]) == 0.0

    def test_reference_example(self):
        hyp = tokenize_text("the cat sat")
        ref = tokenize_text("the cat sat down")
        # Precisions 3/3, 2/2, 1/1, smoothed 4-gram 1/1; BP = exp(1 - 4/3).
        assert bleu([hyp], [ref]) == pytest.approx(math.exp(1 - 4 / 3), abs=1e-12)
        assert bleu([hyp], [ref]) == pytest.approx(bleu_brute_force([hyp], [ref]), abs=1e-12)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            bleu([], [])

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            bleu([["a"]], [["a"], ["b"]])

    def test_pooled_not_averaged(self):
        hyps = [["a", "b"], ["c", "d", "e"]]
        refs = [["a", "b"], ["x", "y", "z"]]
        assert bleu(hyps, refs) == pytest.approx(bleu_brute_force(hyps, refs), abs=1e-12)
        per_sample_mean = (sentence_bleu(hyps[0], refs[0]) + sentence_bleu(hyps[1], refs[1])) / 2
        assert bleu(hyps, refs) != pytest.approx(per_sample_mean)

    def test_monotone_in_appended_match(self):
        # When hyp and ref share their final 3 tokens, appending one common
        # token adds a matched n-gram at every order, so no pooled precision
        # may decrease.
        def precisions(h, r):
            out = []
            for n in range(1, 5):
                hc = [tuple(h[i:i + n]) for i in range(len(h) - n + 1)]
                rc = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
                matches = sum(min(hc.count(g), rc.count(g)) for g in set(hc))
                out.append((matches, len(hc)))
            return out

        rng = np.random.default_rng(79)
        for _ in range(40):
            tail = random_sentence(rng, max_len=3) + ["x", "y", "z"]
            hyp = random_sentence(rng) + tail[-3:]
            ref = random_sentence(rng) + tail[-3:]
            before = precisions(hyp, ref)
            after = precisions(hyp + ["zz"], ref + ["zz"])
            for (m0, t0), (m1, t1) in zip(before, after):
                if t0 and t1:
                    assert m1 / t1 >= m0 / t0 - 1e-12


class TestRougeL:
    def test_identical(self):
        assert rouge_l(["a", "b", "c"], ["a", "b", "c"]) == pytest.approx(1.0)

    def test_reference_example(self):
        got = rouge_l(tokenize_text("the cat sat"), tokenize_text("the cat ate"))
        assert got == pytest.approx(2 / 3, abs=1e-12)

    def test_empty_hyp(self):
        assert rouge_l([], ["a"]) == 0.0

    def test_against_oracle(self):
        rng = np.random.default_rng(83)
        for _ in range(300):
            hyp = random_sentence(rng)
            ref = random_sentence(rng)
            assert rouge_l(hyp, ref) == pytest.approx(rouge_l_brute_force(hyp, ref), abs=1e-12)


class TestMeteor:
    def test_identical_three_tokens(self):
        got = meteor(["a", "b", "c"], ["a", "b", "c"])
        assert got == pytest.approx(1.0 * (1 - 0.5 * (1 / 3) ** 3), abs=1e-12)
        assert got == pytest.approx(0.9814814814, abs=1e-9)

    def test_no_overlap(self):
        assert meteor(["a", "b"], ["c", "d"]) == 0.0

    def test_swapped_tokens(self):
        # Two matches in two chunks: penalty 0.5, F_mean 1.
        assert meteor(["cat", "the"], ["the", "cat"]) == pytest.approx(0.5, abs=1e-12)

    def test_stem_stage_matches(self):
        got = meteor(["running"], ["runs"])
        assert got == pytest.approx(1.0 * (1 - 0.5), abs=1e-12)  # 1 match, 1 chunk

    def test_against_exhaustive_oracle(self):
        rng = np.random.default_rng(89)
        for _ in range(250):
            hyp = random_sentence(rng, max_len=7)
            ref = random_sentence(rng, max_len=7)
            assert meteor(hyp, ref) == pytest.approx(
                meteor_exhaustive(hyp, ref, stem), abs=1e-12
            ), (hyp, ref)

    def test_penalty_bounds(self):
        rng = np.random.default_rng(97)
        for _ in range(100):
            hyp = random_sentence(rng)
            ref = random_sentence(rng)
            score = meteor(hyp, ref)
            assert 0.0 <= score <= 1.0


class TestBertScore:
    def test_identity_on_identical(self):
        provider = HashEmbeddingProvider(dim=16, seed=1)
        p, r, f = bert_score(["a", "b"], ["a", "b"], provider)
        assert (p, r, f) == (pytest.approx(1.0), pytest.approx(1.0), pytest.approx(1.0))

    def test_orthogonal_vocabulary(self):
        def provider(tokens):
            basis = {"a": [1, 0, 0, 0], "b": [0, 1, 0, 0], "c": [0, 0, 1, 0], "d": [0, 0, 0, 1]}
            return np.array([basis[t] for t in tokens], dtype=float)

        p, r, f = bert_score(["a", "b"], ["c", "d"], provider)
        assert (p, r, f) == (0.0, 0.0, 0.0)

    def test_enumerated_two_by_two(self):
        # Similarities [[1, 0], [0, 0.5]]: R = P = (1 + 0.5)/2 = 0.75.
        def provider(tokens):
            table = {"x": [1.0, 0.0], "y": [0.0, 1.0], "u": [1.0, 0.0], "v": [0.6, 0.8]}
            return np.array([table[t] for t in tokens])

        p, r, f = bert_score(["x", "y"], ["u", "v"], provider)
        oracle = greedy_bert_score([[1.0, 0.0], [0.0, 0.8]])
        assert r == pytest.approx(oracle[1])
        assert p == pytest.approx(oracle[0])
        assert f == pytest.approx(oracle[2])

    def test_empty_text(self):
        assert bert_score([], ["a"], HashEmbeddingProvider()) == (0.0, 0.0, 0.0)

    def test_dimension_mismatch(self):
        def bad_provider(tokens):
            return np.zeros((len(tokens) + 1, 4))

        with pytest.raises(ProviderDimensionMismatch):
            bert_score(["a"], ["b"], bad_provider)

    def test_reproducible_bit_for_bit(self):
        provider_a = HashEmbeddingProvider(dim=24, seed=7)
        provider_b = HashEmbeddingProvider(dim=24, seed=7)
        tokens_h = ["alpha", "beta", "gamma"]
        tokens_r = ["alpha", "delta"]
        assert bert_score(tokens_h, tokens_r, provider_a) == bert_score(tokens_h, tokens_r, provider_b)

    def test_against_oracle_random(self):
        rng = np.random.default_rng(101)
        provider = HashEmbeddingProvider(dim=12, seed=3)
        for _ in range(100):
            hyp = random_sentence(rng)
            ref = random_sentence(rng)
            got = bert_score(hyp, ref, provider)
            h = provider(hyp)
            r = provider(ref)
            h = h / np.linalg.norm(h, axis=1, keepdims=True)
            r = r / np.linalg.norm(r, axis=1, keepdims=True)
            sim = (r @ h.T).tolist()
            expected = greedy_bert_score(sim)
            assert got == pytest.approx(expected, abs=1e-12)


class TestCorpusReport:
    def test_identical_corpus(self):
        texts = ["a bright piece", "slow dark theme"]
        report = corpus_report(texts, texts, provider=HashEmbeddingProvider())
        assert report.bleu == pytest.approx(1.0)
        assert report.rouge_l == pytest.approx(1.0)
        assert report.bert_score == pytest.approx(1.0)
        assert len(report.per_sample) == 2

    def test_all_values_in_unit_interval(self):
        rng = np.random.default_rng(103)
        hyps = [" ".join(random_sentence(rng)) for _ in range(20)]
        refs = [" ".join(random_sentence(rng)) for _ in range(20)]
        report = corpus_report(hyps, refs, provider=HashEmbeddingProvider())
        for value in (report.bleu, report.meteor, report.rouge_l):
            assert 0.0 <= value <= 1.0
        for sample in report.per_sample:
            assert 0.0 <= sample.bleu <= 1.0
            assert 0.0 <= sample.meteor <= 1.0
            assert 0.0 <= sample.rouge_l <= 1.0

    def test_without_provider_bert_none(self):
        report = corpus_report(["a"], ["a"])
        assert report.bert_score is None
