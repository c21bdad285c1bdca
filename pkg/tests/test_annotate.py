"""Annotation pipeline tests: prompts, parsing, retries, Q&A, assembly."""

import json

import pytest

from miditext.annotate import (
    SENTINEL,
    TAG_FIELDS,
    AnnotationRecord,
    Grounding,
    IdMismatch,
    LlmAuthError,
    LlmClient,
    LlmRateLimited,
    LlmRequest,
    LlmTransportError,
    MalformedResponse,
    NoContent,
    TagSource,
    assemble_dataset,
    build_annotation_prompt,
    gen_caption_target,
    gen_qa,
    llm_complete,
    parse_annotation_response,
)
from miditext.features import FeatureSummary, Key, Mode
from miditext.segment import Clip, Region

FEATURES = FeatureSummary(tempo_bpm=120.0, key=Key(tonic=0, mode=Mode.MAJOR, confidence=0.9),
                          timesig=(4, 4), duration_s=100.0)


class TestBuildPrompt:
    def test_contains_fields_sentinel_and_source(self):
        request = build_annotation_prompt("Nocturne Op.9 No.2", "Chopin", "<doc>")
        for field in TAG_FIELDS:
            assert field in request.prompt
        assert SENTINEL in request.prompt
        assert "<doc>" in request.prompt
        assert request.temperature == 0.0

    def test_empty_source_still_well_formed(self):
        request = build_annotation_prompt("Etude", "Liszt", "")
        assert SENTINEL in request.prompt
        assert request.temperature == 0.0

    def test_deterministic(self):
        a = build_annotation_prompt("T", "C", "sss")
        b = build_annotation_prompt("T", "C", "sss")
        assert a.prompt == b.prompt

    def test_empty_title_rejected(self):
        with pytest.raises(ValueError):
            build_annotation_prompt("", "C", "s")


class TestParseResponse:
    def test_full_record(self):
        text = json.dumps({
            "genre": "Nocturne", "style": "Romantic", "background": "Written in 1830.",
            "expressive_intent": "Song-like cantabile.", "perceived_emotion": "melancholic",
        })
        record = parse_annotation_response(text, "p1", FEATURES)
        assert record.valid_tagged
        assert record.genre == "Nocturne"
        assert record.perceived_emotion == "melancholic"

    def test_all_sentinel_not_valid_tagged(self):
        text = json.dumps({name: SENTINEL for name in TAG_FIELDS})
        record = parse_annotation_response(text, "p1", FEATURES)
        assert not record.valid_tagged

    def test_refusal_is_malformed(self):
        with pytest.raises(MalformedResponse):
            parse_annotation_response("I cannot help with that", "p1", FEATURES)

    def test_missing_keys_become_sentinels(self):
        record = parse_annotation_response('{"genre": "Waltz"}', "p1", FEATURES)
        assert record.genre == "Waltz"
        assert record.style == SENTINEL

    def test_json_extracted_from_surrounding_prose(self):
        text = 'Sure! Here is the annotation: {"genre": "Etude"} Hope that helps.'
        record = parse_annotation_response(text, "p1", FEATURES)
        assert record.genre == "Etude"

    def test_braces_inside_strings_handled(self):
        text = '{"genre": "odd {brace} name"}'
        record = parse_annotation_response(text, "p1", FEATURES)
        assert record.genre == "odd {brace} name"

    def test_whitespace_trimmed(self):
        record = parse_annotation_response('{"genre": "  Waltz  "}', "p1", FEATURES)
        assert record.genre == "Waltz"


class _FlakyClient(LlmClient):
    def __init__(self, failures, response="ok"):
        self.failures = list(failures)
        self.response = response
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.failures:
            raise self.failures.pop(0)
        return self.response


class TestLlmComplete:
    def test_echo_client(self):
        client = _FlakyClient([], response='{"genre": "Etude"}')
        text = llm_complete(LlmRequest(prompt="p"), client, sleep=lambda s: None)
        record = parse_annotation_response(text, "p1", FEATURES)
        assert record.genre == "Etude"

    def test_retries_then_succeeds(self):
        client = _FlakyClient([LlmTransportError("boom"), LlmRateLimited("429")])
        assert llm_complete(LlmRequest(prompt="p"), client, sleep=lambda s: None) == "ok"
        assert client.calls == 3

    def test_rate_limited_after_retries(self):
        client = _FlakyClient([LlmRateLimited("429")] * 4)
        with pytest.raises(LlmRateLimited):
            llm_complete(LlmRequest(prompt="p"), client, max_retries=3, sleep=lambda s: None)
        assert client.calls == 4

    def test_auth_never_retried(self):
        client = _FlakyClient([LlmAuthError("401")])
        with pytest.raises(LlmAuthError):
            llm_complete(LlmRequest(prompt="p"), client, sleep=lambda s: None)
        assert client.calls == 1

    def test_backoff_is_exponential(self):
        delays = []
        client = _FlakyClient([LlmTransportError("x")] * 3)
        llm_complete(LlmRequest(prompt="p"), client, backoff_s=0.5, sleep=delays.append)
        assert delays == [0.5, 1.0, 2.0]

    def test_http_client_checks_credential_before_network(self, monkeypatch):
        from miditext.annotate import HttpLlmClient

        monkeypatch.delenv("MIDITEXT_LLM_API_KEY", raising=False)
        client = HttpLlmClient("http://localhost:1/complete")
        with pytest.raises(LlmAuthError):
            client.complete(LlmRequest(prompt="p"))


class TestGenQa:
    def test_emotion_only_record(self):
        record = AnnotationRecord(piece_id="p1", perceived_emotion="joyful", features=FEATURES)
        pairs = gen_qa(record, ["p1/begin"])
        emotion_pairs = [p for p in pairs if p.tag_source is TagSource.PERCEIVED_EMOTION]
        assert emotion_pairs and all("joyful" in p.answer for p in emotion_pairs)

    def test_all_sentinel_with_features_gives_feature_pairs_only(self):
        record = AnnotationRecord(piece_id="p1", features=FEATURES)
        pairs = gen_qa(record, ["p1/begin"])
        assert pairs
        assert {p.tag_source for p in pairs} <= {TagSource.TEMPO, TagSource.KEY,
                                                 TagSource.TIME_SIGNATURE}

    def test_counting_rule(self):
        record = AnnotationRecord(piece_id="p1", genre="g", style="s", background="b",
                                  expressive_intent="e", perceived_emotion="m",
                                  features=FEATURES)
        pairs = gen_qa(record, [f"p1/{r}" for r in ("begin", "middle", "late")])
        assert len(pairs) >= 24  # (5 tags + 3 features) x 3 clips

    def test_no_content(self):
        record = AnnotationRecord(piece_id="p1", features=None)
        with pytest.raises(NoContent):
            gen_qa(record, ["p1/begin"])

    def test_deterministic_for_seed(self):
        record = AnnotationRecord(piece_id="p1", genre="waltz", features=FEATURES)
        a = gen_qa(record, ["p1/begin"], seed=3)
        b = gen_qa(record, ["p1/begin"], seed=3)
        assert a == b

    def test_template_varies_across_clips(self):
        record = AnnotationRecord(piece_id="p1", genre="waltz", features=None)
        clip_ids = [f"p1/c{i}" for i in range(12)]
        pairs = gen_qa(record, clip_ids, seed=0)
        questions = {p.question for p in pairs if p.tag_source is TagSource.GENRE}
        assert len(questions) >= 2

    def test_clip_grounding_recorded(self):
        record = AnnotationRecord(piece_id="p1", genre="waltz", features=FEATURES)
        clip_feats = {"p1/begin": FEATURES}
        pairs = gen_qa(record, ["p1/begin", "p1/late"], clip_features=clip_feats)
        tempo_pairs = {p.clip_id: p for p in pairs if p.tag_source is TagSource.TEMPO}
        assert tempo_pairs["p1/begin"].grounding is Grounding.CLIP
        assert tempo_pairs["p1/late"].grounding is Grounding.PIECE


class TestCaption:
    def test_full_record_mentions_everything(self):
        record = AnnotationRecord(piece_id="p1", genre="nocturne", style="Romantic",
                                  background="Composed in 1831", expressive_intent="Dreamy at night",
                                  perceived_emotion="melancholic", features=FEATURES)
        caption = gen_caption_target(record)
        for value in ("nocturne", "Romantic", "Composed in 1831", "Dreamy", "melancholic"):
            assert value in caption
        assert "120" in caption and "4/4" in caption

    def test_emotion_only(self):
        record = AnnotationRecord(piece_id="p1", perceived_emotion="tense", features=FEATURES)
        caption = gen_caption_target(record)
        assert "tense" in caption and "beats per minute" in caption

    def test_all_sentinel_rejected(self):
        with pytest.raises(NoContent):
            gen_caption_target(AnnotationRecord(piece_id="p1", features=FEATURES))

    def test_deterministic(self):
        record = AnnotationRecord(piece_id="p1", genre="waltz", features=FEATURES)
        assert gen_caption_target(record) == gen_caption_target(record)


def make_clip(piece_id, region):
    return Clip(piece_id=piece_id, start_tick=0, end_tick=1920, start_s=0.0, end_s=2.0,
                region=region, bar_aligned=True)


class TestAssemble:
    def build_inputs(self, n_pieces=10):
        records = []
        clips = []
        qa = []
        for i in range(n_pieces):
            piece_id = f"piece-{i:02d}"
            record = AnnotationRecord(piece_id=piece_id, genre=f"genre{i}", features=FEATURES)
            records.append(record)
            piece_clips = [make_clip(piece_id, region)
                           for region in (Region.BEGIN, Region.MIDDLE, Region.LATE)]
            clips.extend(piece_clips)
            qa.extend(gen_qa(record, [f"{piece_id}/{c.region.value}" for c in piece_clips]))
        return records, clips, qa

    def test_split_ratio_and_no_leakage(self, tmp_path):
        records, clips, qa = self.build_inputs(10)
        manifest = assemble_dataset(records, clips, qa, split_seed=5, out_dir=tmp_path)
        assert len(manifest["test_pieces"]) == 1
        assert len(manifest["train_pieces"]) == 9
        train = [json.loads(line) for line in (tmp_path / "train.jsonl").read_text().splitlines()]
        test = [json.loads(line) for line in (tmp_path / "test.jsonl").read_text().splitlines()]
        train_pieces = {r["piece_id"] for r in train}
        test_pieces = {r["piece_id"] for r in test}
        assert not train_pieces & test_pieces
        # every clip of a test piece is in the test file
        for row in test:
            assert row["piece_id"] in manifest["test_pieces"]

    def test_byte_identical_for_same_seed(self, tmp_path):
        records, clips, qa = self.build_inputs(8)
        assemble_dataset(records, clips, qa, split_seed=7, out_dir=tmp_path / "a")
        assemble_dataset(records, clips, qa, split_seed=7, out_dir=tmp_path / "b")
        for name in ("train.jsonl", "test.jsonl", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seed_changes_split(self, tmp_path):
        records, clips, qa = self.build_inputs(12)
        m1 = assemble_dataset(records, clips, qa, split_seed=1, out_dir=tmp_path / "a")
        m2 = assemble_dataset(records, clips, qa, split_seed=2, out_dir=tmp_path / "b")
        assert m1["test_pieces"] != m2["test_pieces"]

    def test_id_mismatch_rejected(self, tmp_path):
        records, clips, qa = self.build_inputs(3)
        from miditext.annotate import QaPair

        bad = qa + [QaPair(clip_id="ghost/begin", question="q", answer="a",
                           tag_source=TagSource.GENRE, grounding=Grounding.PIECE)]
        with pytest.raises(IdMismatch):
            assemble_dataset(records, clips, bad, split_seed=0, out_dir=tmp_path)

    def test_caption_rows_present(self, tmp_path):
        records, clips, qa = self.build_inputs(4)
        assemble_dataset(records, clips, qa, split_seed=3, out_dir=tmp_path)
        rows = [json.loads(line) for line in (tmp_path / "train.jsonl").read_text().splitlines()]
        tasks = {r["task"] for r in rows}
        assert tasks == {"qa", "caption"}
        caption_rows = [r for r in rows if r["task"] == "caption"]
        assert all(r["tag_source"] is None for r in caption_rows)


class TestParaphraseMode:
    def test_questions_rewritten_by_client(self):
        class UpperClient(LlmClient):
            def complete(self, request):
                question = request.prompt.rsplit("\n", 1)[-1]
                return question.upper()

        record = AnnotationRecord(piece_id="p1", genre="waltz", features=None)
        pairs = gen_qa(record, ["p1/begin"], paraphrase_client=UpperClient())
        assert pairs and all(p.question.isupper() for p in pairs)

    def test_template_path_identical_without_client(self):
        record = AnnotationRecord(piece_id="p1", genre="waltz", features=FEATURES)
        assert gen_qa(record, ["p1/begin"]) == gen_qa(record, ["p1/begin"], paraphrase_client=None)
