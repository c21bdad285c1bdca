"""Annotation and instruction-tuning data pipeline.

Builds temperature-0 prompts asking an external LLM to extract five tag
fields from a supplied source document, parses the strict-JSON response with
a "Not Enough Information" sentinel per unsupported field, generates
template-based Q&A pairs and caption targets from the tags, and assembles a
piece-level train/test split as JSONL. Everything except the optional live
LLM call is deterministic, so re-running the pipeline reproduces its output
files byte for byte.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path

from .features import FeatureSummary, Mode
from .segment import Clip

logger = logging.getLogger(__name__)

SENTINEL = "Not Enough Information"
TAG_FIELDS = ("genre", "style", "background", "expressive_intent", "perceived_emotion")
TEMPLATE_VERSION = "1"

DEFAULT_API_KEY_ENV = "MIDITEXT_LLM_API_KEY"


class MalformedResponse(ValueError):
    """LLM response held no parsable JSON object."""


class NoContent(ValueError):
    """Record has neither non-sentinel tags nor features to generate from."""


class IdMismatch(ValueError):
    """Dataset assembly inputs reference unknown piece or clip ids."""


class LlmError(Exception):
    """Base class for LLM transport failures."""


class LlmTransportError(LlmError):
    pass


class LlmAuthError(LlmError):
    pass


class LlmRateLimited(LlmError):
    pass


class LlmTimeout(LlmError):
    pass


class TagSource(enum.Enum):
    GENRE = "genre"
    STYLE = "style"
    BACKGROUND = "background"
    EXPRESSIVE_INTENT = "expressive_intent"
    PERCEIVED_EMOTION = "perceived_emotion"
    TEMPO = "tempo"
    KEY = "key"
    TIME_SIGNATURE = "time_signature"


class Grounding(enum.Enum):
    PIECE = "piece"
    CLIP = "clip"


@dataclass(frozen=True, slots=True)
class LlmRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 1024


@dataclass(frozen=True, slots=True)
class AnnotationRecord:
    piece_id: str
    genre: str = SENTINEL
    style: str = SENTINEL
    background: str = SENTINEL
    expressive_intent: str = SENTINEL
    perceived_emotion: str = SENTINEL
    features: FeatureSummary | None = None
    source_digest: str = ""

    def tag(self, name: str) -> str:
        return getattr(self, name)

    @property
    def valid_tagged(self) -> bool:
        return any(self.tag(name) != SENTINEL for name in TAG_FIELDS)

    def non_sentinel_fields(self) -> list[str]:
        return [name for name in TAG_FIELDS if self.tag(name) != SENTINEL]


@dataclass(frozen=True, slots=True)
class QaPair:
    clip_id: str
    question: str
    answer: str
    tag_source: TagSource
    grounding: Grounding


_PROMPT_TEMPLATE = """You are a classical music metadata annotator.

Read the source document below and extract information about the piece
"{title}" by {composer}. Respond with exactly one JSON object and nothing
else, using these five keys:

  "genre": short categorical tag (e.g. nocturne, etude, sonata movement)
  "style": short stylistic or period tag (e.g. Romantic, Baroque)
  "background": one to three sentences on the composition's background
  "expressive_intent": one to three sentences on the expressive intent
  "perceived_emotion": short emotion tag (e.g. melancholic, triumphant)

Only use information supported by the source document. If the document does
not support a field, set that field to the exact string "{sentinel}".
Do not invent or guess content.

SOURCE DOCUMENT:
{source}
"""


def build_annotation_prompt(title: str, composer: str, source_text: str,
                            max_tokens: int = 1024) -> LlmRequest:
    """Deterministic annotation request; temperature is pinned to 0."""
    if not title or not composer:
        raise ValueError("title and composer must be non-empty")
    prompt = _PROMPT_TEMPLATE.format(title=title, composer=composer,
                                     sentinel=SENTINEL, source=source_text)
    return LlmRequest(prompt=prompt, temperature=0.0, max_tokens=max_tokens)


def _first_json_object(text: str) -> str:
    """The first balanced-brace span, quote- and escape-aware."""
    start = text.find("{")
    if start < 0:
        raise MalformedResponse("no JSON object found in response")
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    raise MalformedResponse("unbalanced braces in response")


def parse_annotation_response(text: str, piece_id: str,
                              features: FeatureSummary | None) -> AnnotationRecord:
    """Strict parse of the five-key JSON object; missing keys become sentinels."""
    span = _first_json_object(text)
    try:
        data = json.loads(span)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"invalid JSON object: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedResponse("response JSON is not an object")
    values = {}
    for name in TAG_FIELDS:
        value = data.get(name, SENTINEL)
        if not isinstance(value, str) or not value.strip():
            value = SENTINEL
        values[name] = value.strip()
    return AnnotationRecord(piece_id=piece_id, features=features,
                            source_digest=source_digest(text), **values)


def source_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class LlmClient:
    """Single-turn completion interface; implementations raise Llm* errors."""

    def complete(self, request: LlmRequest) -> str:
        raise NotImplementedError


class HttpLlmClient(LlmClient):
    """POSTs {prompt, temperature, max_tokens} and reads {"text": ...} back.

    The credential comes from an environment variable and is checked before
    any network traffic; the endpoint comes from pipeline configuration.
    """

    def __init__(self, endpoint: str, api_key_env: str = DEFAULT_API_KEY_ENV,
                 timeout_s: float = 60.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s

    def complete(self, request: LlmRequest) -> str:
        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise LlmAuthError(f"credential variable {self.api_key_env} is not set")
        payload = json.dumps({
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }).encode("utf-8")
        http_request = urllib.request.Request(
            self.endpoint,
            data=payload,
            headers={"Content-Type": "application/json",
                     "Authorization": f"Bearer {api_key}"},
        )
        try:
            with urllib.request.urlopen(http_request, timeout=self.timeout_s) as response:
                body = json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code in (401, 403):
                raise LlmAuthError(f"HTTP {exc.code}") from exc
            if exc.code == 429:
                raise LlmRateLimited("HTTP 429") from exc
            raise LlmTransportError(f"HTTP {exc.code}") from exc
        except TimeoutError as exc:
            raise LlmTimeout(str(exc)) from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                raise LlmTimeout(str(exc.reason)) from exc
            raise LlmTransportError(str(exc.reason)) from exc
        if "text" not in body:
            raise LlmTransportError("response missing 'text' field")
        return body["text"]


def llm_complete(request: LlmRequest, client: LlmClient, max_retries: int = 3,
                 backoff_s: float = 0.5, sleep=time.sleep) -> str:
    """Completion with exponential backoff on transient errors.

    Auth errors are never retried. Rate limiting and transport/timeout
    errors are retried up to max_retries times, then re-raised.
    """
    digest = source_digest(request.prompt)[:16]
    attempt = 0
    while True:
        try:
            logger.info("llm request %s attempt %d", digest, attempt + 1)
            text = client.complete(request)
            logger.info("llm response %s: %d chars", digest, len(text))
            return text
        except LlmAuthError:
            raise
        except (LlmTransportError, LlmRateLimited, LlmTimeout):
            attempt += 1
            if attempt > max_retries:
                raise
            delay = backoff_s * 2 ** (attempt - 1)
            logger.warning("llm request %s failed, retry %d in %.2fs", digest, attempt, delay)
            sleep(delay)


_QUESTION_TEMPLATES: dict[TagSource, tuple[str, ...]] = {
    TagSource.GENRE: (
        "What genre does this piece belong to?",
        "How would you classify the genre of this music?",
        "Which musical genre best describes this clip?",
    ),
    TagSource.STYLE: (
        "What style is this piece written in?",
        "Which stylistic period does this music come from?",
        "How would you describe the style of this clip?",
    ),
    TagSource.BACKGROUND: (
        "What is known about the background of this piece?",
        "Can you describe the circumstances behind this composition?",
        "What is the story behind this piece?",
    ),
    TagSource.EXPRESSIVE_INTENT: (
        "What is the expressive intent of this music?",
        "What expression does the composer aim for here?",
        "What does this piece try to convey expressively?",
    ),
    TagSource.PERCEIVED_EMOTION: (
        "What emotion does this clip convey?",
        "How does this music feel emotionally?",
        "Which emotion best matches this piece?",
    ),
    TagSource.TEMPO: (
        "What is the tempo of this clip?",
        "How fast is this music?",
        "At roughly how many beats per minute does this clip play?",
    ),
    TagSource.KEY: (
        "What key is this piece in?",
        "Which key does this music use?",
        "Can you name the key of this clip?",
    ),
    TagSource.TIME_SIGNATURE: (
        "What is the time signature of this clip?",
        "Which meter does this piece follow?",
        "How is this music metrically organized?",
    ),
}

_TAG_TO_SOURCE = {
    "genre": TagSource.GENRE,
    "style": TagSource.STYLE,
    "background": TagSource.BACKGROUND,
    "expressive_intent": TagSource.EXPRESSIVE_INTENT,
    "perceived_emotion": TagSource.PERCEIVED_EMOTION,
}


def _pick_template(templates: tuple[str, ...], clip_id: str, field: str, seed: int) -> str:
    digest = hashlib.sha256(f"{seed}:{clip_id}:{field}".encode()).digest()
    return templates[int.from_bytes(digest[:4], "little") % len(templates)]


def _feature_answers(features: FeatureSummary) -> dict[TagSource, str]:
    key_name = features.key.name()
    return {
        TagSource.TEMPO: f"The tempo is about {round(features.tempo_bpm)} beats per minute.",
        TagSource.KEY: f"The piece is in {key_name}.",
        TagSource.TIME_SIGNATURE: (
            f"The time signature is {features.timesig[0]}/{features.timesig[1]}."
        ),
    }


def gen_qa(record: AnnotationRecord, clip_ids: list[str], seed: int = 0,
           clip_features: dict[str, FeatureSummary] | None = None,
           paraphrase_client: LlmClient | None = None) -> list[QaPair]:
    """Template Q&A pairs: one per clip per non-sentinel tag and per feature.

    Question paraphrases are selected by a seeded hash of (clip_id, field),
    so output is deterministic for fixed inputs. Feature questions ground in
    clip-level features when clip_features supplies them, otherwise in the
    record's piece-level features. With paraphrase_client set, each template
    question is additionally rewritten by the LLM (temperature 0); the
    deterministic template path needs no network at all.
    """
    if not record.valid_tagged and record.features is None and not clip_features:
        raise NoContent(f"record {record.piece_id} has no tags and no features")

    def finalize(question: str) -> str:
        if paraphrase_client is None:
            return question
        request = LlmRequest(
            prompt="Rewrite the following question in different words, keeping its "
                   f"meaning. Respond with the question only.\n\n{question}",
            temperature=0.0,
            max_tokens=64,
        )
        return llm_complete(request, paraphrase_client).strip() or question

    pairs: list[QaPair] = []
    for clip_id in clip_ids:
        for field in record.non_sentinel_fields():
            tag_source = _TAG_TO_SOURCE[field]
            question = _pick_template(_QUESTION_TEMPLATES[tag_source], clip_id, field, seed)
            pairs.append(QaPair(clip_id=clip_id, question=finalize(question),
                                answer=record.tag(field), tag_source=tag_source,
                                grounding=Grounding.PIECE))
        features = (clip_features or {}).get(clip_id, record.features)
        grounding = Grounding.CLIP if clip_features and clip_id in clip_features else Grounding.PIECE
        if features is not None:
            for tag_source, answer in _feature_answers(features).items():
                question = _pick_template(_QUESTION_TEMPLATES[tag_source], clip_id,
                                          tag_source.value, seed)
                pairs.append(QaPair(clip_id=clip_id, question=finalize(question),
                                    answer=answer, tag_source=tag_source,
                                    grounding=grounding))
    return pairs


def gen_caption_target(record: AnnotationRecord,
                       features: FeatureSummary | None = None) -> str:
    """Deterministic one-paragraph caption stitching tags and features."""
    if not record.valid_tagged:
        raise NoContent(f"record {record.piece_id} has no non-sentinel tags")
    features = features if features is not None else record.features
    sentences = []
    opening = "This is a piece of music"
    if record.genre != SENTINEL:
        opening = f"This is a {record.genre}"
    if record.style != SENTINEL:
        opening += f" in a {record.style} style"
    sentences.append(opening + ".")
    if features is not None:
        mode_word = "major" if features.key.mode is Mode.MAJOR else "minor"
        sentences.append(
            f"It is in {features.key.name()} ({mode_word}), around "
            f"{round(features.tempo_bpm)} beats per minute, in "
            f"{features.timesig[0]}/{features.timesig[1]} time."
        )
    if record.perceived_emotion != SENTINEL:
        sentences.append(f"The music feels {record.perceived_emotion}.")
    if record.expressive_intent != SENTINEL:
        sentences.append(record.expressive_intent.rstrip(".") + ".")
    if record.background != SENTINEL:
        sentences.append(record.background.rstrip(".") + ".")
    return " ".join(sentences)


def record_to_json(record: AnnotationRecord) -> str:
    data = dataclasses.asdict(record)
    if record.features is not None:
        data["features"] = {
            "tempo_bpm": record.features.tempo_bpm,
            "key": {"tonic": record.features.key.tonic,
                    "mode": record.features.key.mode.value,
                    "confidence": record.features.key.confidence},
            "timesig": list(record.features.timesig),
            "duration_s": record.features.duration_s,
        }
    return json.dumps(data, sort_keys=True)


def _dataset_row(clip_id: str, piece_id: str, task: str, question: str, answer: str,
                 tag_source: str | None, grounding: str | None) -> dict:
    return {
        "clip_id": clip_id,
        "piece_id": piece_id,
        "task": task,
        "question": question,
        "answer": answer,
        "tag_source": tag_source,
        "grounding": grounding,
    }


CAPTION_INSTRUCTION = "Describe this music clip."


def assemble_dataset(
    records: list[AnnotationRecord],
    clips: list[Clip],
    qa: list[QaPair],
    split_seed: int,
    out_dir: str | Path,
    test_ratio: float = 0.1,
) -> dict:
    """Write train/test JSONL plus a manifest; split is by piece.

    All clips of one piece land in the same split, so no tag answer can leak
    across the boundary. Output bytes are a pure function of the inputs and
    the seed.
    """
    import numpy as np

    piece_ids = sorted({r.piece_id for r in records})
    record_of = {r.piece_id: r for r in records}
    clips_of: dict[str, list[Clip]] = {}
    clip_to_piece: dict[str, str] = {}
    for clip in clips:
        if clip.piece_id not in record_of:
            raise IdMismatch(f"clip references unknown piece {clip.piece_id!r}")
        clip_id = f"{clip.piece_id}/{clip.region.value}"
        clips_of.setdefault(clip.piece_id, []).append(clip)
        clip_to_piece[clip_id] = clip.piece_id
    for pair in qa:
        if pair.clip_id not in clip_to_piece:
            raise IdMismatch(f"qa pair references unknown clip {pair.clip_id!r}")

    rng = np.random.default_rng(split_seed)
    shuffled = list(piece_ids)
    rng.shuffle(shuffled)
    n_test = max(int(round(len(shuffled) * test_ratio)), 1) if len(shuffled) > 1 else 0
    test_pieces = set(shuffled[:n_test])

    rows: list[dict] = []
    for pair in qa:
        piece_id = clip_to_piece[pair.clip_id]
        rows.append(_dataset_row(pair.clip_id, piece_id, "qa", pair.question, pair.answer,
                                 pair.tag_source.value, pair.grounding.value))
    for piece_id, piece_clips in clips_of.items():
        record = record_of[piece_id]
        if not record.valid_tagged:
            continue
        caption = gen_caption_target(record)
        for clip in piece_clips:
            clip_id = f"{clip.piece_id}/{clip.region.value}"
            rows.append(_dataset_row(clip_id, piece_id, "caption", CAPTION_INSTRUCTION,
                                     caption, None, Grounding.PIECE.value))

    rows.sort(key=lambda r: (r["piece_id"], r["clip_id"], r["task"],
                             r["tag_source"] or "", r["question"]))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def write_rows(path: Path, selected: list[dict]) -> None:
        payload = "".join(json.dumps(r, sort_keys=True) + "\n" for r in selected)
        atomic_write_text(path, payload)

    train_rows = [r for r in rows if r["piece_id"] not in test_pieces]
    test_rows = [r for r in rows if r["piece_id"] in test_pieces]
    write_rows(out_dir / "train.jsonl", train_rows)
    write_rows(out_dir / "test.jsonl", test_rows)
    manifest = {
        "template_version": TEMPLATE_VERSION,
        "split_seed": split_seed,
        "train_pieces": sorted(set(piece_ids) - test_pieces),
        "test_pieces": sorted(test_pieces),
        "train_rows": len(train_rows),
        "test_rows": len(test_rows),
    }
    atomic_write_text(out_dir / "manifest.json",
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def atomic_write_text(path: str | Path, content: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)
