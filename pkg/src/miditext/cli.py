"""Command-line interface: the pipeline as batch subcommands.

Every subcommand accepts --config (JSON pipeline configuration) and --seed;
data goes to stdout or the requested output files, logs go to stderr. Exit
codes: 0 success, 1 input error (bad paths, malformed inputs, bad config),
2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import abcnotation, annotate, features, midi, octuple, segment
from .align import (
    AlignConfig,
    Stage,
    TrainConfig,
    TrainSample,
    TextVocab,
    greedy_decode,
    pretrain_lm,
    train_stage1,
    train_stage2,
)
from .align.checkpoint import load_model, save_model
from .align.model import AlignModel
from .annotate import atomic_write_text
from .selftest import run_selftest
from .textmetrics import FileEmbeddingProvider, HashEmbeddingProvider, corpus_report

logger = logging.getLogger("miditext")


class InputError(Exception):
    """User-facing problem with inputs or configuration (exit code 1)."""


@dataclasses.dataclass(slots=True)
class PipelineConfig:
    """Tree of pipeline settings; round-trips losslessly through JSON."""

    input_dir: str = "."
    output_dir: str = "out"
    cache_dir: str = "cache"
    quant: dict = dataclasses.field(default_factory=dict)
    align: dict = dataclasses.field(default_factory=dict)
    train: dict = dataclasses.field(default_factory=dict)
    split_seed: int = 0
    llm_endpoint: str = ""
    llm_api_key_env: str = annotate.DEFAULT_API_KEY_ENV

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise InputError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config file is not valid JSON: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def quant_config(self) -> octuple.QuantConfig:
        data = dict(self.quant)
        if "timesig_vocab" in data:
            data["timesig_vocab"] = tuple(tuple(sig) for sig in data["timesig_vocab"])
        return octuple.QuantConfig(**data)

    def align_config(self, **overrides) -> AlignConfig:
        return AlignConfig(**{**self.align, **overrides})

    def train_config(self, **overrides) -> TrainConfig:
        data = dict(self.train)
        data.update(overrides)
        if "stage" in data and isinstance(data["stage"], str):
            data["stage"] = Stage(data["stage"])
        return TrainConfig(**data)


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc


def _load_piece(path: str) -> midi.MidiPiece:
    try:
        return midi.parse_smf(_read_bytes(path))
    except midi.MidiError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
        logger.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _piece_json(piece: midi.MidiPiece) -> str:
    data = {
        "title": piece.title,
        "composer": piece.composer,
        "ticks_per_quarter": piece.timeline.ticks_per_quarter,
        "tempo_map": [list(entry) for entry in piece.timeline.tempo_map],
        "timesig_map": [list(entry) for entry in piece.timeline.timesig_map],
        "end_tick": piece.timeline.end_tick,
        "notes": [
            {"pitch": n.pitch, "velocity": n.velocity, "onset_tick": n.onset_tick,
             "duration_tick": n.duration_tick, "track": n.track, "channel": n.channel,
             "program": n.program}
            for n in piece.notes
        ],
    }
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _map_files(paths: list[str], jobs: int, fn):
    """Apply fn over input files, optionally in parallel, preserving order."""
    if jobs <= 1 or len(paths) <= 1:
        return [fn(p) for p in paths]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, paths))


def cmd_parse(args, cfg: PipelineConfig) -> int:
    outputs = _map_files(args.files, args.jobs, lambda p: _piece_json(_load_piece(p)))
    for path, text in zip(args.files, outputs):
        _emit(text, str(Path(args.out_dir) / (Path(path).stem + ".json")) if args.out_dir else None)
    return 0


def cmd_tokenize(args, cfg: PipelineConfig) -> int:
    quant = cfg.quant_config()

    def run(path: str) -> str:
        piece = _load_piece(path)
        try:
            return octuple.tokens_to_lines(octuple.tokenize(piece, quant))
        except midi.EmptyPiece as exc:
            raise InputError(f"{path}: {exc}") from exc

    outputs = _map_files(args.files, args.jobs, run)
    for path, text in zip(args.files, outputs):
        _emit(text, str(Path(args.out_dir) / (Path(path).stem + ".tokens")) if args.out_dir else None)
    return 0


def cmd_segment(args, cfg: PipelineConfig) -> int:
    quant = cfg.quant_config()
    lines = []
    for path in args.files:
        piece = _load_piece(path)
        piece_id = Path(path).stem
        try:
            clips = segment.select_clips(piece, target_s=args.target_seconds,
                                         count=args.count, piece_id=piece_id)
        except midi.EmptyPiece as exc:
            raise InputError(f"{path}: {exc}") from exc
        for clip in clips:
            lines.append(segment.clip_to_json(clip))
        if args.tokens_dir:
            tokens = octuple.tokenize(piece, quant)
            Path(args.tokens_dir).mkdir(parents=True, exist_ok=True)
            for clip in clips:
                sliced = segment.slice_tokens(tokens, clip, quant, piece.timeline)
                name = f"{piece_id}__{clip.region.value}.tokens"
                atomic_write_text(Path(args.tokens_dir) / name, octuple.tokens_to_lines(sliced))
    _emit("".join(line + "\n" for line in lines), args.out)
    return 0


def cmd_abc(args, cfg: PipelineConfig) -> int:
    def run(path: str) -> str:
        piece = _load_piece(path)
        try:
            doc = abcnotation.to_abc(piece)
        except midi.EmptyPiece as exc:
            raise InputError(f"{path}: {exc}") from exc
        violations = abcnotation.validate_abc(doc)
        if violations:
            raise RuntimeError(f"{path}: generated ABC failed validation: {violations[0]}")
        if args.report_loss:
            logger.info("%s loss report: %s", path, doc.loss_report)
        return doc.text()

    outputs = _map_files(args.files, args.jobs, run)
    for path, text in zip(args.files, outputs):
        _emit(text, str(Path(args.out_dir) / (Path(path).stem + ".abc")) if args.out_dir else None)
    return 0


def cmd_features(args, cfg: PipelineConfig) -> int:
    for path in args.files:
        piece = _load_piece(path)
        try:
            summary = features.summarize(piece)
        except midi.EmptyPiece as exc:
            raise InputError(f"{path}: {exc}") from exc
        data = {
            "piece_id": Path(path).stem,
            "tempo_bpm": summary.tempo_bpm,
            "key": {"tonic": summary.key.tonic, "mode": summary.key.mode.value,
                    "confidence": summary.key.confidence, "name": summary.key.name()},
            "timesig": list(summary.timesig),
            "duration_s": summary.duration_s,
        }
        _emit(json.dumps(data, sort_keys=True) + "\n", args.out)
    return 0


def _features_of(piece: midi.MidiPiece) -> features.FeatureSummary:
    return features.summarize(piece)


def cmd_annotate(args, cfg: PipelineConfig) -> int:
    try:
        meta_rows = [json.loads(line) for line in Path(args.meta).read_text().splitlines() if line.strip()]
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {args.meta}") from exc
    cache_dir = Path(args.cache_dir or cfg.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    client = None
    records = []
    for row in sorted(meta_rows, key=lambda r: r["piece_id"]):
        source_path = Path(args.sources) / row["source_file"] if args.sources else Path(row["source_file"])
        source_text = source_path.read_text(encoding="utf-8") if source_path.exists() else ""
        piece = _load_piece(row["midi_file"]) if row.get("midi_file") else None
        feature_summary = _features_of(piece) if piece is not None and piece.notes else None
        request = annotate.build_annotation_prompt(
            row.get("title") or row["piece_id"], row.get("composer") or "unknown", source_text
        )
        cache_key = annotate.source_digest(request.prompt)
        cache_file = cache_dir / f"{cache_key}.txt"
        if cache_file.exists():
            response = cache_file.read_text(encoding="utf-8")
        else:
            endpoint = args.endpoint or cfg.llm_endpoint
            if not endpoint:
                raise InputError(
                    f"no cached response for {row['piece_id']} and no LLM endpoint configured"
                )
            if client is None:
                client = annotate.HttpLlmClient(endpoint, api_key_env=cfg.llm_api_key_env)
            response = annotate.llm_complete(request, client)
            atomic_write_text(cache_file, response)
        try:
            record = annotate.parse_annotation_response(response, row["piece_id"], feature_summary)
        except annotate.MalformedResponse as exc:
            raise InputError(f"{row['piece_id']}: {exc}") from exc
        records.append(record)
    _emit("".join(annotate.record_to_json(r) + "\n" for r in records), args.out)
    return 0


def _load_records(path: str) -> list[annotate.AnnotationRecord]:
    from .features import FeatureSummary, Key, Mode

    records = []
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    for line in lines:
        if not line.strip():
            continue
        data = json.loads(line)
        feature_summary = None
        if data.get("features"):
            f = data["features"]
            feature_summary = FeatureSummary(
                tempo_bpm=f["tempo_bpm"],
                key=Key(tonic=f["key"]["tonic"], mode=Mode(f["key"]["mode"]),
                        confidence=f["key"].get("confidence", 0.0)),
                timesig=tuple(f["timesig"]),
                duration_s=f["duration_s"],
            )
        records.append(annotate.AnnotationRecord(
            piece_id=data["piece_id"],
            genre=data.get("genre", annotate.SENTINEL),
            style=data.get("style", annotate.SENTINEL),
            background=data.get("background", annotate.SENTINEL),
            expressive_intent=data.get("expressive_intent", annotate.SENTINEL),
            perceived_emotion=data.get("perceived_emotion", annotate.SENTINEL),
            features=feature_summary,
            source_digest=data.get("source_digest", ""),
        ))
    return records


def _load_clips(path: str) -> list[segment.Clip]:
    try:
        return [segment.clip_from_json(line)
                for line in Path(path).read_text().splitlines() if line.strip()]
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc


def cmd_gen_qa(args, cfg: PipelineConfig) -> int:
    records = _load_records(args.records)
    clips = _load_clips(args.clips)
    clips_by_piece: dict[str, list[str]] = {}
    for clip in clips:
        clips_by_piece.setdefault(clip.piece_id, []).append(
            f"{clip.piece_id}/{clip.region.value}")
    lines = []
    for record in records:
        clip_ids = clips_by_piece.get(record.piece_id, [])
        if not clip_ids:
            continue
        try:
            pairs = annotate.gen_qa(record, clip_ids, seed=args.seed)
        except annotate.NoContent:
            logger.warning("%s: no content to generate from", record.piece_id)
            continue
        for pair in pairs:
            lines.append(json.dumps({
                "clip_id": pair.clip_id, "question": pair.question, "answer": pair.answer,
                "tag_source": pair.tag_source.value, "grounding": pair.grounding.value,
            }, sort_keys=True))
    _emit("".join(line + "\n" for line in lines), args.out)
    return 0


def cmd_assemble(args, cfg: PipelineConfig) -> int:
    records = _load_records(args.records)
    clips = _load_clips(args.clips)
    qa = []
    for line in Path(args.qa).read_text().splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        qa.append(annotate.QaPair(
            clip_id=data["clip_id"], question=data["question"], answer=data["answer"],
            tag_source=annotate.TagSource(data["tag_source"]),
            grounding=annotate.Grounding(data["grounding"]),
        ))
    try:
        manifest = annotate.assemble_dataset(records, clips, qa,
                                             split_seed=args.seed, out_dir=args.out_dir)
    except annotate.IdMismatch as exc:
        raise InputError(str(exc)) from exc
    sys.stdout.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0


def _load_dataset_samples(dataset_path: str, tokens_dir: str,
                          vocab: TextVocab) -> list[TrainSample]:
    samples = []
    try:
        lines = Path(dataset_path).read_text().splitlines()
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {dataset_path}") from exc
    for line in lines:
        if not line.strip():
            continue
        row = json.loads(line)
        token_file = Path(tokens_dir) / (row["clip_id"].replace("/", "__") + ".tokens")
        if not token_file.exists():
            raise InputError(f"missing token file: {token_file}")
        tokens = tuple(octuple.lines_to_tokens(token_file.read_text()))
        samples.append(TrainSample(
            tokens=tokens,
            prompt_ids=tuple(vocab.encode(row["question"].lower())),
            answer_ids=tuple(vocab.encode(row["answer"].lower(), append_eos=True)),
            sample_id=row["clip_id"],
        ))
    return samples


def cmd_train(args, cfg: PipelineConfig) -> int:
    rows = [json.loads(line) for line in Path(args.dataset).read_text().splitlines()
            if line.strip()]
    if not rows:
        raise InputError(f"empty dataset: {args.dataset}")
    if args.init:
        model, vocab = load_model(args.init)
    else:
        texts = [r["question"].lower() for r in rows] + [r["answer"].lower() for r in rows]
        vocab = TextVocab.build(texts, max_size=cfg.align.get("vocab_size", 512))
        align_cfg = cfg.align_config(vocab_size=len(vocab), seed=args.seed)
        model = AlignModel.create(align_cfg, cfg.quant_config())
    samples = _load_dataset_samples(args.dataset, args.tokens_dir, vocab)

    if args.pretrain_epochs and not args.init:
        text_samples = [dataclasses.replace(s, tokens=()) for s in samples]
        pretrain_lm(text_samples, model,
                    cfg.train_config(epochs=args.pretrain_epochs, max_lr=3e-3,
                                     total_steps=None, seed=args.seed))

    stage = Stage.ALIGNMENT if args.stage == 1 else Stage.INSTRUCTION_TUNING
    train_cfg = cfg.train_config(stage=stage, epochs=args.epochs, total_steps=None,
                                 seed=args.seed)
    runner = train_stage1 if args.stage == 1 else train_stage2
    curve = runner(samples, model, train_cfg)
    out_dir = Path(args.out_dir)
    save_model(model, vocab, out_dir)
    atomic_write_text(out_dir / "losses.jsonl",
                      "".join(json.dumps(p.as_dict()) + "\n" for p in curve))
    logger.info("stage %d: %d steps, final loss %.4f", args.stage, len(curve),
                curve[-1].loss if curve else float("nan"))
    return 0


def cmd_decode(args, cfg: PipelineConfig) -> int:
    model, vocab = load_model(args.checkpoint)
    lines = []
    for path in args.tokens:
        tokens = octuple.lines_to_tokens(Path(path).read_text())
        if not tokens:
            raise InputError(f"{path}: no tokens")
        prefix = model.clip_prefix(tokens)
        prompt_ids = vocab.encode(args.prompt.lower()) if args.prompt else []
        ids = greedy_decode(prefix, prompt_ids, model.lm, model.adapters,
                            max_new=args.max_new)
        lines.append(json.dumps({"id": Path(path).stem, "text": vocab.decode(ids)},
                                sort_keys=True))
    _emit("".join(line + "\n" for line in lines), args.out)
    return 0


def _read_id_text(path: str) -> dict[str, str]:
    try:
        rows = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    return {row["id"]: row["text"] for row in rows}


def cmd_eval(args, cfg: PipelineConfig) -> int:
    pred = _read_id_text(args.pred)
    gold = _read_id_text(args.gold)
    shared = sorted(set(pred) & set(gold))
    if not shared:
        raise InputError("prediction and gold files share no ids")
    provider = None
    if args.bert_embeddings:
        provider = FileEmbeddingProvider(args.bert_embeddings)
    elif args.hash_bert:
        provider = HashEmbeddingProvider(seed=args.seed)
    report = corpus_report([pred[i] for i in shared], [gold[i] for i in shared],
                           provider=provider)
    sys.stdout.write(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_selftest(args, cfg: PipelineConfig) -> int:
    return 0 if run_selftest() else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="miditext",
        description="Symbolic music to text pipeline: parsing, tokenization, "
                    "segmentation, ABC export, features, annotation datasets, "
                    "alignment training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config JSON file")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        return p

    p = common(sub.add_parser("parse", help="parse SMF files to note JSON"))
    p.add_argument("files", nargs="+", help="input .mid files")
    p.add_argument("--out-dir", help="write one .json per input here")
    p.add_argument("--jobs", type=int, default=1, help="parallel file workers")
    p.set_defaults(fn=cmd_parse)

    p = common(sub.add_parser("tokenize", help="tokenize SMF files to OctupleMIDI lines"))
    p.add_argument("files", nargs="+", help="input .mid files")
    p.add_argument("--out-dir", help="write one .tokens per input here")
    p.add_argument("--jobs", type=int, default=1, help="parallel file workers")
    p.set_defaults(fn=cmd_tokenize)

    p = common(sub.add_parser("segment", help="select bar-aligned clips"))
    p.add_argument("files", nargs="+", help="input .mid files")
    p.add_argument("--target-seconds", type=float, default=20.0, help="clip length target")
    p.add_argument("--count", type=int, default=3, help="clips per piece")
    p.add_argument("--out", help="clip manifest JSONL (default stdout)")
    p.add_argument("--tokens-dir", help="also write sliced per-clip token files here")
    p.set_defaults(fn=cmd_segment)

    p = common(sub.add_parser("abc", help="convert SMF files to ABC notation"))
    p.add_argument("files", nargs="+", help="input .mid files")
    p.add_argument("--out-dir", help="write one .abc per input here")
    p.add_argument("--report-loss", action="store_true", help="log conversion loss counts")
    p.add_argument("--jobs", type=int, default=1, help="parallel file workers")
    p.set_defaults(fn=cmd_abc)

    p = common(sub.add_parser("features", help="extract tempo/key/time signature"))
    p.add_argument("files", nargs="+", help="input .mid files")
    p.add_argument("--out", help="output JSONL (default stdout)")
    p.set_defaults(fn=cmd_features)

    p = common(sub.add_parser("annotate", help="annotate pieces from source documents"))
    p.add_argument("--meta", required=True,
                   help="JSONL of {piece_id, title, composer, source_file, midi_file}")
    p.add_argument("--sources", help="directory holding source documents")
    p.add_argument("--cache-dir", help="LLM response cache directory")
    p.add_argument("--endpoint", help="LLM completion endpoint URL")
    p.add_argument("--out", help="annotation records JSONL (default stdout)")
    p.set_defaults(fn=cmd_annotate)

    p = common(sub.add_parser("gen-qa", help="generate Q&A pairs from annotations"))
    p.add_argument("--records", required=True, help="annotation records JSONL")
    p.add_argument("--clips", required=True, help="clip manifest JSONL")
    p.add_argument("--out", help="Q&A JSONL (default stdout)")
    p.set_defaults(fn=cmd_gen_qa)

    p = common(sub.add_parser("assemble", help="assemble the train/test dataset"))
    p.add_argument("--records", required=True, help="annotation records JSONL")
    p.add_argument("--clips", required=True, help="clip manifest JSONL")
    p.add_argument("--qa", required=True, help="Q&A JSONL")
    p.add_argument("--out-dir", required=True, help="dataset output directory")
    p.set_defaults(fn=cmd_assemble)

    p = common(sub.add_parser("train", help="run one training stage"))
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--dataset", required=True, help="dataset JSONL (train split)")
    p.add_argument("--tokens-dir", required=True, help="per-clip token files")
    p.add_argument("--out-dir", required=True, help="checkpoint output directory")
    p.add_argument("--init", help="checkpoint to start from (stage 2)")
    p.add_argument("--epochs", type=int, default=2, help="training epochs")
    p.add_argument("--pretrain-epochs", type=int, default=0,
                   help="LM text pretraining epochs before stage 1")
    p.set_defaults(fn=cmd_train)

    p = common(sub.add_parser("decode", help="greedy-decode text for token files"))
    p.add_argument("--checkpoint", required=True, help="model checkpoint directory")
    p.add_argument("tokens", nargs="+", help="per-clip token files")
    p.add_argument("--prompt", default="", help="question text (empty = captioning)")
    p.add_argument("--max-new", type=int, default=32, help="max new tokens")
    p.add_argument("--out", help="predictions JSONL (default stdout)")
    p.set_defaults(fn=cmd_decode)

    p = common(sub.add_parser("eval", help="score predictions against gold text"))
    p.add_argument("--pred", required=True, help="predictions JSONL of {id, text}")
    p.add_argument("--gold", required=True, help="gold JSONL of {id, text}")
    p.add_argument("--bert-embeddings", help="token embedding file for BERTScore")
    p.add_argument("--hash-bert", action="store_true",
                   help="use the deterministic hash embedding provider")
    p.set_defaults(fn=cmd_eval)

    p = common(sub.add_parser("selftest", help="run the built-in oracle suite"))
    p.set_defaults(fn=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; usage problems
        # (unknown subcommand, bad flags) are input errors here.
        return 0 if not exc.code else 1
    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
        return args.fn(args, cfg)
    except InputError as exc:
        logger.error("%s", exc)
        return 1
    except Exception:
        logger.exception("internal error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
