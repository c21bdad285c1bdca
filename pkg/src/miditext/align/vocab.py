"""Whitespace word vocabulary with UTF-8 byte fallback for the tiny LM.

ids: 0 = <pad>, 1 = <eos>, 2..257 = raw bytes, then corpus words by
descending frequency (ties alphabetical) up to the configured size. Words
outside the vocabulary encode as their UTF-8 byte tokens, so any text stays
representable.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

PAD_ID = 0
EOS_ID = 1
BYTE_BASE = 2
WORD_BASE = BYTE_BASE + 256


@dataclass(frozen=True, slots=True)
class TextVocab:
    words: tuple[str, ...]
    word_to_id: dict[str, int]

    @classmethod
    def build(cls, texts: list[str], max_size: int = 512) -> "TextVocab":
        counts = Counter()
        for text in texts:
            counts.update(text.split())
        budget = max(max_size - WORD_BASE, 0)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:budget]
        words = tuple(word for word, _ in ranked)
        return cls(words=words, word_to_id={w: WORD_BASE + i for i, w in enumerate(words)})

    def __len__(self) -> int:
        return WORD_BASE + len(self.words)

    def encode(self, text: str, append_eos: bool = False) -> list[int]:
        ids: list[int] = []
        for word in text.split():
            if word in self.word_to_id:
                ids.append(self.word_to_id[word])
            else:
                ids.extend(BYTE_BASE + b for b in word.encode("utf-8"))
        if append_eos:
            ids.append(EOS_ID)
        return ids

    def decode(self, ids: list[int]) -> str:
        parts: list[str] = []
        byte_run: list[int] = []

        def flush() -> None:
            if byte_run:
                parts.append(bytes(byte_run).decode("utf-8", errors="replace"))
                byte_run.clear()

        for token_id in ids:
            if token_id == EOS_ID:
                break
            if token_id == PAD_ID:
                continue
            if BYTE_BASE <= token_id < WORD_BASE:
                byte_run.append(token_id - BYTE_BASE)
            else:
                flush()
                index = token_id - WORD_BASE
                if 0 <= index < len(self.words):
                    parts.append(self.words[index])
        flush()
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {"words": list(self.words)}

    @classmethod
    def from_dict(cls, data: dict) -> "TextVocab":
        words = tuple(data["words"])
        return cls(words=words, word_to_id={w: WORD_BASE + i for i, w in enumerate(words)})
