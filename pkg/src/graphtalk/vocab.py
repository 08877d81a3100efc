"""Word and entity vocabularies with deterministic id assignment."""

from __future__ import annotations

from collections import Counter
from typing import Iterable

from .errors import DataError

PAD, SOS, EOS, UNK = "<pad>", "<sos>", "<eos>", "<unk>"
SPECIALS = (PAD, SOS, EOS, UNK)
UNK_ENTITY = "<unk_ent>"

__all__ = ["SketchVocabulary", "EntityVocabulary", "PAD", "SOS", "EOS", "UNK", "SPECIALS"]


class SketchVocabulary:
    """Sketch-side word list: specials, ordinary words and @slot tags.

    Ids are stable across runs for the same corpus: specials first, then
    every remaining word sorted by (frequency desc, lexicographic). Tags
    are included even when no sketch in the corpus uses them.
    """

    def __init__(self, words: list[str], tags: set[str]):
        self.words = list(words)
        self.tags = set(tags)
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise DataError("vocabulary contains duplicate words")
        bad = self.tags - set(self.words)
        if bad:
            raise DataError(f"tags missing from vocabulary: {sorted(bad)[:5]}")

    @classmethod
    def build(cls, token_streams: Iterable[Iterable[str]], tags: Iterable[str]) -> "SketchVocabulary":
        tags = set(tags)
        counts: Counter[str] = Counter()
        for stream in token_streams:
            counts.update(stream)
        ordinary = set(counts) | tags
        ordinary -= set(SPECIALS)
        ordered = sorted(ordinary, key=lambda w: (-counts[w], w))
        return cls(list(SPECIALS) + ordered, tags)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def sos_id(self) -> int:
        return self.index[SOS]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    def encode(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    def encode_all(self, tokens: Iterable[str]) -> list[int]:
        return [self.encode(t) for t in tokens]

    def decode(self, idx: int) -> str:
        return self.words[idx]

    def is_tag_id(self, idx: int) -> bool:
        return self.words[idx] in self.tags


class EntityVocabulary:
    """Entity surface forms indexed for the per-hop embedding tables."""

    def __init__(self, tokens: Iterable[str]):
        uniq = sorted(set(tokens) - {UNK_ENTITY})
        self.tokens = [UNK_ENTITY] + uniq
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, token: str) -> int:
        return self.index.get(token, 0)

    def encode_all(self, tokens: Iterable[str]) -> list[int]:
        return [self.encode(t) for t in tokens]
