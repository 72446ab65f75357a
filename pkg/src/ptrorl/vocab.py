from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

from .core import Sentence

PAD = "<pad>"
UNK = "<unk>"


class Vocab:
    def __init__(self, items: Iterable[str], specials: Sequence[str] = (PAD, UNK)):
        self.items: List[str] = list(specials)
        seen = set(self.items)
        for x in items:
            if x not in seen:
                seen.add(x)
                self.items.append(x)
        self.index: Dict[str, int] = {x: i for i, x in enumerate(self.items)}
        self.unk = self.index.get(UNK)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, x: str) -> bool:
        return x in self.index

    def lookup(self, x: str) -> int:
        i = self.index.get(x)
        if i is None:
            if self.unk is None:
                raise KeyError(x)
            return self.unk
        return i


@dataclass
class Vocabs:
    words: Vocab
    chars: Vocab
    pos_tags: List[str]
    dep_labels: List[str]

    @property
    def pos(self) -> Vocab:
        return Vocab(self.pos_tags, specials=(UNK,))

    def to_dict(self) -> dict:
        return {
            "words": self.words.items,
            "chars": self.chars.items,
            "pos_tags": list(self.pos_tags),
            "dep_labels": list(self.dep_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabs":
        return cls(Vocab(d["words"], ()), Vocab(d["chars"], ()), list(d["pos_tags"]), list(d["dep_labels"]))


def build_vocabs(
    sentences: Sequence[Sentence],
    pos_tags: Optional[Sequence[str]] = None,
    dep_labels: Optional[Sequence[str]] = None,
    extra_words: Iterable[str] = (),
) -> Vocabs:
    words = sorted({t.surface for s in sentences for t in s.tokens} | set(extra_words))
    chars = sorted({c for s in sentences for t in s.tokens for c in t.surface})
    if pos_tags is None:
        pos_tags = sorted({t.pos for s in sentences for t in s.tokens})
    if dep_labels is None:
        dep_labels = sorted({a.label for s in sentences for a in s.deps})
    return Vocabs(Vocab(words), Vocab(chars), list(pos_tags), list(dep_labels))
