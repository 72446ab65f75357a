"""Domain types: tokens, dependency arcs, term spans and opinion-role pairs.

Indices are 0-based and end-inclusive in memory. File formats use 1-based
positions (see :mod:`ptrorl.data`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

ROOT = -1


class ValidationError(ValueError):
    """Base class for sentence invariant violations."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class OutOfRangeSpan(ValidationError):
    pass


class NonTreeDependencies(ValidationError):
    pass


class DuplicatePair(ValidationError):
    pass


class Kind(str, enum.Enum):
    OPINION = "opinion"
    ROLE = "role"

    @property
    def opposite(self) -> "Kind":
        return Kind.ROLE if self is Kind.OPINION else Kind.OPINION


class RoleType(str, enum.Enum):
    HOLDER = "hd"
    TARGET = "tg"

    @property
    def index(self) -> int:
        return 0 if self is RoleType.HOLDER else 1

    @classmethod
    def from_index(cls, i: int) -> "RoleType":
        return ROLE_TYPES[i]


ROLE_TYPES = (RoleType.HOLDER, RoleType.TARGET)


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    pos: str = "X"

    @property
    def chars(self) -> Tuple[str, ...]:
        return tuple(self.surface)


@dataclass(frozen=True)
class DependencyArc:
    dependent: int
    head: int
    label: str


@dataclass(frozen=True, order=True)
class TermSpan:
    start: int
    end: int
    kind: Kind

    def __len__(self) -> int:
        return self.end - self.start + 1

    @property
    def tail(self) -> int:
        return self.end

    def tokens(self) -> range:
        return range(self.start, self.end + 1)

    def __repr__(self) -> str:
        return f"{self.kind.value[0].upper()}[{self.start}..{self.end}]"


@dataclass(frozen=True, order=True)
class OpinionRolePair:
    opinion: TermSpan
    role: TermSpan
    role_type: RoleType

    def __post_init__(self):
        if self.opinion.kind is not Kind.OPINION or self.role.kind is not Kind.ROLE:
            raise ValueError(f"pair terms have wrong kinds: {self.opinion!r}, {self.role!r}")

    @classmethod
    def make(cls, opinion: Tuple[int, int], role: Tuple[int, int], role_type) -> "OpinionRolePair":
        return cls(
            TermSpan(opinion[0], opinion[1], Kind.OPINION),
            TermSpan(role[0], role[1], Kind.ROLE),
            RoleType(role_type),
        )


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[Token, ...]
    deps: Tuple[DependencyArc, ...] = ()
    gold: Optional[Tuple[OpinionRolePair, ...]] = None
    sent_id: str = ""
    doc_id: str = ""
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> Tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    @property
    def pos_tags(self) -> Tuple[str, ...]:
        return tuple(t.pos for t in self.tokens)

    def terms(self) -> Tuple[TermSpan, ...]:
        """Distinct gold terms, ordered by start then kind."""
        seen = set()
        for p in self.gold or ():
            seen.add(p.opinion)
            seen.add(p.role)
        return tuple(sorted(seen, key=lambda t: (t.start, t.end, t.kind.value)))

    @classmethod
    def build(
        cls,
        words: Sequence[str],
        pos: Optional[Sequence[str]] = None,
        heads: Optional[Sequence[int]] = None,
        labels: Optional[Sequence[str]] = None,
        gold=None,
        sent_id: str = "",
        doc_id: str = "",
    ) -> "Sentence":
        """Convenience constructor; ``heads`` are 0-based with ``ROOT`` for the root."""
        pos = pos or ["X"] * len(words)
        tokens = tuple(Token(i, w, p) for i, (w, p) in enumerate(zip(words, pos)))
        deps: Tuple[DependencyArc, ...] = ()
        if heads is not None:
            labels = labels or ["dep"] * len(words)
            deps = tuple(DependencyArc(i, h, l) for i, (h, l) in enumerate(zip(heads, labels)))
        if gold is not None:
            gold = tuple(gold)
        return cls(tokens, deps, gold, sent_id, doc_id)


def overlap_tokens(a: TermSpan, b: TermSpan) -> int:
    return max(0, min(a.end, b.end) - max(a.start, b.start) + 1)


def _check_span(span: TermSpan, n: int) -> None:
    if not (0 <= span.start <= span.end < n):
        raise OutOfRangeSpan(
            f"span {span.start}..{span.end} outside sentence of length {n}",
            index=span.end if span.start >= 0 else span.start,
        )


def validate_sentence(s: Sentence) -> Sentence:
    """Check all sentence invariants; raise on the first violation, else return ``s``."""
    n = len(s.tokens)
    for i, tok in enumerate(s.tokens):
        if tok.index != i:
            raise ValidationError(f"token {i} carries index {tok.index}", index=i)

    if s.deps or n == 0:
        heads = {}
        for arc in s.deps:
            if not 0 <= arc.dependent < n:
                raise NonTreeDependencies(f"arc dependent {arc.dependent} out of range", arc.dependent)
            if arc.dependent in heads:
                raise NonTreeDependencies(f"token {arc.dependent} has two heads", arc.dependent)
            if arc.head != ROOT and not 0 <= arc.head < n:
                raise NonTreeDependencies(f"head {arc.head} out of range", arc.dependent)
            if arc.head == arc.dependent:
                raise NonTreeDependencies(f"token {arc.dependent} heads itself", arc.dependent)
            heads[arc.dependent] = arc.head
        missing = [i for i in range(n) if i not in heads]
        if missing:
            raise NonTreeDependencies(f"token {missing[0]} has no head", missing[0])
        roots = [i for i, h in heads.items() if h == ROOT]
        if len(roots) != 1:
            raise NonTreeDependencies(f"expected one root, found {len(roots)}", roots[1] if roots else 0)
        for i in range(n):
            seen = set()
            j = i
            while j != ROOT:
                if j in seen:
                    raise NonTreeDependencies(f"dependency cycle through token {i}", i)
                seen.add(j)
                j = heads[j]

    if s.gold is not None:
        seen_pairs = set()
        for p in s.gold:
            _check_span(p.opinion, n)
            _check_span(p.role, n)
            if p in seen_pairs:
                raise DuplicatePair(f"duplicate pair {p}", index=p.opinion.start)
            seen_pairs.add(p)
    return s
