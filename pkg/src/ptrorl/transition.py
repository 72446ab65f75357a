"""Transition system for opinion-role parsing.

A state holds two term stacks (opinions, roles), two temporary stacks that
receive elements swept off them during ARC/NO_ARC decisions, the term under
construction (lambda), the token buffer, the action history and the pairs
built so far. Only NO_START and SHIFT pop the buffer, so every token gets
exactly one start decision.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Callable, FrozenSet, Iterable, List, Optional, Tuple

from .core import Kind, OpinionRolePair, RoleType, Sentence, TermSpan


class TransitionError(RuntimeError):
    pass


class IllegalAction(TransitionError):
    pass


class MissingPayload(TransitionError):
    pass


class EndBeforeStart(TransitionError):
    pass


class PolicyIllegalAction(TransitionError):
    pass


class Tag(str, enum.Enum):
    O_START = "O_START"
    R_START = "R_START"
    NO_START = "NO_START"
    ARC = "ARC"
    NO_ARC = "NO_ARC"
    SHIFT = "SHIFT"

    @property
    def index(self) -> int:
        return TAGS.index(self)


TAGS = tuple(Tag)
START_TAGS = frozenset({Tag.O_START, Tag.R_START})
_START_KIND = {Tag.O_START: Kind.OPINION, Tag.R_START: Kind.ROLE}


@dataclass(frozen=True)
class Action:
    tag: Tag
    end_index: Optional[int] = None
    role_type: Optional[RoleType] = None

    def __post_init__(self):
        if isinstance(self.role_type, str) and not isinstance(self.role_type, RoleType):
            object.__setattr__(self, "role_type", RoleType(self.role_type))

    def to_json(self) -> dict:
        return {
            "tag": self.tag.value,
            "end": None if self.end_index is None else self.end_index + 1,
            "role": None if self.role_type is None else self.role_type.value,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Action":
        end = d.get("end")
        role = d.get("role")
        return cls(Tag(d["tag"]), None if end is None else int(end) - 1, None if role is None else RoleType(role))

    def __repr__(self) -> str:
        extra = ""
        if self.end_index is not None:
            extra = f"({self.end_index})"
        elif self.role_type is not None:
            extra = f"({self.role_type.value})"
        return self.tag.value + extra


@dataclass(frozen=True)
class TransitionState:
    n_tokens: int
    sigma_o: Tuple[TermSpan, ...] = ()
    sigma_r: Tuple[TermSpan, ...] = ()
    alpha_o: Tuple[TermSpan, ...] = ()
    alpha_r: Tuple[TermSpan, ...] = ()
    lam: Optional[TermSpan] = None
    beta: range = range(0)
    actions: Tuple[Action, ...] = ()
    pairs: Tuple[OpinionRolePair, ...] = ()

    @property
    def Y(self) -> FrozenSet[OpinionRolePair]:
        return frozenset(self.pairs)

    @property
    def front(self) -> Optional[int]:
        return self.beta[0] if self.beta else None

    @property
    def is_terminal(self) -> bool:
        return not self.beta and self.lam is None

    def opposite_stack(self) -> Tuple[TermSpan, ...]:
        """Stack swept by ARC/NO_ARC for the current lambda (top = last element)."""
        if self.lam is None:
            return ()
        return self.sigma_r if self.lam.kind is Kind.OPINION else self.sigma_o


def initial_state(s: Sentence) -> TransitionState:
    n = len(s)
    return TransitionState(n_tokens=n, beta=range(n))


def valid_actions(st: TransitionState) -> FrozenSet[Tag]:
    if st.lam is None:
        if st.beta:
            return frozenset({Tag.O_START, Tag.R_START, Tag.NO_START})
        return frozenset()
    tags = {Tag.SHIFT}
    if st.opposite_stack():
        tags.update((Tag.ARC, Tag.NO_ARC))
    return frozenset(tags)


def apply(st: TransitionState, a: Action) -> TransitionState:
    legal = valid_actions(st)
    if a.tag not in legal:
        raise IllegalAction(f"{a.tag.value} not legal; valid: {sorted(t.value for t in legal)}")
    tag = a.tag
    history = st.actions + (a,)

    if tag in START_TAGS:
        if a.end_index is None:
            raise MissingPayload(f"{tag.value} needs an end index")
        start = st.beta[0]
        if a.end_index < start:
            raise EndBeforeStart(f"end {a.end_index} before start {start}")
        if a.end_index >= st.n_tokens:
            raise EndBeforeStart(f"end {a.end_index} beyond sentence length {st.n_tokens}")
        return replace(st, lam=TermSpan(start, a.end_index, _START_KIND[tag]), actions=history)

    if tag is Tag.NO_START:
        return replace(st, beta=st.beta[1:], actions=history)

    if tag in (Tag.ARC, Tag.NO_ARC):
        lam = st.lam
        pairs = st.pairs
        if lam.kind is Kind.OPINION:
            top = st.sigma_r[-1]
            if tag is Tag.ARC:
                if a.role_type is None:
                    raise MissingPayload("ARC needs a role type")
                pairs = pairs + (OpinionRolePair(lam, top, a.role_type),)
            return replace(st, sigma_r=st.sigma_r[:-1], alpha_r=st.alpha_r + (top,), pairs=pairs, actions=history)
        top = st.sigma_o[-1]
        if tag is Tag.ARC:
            if a.role_type is None:
                raise MissingPayload("ARC needs a role type")
            pairs = pairs + (OpinionRolePair(top, lam, a.role_type),)
        return replace(st, sigma_o=st.sigma_o[:-1], alpha_o=st.alpha_o + (top,), pairs=pairs, actions=history)

    # SHIFT: alpha stacks hold elements in pop order, so reverse to restore.
    sigma_o = st.sigma_o + st.alpha_o[::-1]
    sigma_r = st.sigma_r + st.alpha_r[::-1]
    if st.lam.kind is Kind.OPINION:
        sigma_o = sigma_o + (st.lam,)
    else:
        sigma_r = sigma_r + (st.lam,)
    return replace(
        st,
        sigma_o=sigma_o,
        sigma_r=sigma_r,
        alpha_o=(),
        alpha_r=(),
        lam=None,
        beta=st.beta[1:],
        actions=history,
    )


@dataclass
class OracleTrace:
    actions: List[Action]
    notes: List[str] = field(default_factory=list)
    covered: FrozenSet[OpinionRolePair] = frozenset()
    skipped_terms: Tuple[TermSpan, ...] = ()

    def to_jsonl(self) -> str:
        return "".join(json.dumps(a.to_json()) + "\n" for a in self.actions)

    @staticmethod
    def actions_from_jsonl(text: str) -> List[Action]:
        return [Action.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def _resolve_shared_starts(terms: Iterable[TermSpan]):
    """Keep one term per start token; the earliest in (end, kind) order wins."""
    kept = {}
    skipped = []
    for t in sorted(terms, key=lambda t: (t.start, t.end, t.kind.value)):
        if t.start in kept:
            skipped.append(t)
        else:
            kept[t.start] = t
    return kept, skipped


def oracle(s: Sentence) -> OracleTrace:
    """Derive the gold action sequence for ``s``.

    Terms sharing a start token cannot be expressed by the action set. One
    of them is kept and the others are dropped together with their pairs;
    each drop is recorded in ``notes`` as ``SharedStartUnsupported``.
    """
    gold = tuple(s.gold or ())
    kept, skipped = _resolve_shared_starts({p.opinion for p in gold} | {p.role for p in gold})
    notes = [
        f"SharedStartUnsupported: {t!r} shares start token {t.start} with {kept[t.start]!r}"
        for t in skipped
    ]
    kept_terms = set(kept.values())
    covered = frozenset(p for p in gold if p.opinion in kept_terms and p.role in kept_terms)
    links = {(p.opinion, p.role): p.role_type for p in covered}

    st = initial_state(s)
    actions: List[Action] = []

    def step(a: Action):
        nonlocal st
        st = apply(st, a)
        actions.append(a)

    while not st.is_terminal:
        term = kept.get(st.front)
        if term is None:
            step(Action(Tag.NO_START))
            continue
        step(Action(Tag.O_START if term.kind is Kind.OPINION else Tag.R_START, end_index=term.end))
        while st.opposite_stack():
            other = st.opposite_stack()[-1]
            key = (term, other) if term.kind is Kind.OPINION else (other, term)
            rt = links.get(key)
            step(Action(Tag.ARC, role_type=rt) if rt is not None else Action(Tag.NO_ARC))
        step(Action(Tag.SHIFT))
    return OracleTrace(actions, notes, covered, tuple(skipped))


Policy = Callable[[TransitionState], Action]


def run(s: Sentence, policy: Policy, max_steps: Optional[int] = None) -> Tuple[FrozenSet[OpinionRolePair], List[Action]]:
    """Drive the system with ``policy`` until terminal; return (Y, actions)."""
    st = initial_state(s)
    n = len(s)
    # Steps are bounded by T + K + K_o * K_r with K <= T terms.
    limit = max_steps if max_steps is not None else 2 * n + n * n + 1
    while True:
        legal = valid_actions(st)
        if not legal:
            break
        if len(st.actions) >= limit:
            raise TransitionError(f"step limit {limit} exceeded")
        a = policy(st)
        if a.tag not in legal:
            raise PolicyIllegalAction(f"policy chose {a.tag.value}; valid: {sorted(t.value for t in legal)}")
        try:
            st = apply(st, a)
        except TransitionError as e:
            raise PolicyIllegalAction(str(e)) from e
    return st.Y, list(st.actions)


def replay_policy(actions: Iterable[Action]) -> Policy:
    it = iter(actions)

    def policy(st: TransitionState) -> Action:
        return next(it)

    return policy


def replay(s: Sentence, actions: Iterable[Action]) -> TransitionState:
    st = initial_state(s)
    for a in actions:
        st = apply(st, a)
    return st
