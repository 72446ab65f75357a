"""Random sentence generator with gold opinion-role structures.

Terms always have distinct start tokens (the action set cannot express
anything else) but may overlap freely, and role terms may be linked to
several opinions.
"""

from __future__ import annotations

import random
from typing import List, Optional, Sequence

from .core import ROOT, Kind, OpinionRolePair, RoleType, Sentence, TermSpan

POS_TAGS = ("DT", "NN", "NNS", "VB", "VBZ", "JJ", "RB", "IN", "PRP", "TO")
DEP_LABELS = ("nsubj", "dobj", "det", "amod", "advmod", "prep", "pobj", "ccomp", "mark", "dep")


def random_tree(n: int, rng: random.Random) -> List[int]:
    """Uniformly attach tokens in random order; returns 0-based heads with ROOT."""
    order = list(range(n))
    rng.shuffle(order)
    heads = [ROOT] * n
    for k, tok in enumerate(order[1:], start=1):
        heads[tok] = order[rng.randrange(k)]
    return heads


def random_terms(
    n: int,
    n_terms: int,
    rng: random.Random,
    max_len: int = 6,
) -> List[TermSpan]:
    n_terms = min(n_terms, n)
    starts = sorted(rng.sample(range(n), n_terms))
    kinds = [rng.choice((Kind.OPINION, Kind.ROLE)) for _ in starts]
    if n_terms >= 2 and len(set(kinds)) == 1:
        kinds[rng.randrange(n_terms)] = kinds[0].opposite
    terms = []
    for s, kind in zip(starts, kinds):
        e = rng.randint(s, min(n - 1, s + max_len - 1))
        terms.append(TermSpan(s, e, kind))
    return terms


def random_pairs(terms: Sequence[TermSpan], rng: random.Random, share_prob: float = 0.5) -> List[OpinionRolePair]:
    opinions = [t for t in terms if t.kind is Kind.OPINION]
    roles = [t for t in terms if t.kind is Kind.ROLE]
    if not opinions or not roles:
        return []
    pairs = set()
    # Every role gets at least one opinion; with share_prob it gets another.
    for r in roles:
        linked = [rng.choice(opinions)]
        if len(opinions) > 1 and rng.random() < share_prob:
            linked.append(rng.choice([o for o in opinions if o != linked[0]]))
        for o in linked:
            pairs.add(OpinionRolePair(o, r, rng.choice((RoleType.HOLDER, RoleType.TARGET))))
    return sorted(pairs)


def random_sentence(
    rng: random.Random,
    n_tokens: int,
    n_terms: int,
    vocab: Optional[Sequence[str]] = None,
    share_prob: float = 0.5,
    max_len: int = 6,
    sent_id: str = "",
    doc_id: str = "",
) -> Sentence:
    vocab = vocab or [f"w{k}" for k in range(200)]
    words = [rng.choice(vocab) for _ in range(n_tokens)]
    pos = [rng.choice(POS_TAGS) for _ in range(n_tokens)]
    heads = random_tree(n_tokens, rng)
    labels = [rng.choice(DEP_LABELS) for _ in range(n_tokens)]
    terms = random_terms(n_tokens, n_terms, rng, max_len=max_len)
    pairs = random_pairs(terms, rng, share_prob=share_prob)
    return Sentence.build(words, pos, heads, labels, gold=pairs, sent_id=sent_id, doc_id=doc_id)


def random_corpus(
    n_sentences: int,
    seed: int = 0,
    min_tokens: int = 1,
    max_tokens: int = 30,
    max_terms: int = 6,
    share_prob: float = 0.5,
    vocab_size: int = 200,
    sentences_per_doc: int = 5,
) -> List[Sentence]:
    rng = random.Random(seed)
    vocab = [f"w{k}" for k in range(vocab_size)]
    out = []
    for i in range(n_sentences):
        n = rng.randint(min_tokens, max_tokens)
        k = rng.randint(0, min(max_terms, n))
        out.append(
            random_sentence(
                rng, n, k, vocab, share_prob=share_prob,
                sent_id=f"s{i}", doc_id=f"d{i // sentences_per_doc}",
            )
        )
    return out


def figure_sentence() -> Sentence:
    """The running example: four pairs, one role term shared by two opinions."""
    words = ["He", "says", "the", "agency", "seriously", "needs", "money", "to", "develop"]
    pos = ["PRP", "VBZ", "DT", "NN", "RB", "VBZ", "NN", "TO", "VB"]
    heads = [1, ROOT, 3, 5, 5, 1, 5, 8, 6]
    labels = ["nsubj", "root", "det", "nsubj", "advmod", "ccomp", "dobj", "mark", "acl"]
    gold = [
        OpinionRolePair.make((1, 1), (0, 0), "hd"),
        OpinionRolePair.make((1, 1), (2, 3), "tg"),
        OpinionRolePair.make((4, 5), (2, 3), "hd"),
        OpinionRolePair.make((4, 5), (6, 8), "tg"),
    ]
    return Sentence.build(words, pos, heads, labels, gold=gold, sent_id="fig1", doc_id="fig")
