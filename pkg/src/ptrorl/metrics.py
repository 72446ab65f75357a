"""Exact, binary and proportional F1 over opinions and opinion-role pairs.

Each predicted item can be matched to at most one gold item. Match credit:

* exact: 1 when every term has identical boundaries;
* binary: 1 when every term overlaps its gold counterpart by a token;
* proportional: mean over terms of overlap / gold length, but only for
  binary matches, so exact <= proportional <= binary item by item.

Pairs additionally need identical role types. The matching maximises total
credit (assignment problem); precision and recall divide that credit mass
by the number of predicted and gold items.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import OpinionRolePair, RoleType, TermSpan, overlap_tokens

OBJECTS = ("O", "O-R", "O-R(hd)", "O-R(tg)")
MODES = ("exact", "binary", "proportional")

Item = Union[TermSpan, OpinionRolePair]


class AlignmentError(ValueError):
    pass


def _terms(item: Item) -> Tuple[TermSpan, ...]:
    return (item.opinion, item.role) if isinstance(item, OpinionRolePair) else (item,)


def credit(pred: Item, gold: Item, mode: str, aggregate: str = "mean") -> float:
    if isinstance(gold, OpinionRolePair) and pred.role_type is not gold.role_type:
        return 0.0
    pt, gt = _terms(pred), _terms(gold)
    if mode == "exact":
        return float(all((p.start, p.end) == (g.start, g.end) for p, g in zip(pt, gt)))
    overlaps = [overlap_tokens(p, g) for p, g in zip(pt, gt)]
    if not all(overlaps):
        return 0.0
    if mode == "binary":
        return 1.0
    if mode != "proportional":
        raise ValueError(f"unknown mode {mode!r}")
    ratios = [o / len(g) for o, g in zip(overlaps, gt)]
    if aggregate == "mean":
        return sum(ratios) / len(ratios)
    if aggregate == "min":
        return min(ratios)
    if aggregate == "product":
        return float(np.prod(ratios))
    raise ValueError(f"unknown aggregate {aggregate!r}")


def matched_credit(pred: Sequence[Item], gold: Sequence[Item], mode: str, aggregate: str = "mean") -> float:
    if not pred or not gold:
        return 0.0
    w = np.array([[credit(p, g, mode, aggregate) for g in gold] for p in pred])
    rows, cols = linear_sum_assignment(w, maximize=True)
    return float(w[rows, cols].sum())


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> Dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def prf(credit_mass: float, n_pred: int, n_gold: int) -> PRF:
    if n_pred == 0 and n_gold == 0:
        return PRF(1.0, 1.0, 1.0)
    p = credit_mass / n_pred if n_pred else 0.0
    r = credit_mass / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f)


def items_for(pairs: Iterable[OpinionRolePair], obj: str) -> List[Item]:
    pairs = set(pairs)
    if obj == "O":
        return sorted({p.opinion for p in pairs})
    if obj == "O-R":
        return sorted(pairs)
    rt = RoleType.HOLDER if obj == "O-R(hd)" else RoleType.TARGET
    return sorted(p for p in pairs if p.role_type is rt)


@dataclass
class MetricReport:
    scores: Dict[str, Dict[str, PRF]] = field(default_factory=dict)

    def __getitem__(self, key: Tuple[str, str]) -> PRF:
        obj, mode = key
        return self.scores[obj][mode]

    def to_dict(self) -> dict:
        return {obj: {mode: self.scores[obj][mode].as_dict() for mode in MODES} for obj in OBJECTS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate(
    pred: Sequence[Iterable[OpinionRolePair]],
    gold: Sequence[Iterable[OpinionRolePair]],
    aggregate: str = "mean",
) -> MetricReport:
    """Micro-averaged scores over aligned per-sentence pair sets."""
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    report = MetricReport()
    for obj in OBJECTS:
        report.scores[obj] = {}
        for mode in MODES:
            mass, n_pred, n_gold = 0.0, 0, 0
            for p_pairs, g_pairs in zip(pred, gold):
                p_items, g_items = items_for(p_pairs, obj), items_for(g_pairs, obj)
                mass += matched_credit(p_items, g_items, mode, aggregate)
                n_pred += len(p_items)
                n_gold += len(g_items)
            report.scores[obj][mode] = prf(mass, n_pred, n_gold)
    return report
