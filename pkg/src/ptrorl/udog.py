"""Unified dependency-opinion graph and its relation-centered encoder.

The graph merges dependency arcs, one inter-term edge per detected pair
(opinion tail -> role tail, labelled with the role type) and tail-first
intra-term edges (term tail -> every other token of the term). Each node
also carries a self-loop. Aggregation sees every edge from both endpoints;
the direction is folded into the label vocabulary.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ROOT, Kind, OpinionRolePair, Sentence, TermSpan
from .scorers import N_ROLE_TYPES

DEP, INTER, INTRA, SELF = "dep", "inter_term", "intra_term", "self"
TERM_LABELS = {Kind.OPINION: "opn", Kind.ROLE: "role"}
UNK_LABEL = "<unk>"


@dataclass(frozen=True)
class UdogEdge:
    src: int
    dst: int
    label: str
    family: str


def _term_edges(term: TermSpan) -> Tuple[UdogEdge, ...]:
    label = TERM_LABELS[term.kind]
    return tuple(UdogEdge(term.tail, k, label, INTRA) for k in term.tokens() if k != term.tail)


def _pair_edge(p: OpinionRolePair) -> UdogEdge:
    return UdogEdge(p.opinion.tail, p.role.tail, p.role_type.value, INTER)


class Udog:
    """Immutable multigraph; :meth:`add_pair` returns an updated copy."""

    def __init__(
        self,
        n_nodes: int,
        dep_edges: Tuple[UdogEdge, ...],
        pair_edges: Optional[Dict[OpinionRolePair, UdogEdge]] = None,
        term_edges: Optional[Dict[TermSpan, Tuple[UdogEdge, ...]]] = None,
    ):
        self.n_nodes = n_nodes
        self.dep_edges = dep_edges
        self.pair_edges = dict(pair_edges or {})
        self.term_edges = dict(term_edges or {})

    def add_pair(self, p: OpinionRolePair) -> "Udog":
        for t in (p.opinion, p.role):
            if not 0 <= t.start <= t.end < self.n_nodes:
                raise ValueError(f"term {t!r} outside graph of {self.n_nodes} nodes")
        if p in self.pair_edges:
            return self
        g = Udog(self.n_nodes, self.dep_edges, self.pair_edges, self.term_edges)
        g.pair_edges[p] = _pair_edge(p)
        for t in (p.opinion, p.role):
            if t not in g.term_edges:
                g.term_edges[t] = _term_edges(t)
        return g

    def self_loops(self) -> List[UdogEdge]:
        return [UdogEdge(i, i, SELF, SELF) for i in range(self.n_nodes)]

    def edges(self) -> List[UdogEdge]:
        out = list(self.dep_edges)
        out.extend(self.pair_edges[p] for p in sorted(self.pair_edges))
        for t in sorted(self.term_edges):
            out.extend(self.term_edges[t])
        out.extend(self.self_loops())
        return out

    def edge_multiset(self) -> Counter:
        return Counter(self.edges())

    def family_counts(self) -> Counter:
        return Counter(e.family for e in self.edges())

    def __eq__(self, other) -> bool:
        return isinstance(other, Udog) and self.n_nodes == other.n_nodes and self.edge_multiset() == other.edge_multiset()

    def incidence(self) -> List[Tuple[int, int, str]]:
        """(node, neighbour, directed label) for every edge end; self-loops appear once."""
        inc = []
        for e in self.edges():
            if e.family == SELF:
                inc.append((e.src, e.dst, SELF))
            else:
                inc.append((e.src, e.dst, e.label + ":out"))
                inc.append((e.dst, e.src, e.label + ":in"))
        return inc

    def to_json(self, sent_id: str = "") -> str:
        return json.dumps({
            "id": sent_id,
            "n_nodes": self.n_nodes,
            "edges": [
                {"src": e.src + 1, "dst": e.dst + 1, "label": e.label, "family": e.family}
                for e in self.edges()
            ],
        })


def build_udog(s: Sentence, pairs: Iterable[OpinionRolePair] = ()) -> Udog:
    deps = tuple(
        UdogEdge(arc.head, arc.dependent, arc.label, DEP)
        for arc in sorted(s.deps, key=lambda a: a.dependent)
        if arc.head != ROOT
    )
    pair_edges = {}
    term_edges = {}
    for p in pairs:
        pair_edges[p] = _pair_edge(p)
        for t in (p.opinion, p.role):
            term_edges.setdefault(t, _term_edges(t))
    return Udog(len(s), deps, pair_edges, term_edges)


class LabelVocab:
    """Directed edge labels: each base label in both directions, plus the self-loop label."""

    def __init__(self, dep_labels: Sequence[str]):
        base = [UNK_LABEL] + sorted(set(dep_labels)) + ["hd", "tg", "opn", "role"]
        self.labels = [SELF] + [f"{b}:{d}" for b in base for d in ("out", "in")]
        self.index = {l: i for i, l in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def lookup(self, label: str) -> int:
        if label in self.index:
            return self.index[label]
        direction = label.rsplit(":", 1)[-1]
        return self.index[f"{UNK_LABEL}:{direction}"]


def incidence_tensors(g: Udog, labels: LabelVocab) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    inc = g.incidence()
    node = torch.tensor([i for i, _, _ in inc], dtype=torch.long)
    nbr = torch.tensor([j for _, j, _ in inc], dtype=torch.long)
    lab = torch.tensor([labels.lookup(l) for _, _, l in inc], dtype=torch.long)
    return node, nbr, lab


class RCGALayer(nn.Module):
    """One round of attention over incident labelled edges.

    For node i and incident edge v to neighbour j, the edge message is
    [h_j; x_v]; attention weights are a softmax over the node's edges of
    leakyReLU(W8 [h_i; h_j; x_v]); the output is the attention-weighted sum
    of W9 [h_j; x_v] divided by the node's edge count.
    """

    def __init__(self, in_dim: int, label_dim: int, out_dim: int):
        super().__init__()
        self.W8 = nn.Linear(2 * in_dim + label_dim, 1, bias=False)
        self.W9 = nn.Linear(in_dim + label_dim, out_dim, bias=False)

    def forward(self, h: torch.Tensor, node: torch.Tensor, nbr: torch.Tensor, x_lab: torch.Tensor) -> torch.Tensor:
        n = h.size(0)
        hbar = torch.cat([h[nbr], x_lab], dim=1)
        s = F.leaky_relu(self.W8(torch.cat([h[node], hbar], dim=1))).squeeze(-1)
        m = torch.full((n,), float("-inf"), dtype=s.dtype).scatter_reduce(0, node, s.detach(), "amax")
        ex = torch.exp(s - m[node])
        denom = torch.zeros(n, dtype=s.dtype).index_add(0, node, ex)
        rho = ex / denom[node]
        count = torch.zeros(n, dtype=s.dtype).index_add(0, node, torch.ones_like(s))
        msg = rho.unsqueeze(1) * self.W9(hbar)
        return torch.zeros(n, msg.size(1), dtype=s.dtype).index_add(0, node, msg) / count.unsqueeze(1)


class RCGA(nn.Module):
    """Stacked layers (two by default) sharing one edge-label embedding table."""

    def __init__(self, dim: int, n_labels: int, label_dim: int = 50, n_layers: int = 2):
        super().__init__()
        self.label_embed = nn.Embedding(n_labels, label_dim)
        self.layers = nn.ModuleList(RCGALayer(dim, label_dim, dim) for _ in range(n_layers))

    def forward(self, h: torch.Tensor, node: torch.Tensor, nbr: torch.Tensor, lab: torch.Tensor) -> torch.Tensor:
        x_lab = self.label_embed(lab)
        for layer in self.layers:
            h = layer(h, node, nbr, x_lab)
        return h


def graph_pool(h: torch.Tensor) -> torch.Tensor:
    return h.max(dim=0).values


class TriaffineRole(nn.Module):
    """Sigmoid of the trilinear form [a_o; 1] x a_r x [g; 1], one weight slab per role type.

    Ties in the decision go to index 0 (holder).
    """

    def __init__(self, span_dim: int, g_dim: int):
        super().__init__()
        self.W10 = nn.Parameter(torch.zeros(N_ROLE_TYPES, span_dim + 1, span_dim, g_dim + 1))

    def logits(self, a_o: torch.Tensor, a_r: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
        one = a_o.new_ones(1)
        return torch.einsum("p,cpqs,q,s->c", torch.cat([a_o, one]), self.W10, a_r, torch.cat([g, one]))

    def forward(self, a_o: torch.Tensor, a_r: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(a_o, a_r, g))
