"""Per-decision scoring heads: word features, actions, pointer, spans, role typing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .neural import CharCNN

N_ACTIONS = 6
N_ROLE_TYPES = 2
N_LENGTH_BUCKETS = 10


class EmptyMask(ValueError):
    pass


@dataclass
class StateFeatures:
    e_lambda: torch.Tensor
    e_o: torch.Tensor
    e_r: torch.Tensor
    e_A: torch.Tensor
    e_beta: torch.Tensor
    g: Optional[torch.Tensor] = None

    def concat(self) -> torch.Tensor:
        parts = [self.e_lambda, self.e_o, self.e_r, self.e_A, self.e_beta]
        if self.g is not None:
            parts.append(self.g)
        return torch.cat(parts)


class WordRepr(nn.Module):
    """Word embedding row concatenated with character CNN features."""

    def __init__(self, n_words: int, word_dim: int, n_chars: int, char_dim: int = 50, char_out: int = 50):
        super().__init__()
        self.word_embed = nn.Embedding(n_words, word_dim)
        self.char_cnn = CharCNN(n_chars, char_dim, char_out)
        self.out_dim = word_dim + char_out

    def forward(self, word_ids: torch.Tensor, char_ids: torch.Tensor) -> torch.Tensor:
        return torch.cat([self.word_embed(word_ids), self.char_cnn(char_ids)], dim=1)


class ActionScorer(nn.Module):
    def __init__(self, state_dim: int, hidden: int):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(state_dim, hidden), nn.Tanh(), nn.Linear(hidden, N_ACTIONS))

    def forward(self, e_s: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Masked log-probabilities; illegal actions get -inf (probability exactly 0)."""
        if not bool(mask.any()):
            raise EmptyMask("no legal action to score")
        logits = self.mlp(e_s).masked_fill(~mask, float("-inf"))
        return F.log_softmax(logits, dim=-1)


class Pointer(nn.Module):
    """Scores every candidate end k >= i for a term starting at i."""

    def __init__(self, h_dim: int, hidden: int):
        super().__init__()
        self.W1 = nn.Linear(h_dim, hidden, bias=False)
        self.W2 = nn.Linear(h_dim, hidden, bias=False)
        self.v = nn.Linear(hidden, 1, bias=False)

    def scores(self, i: int, h: torch.Tensor) -> torch.Tensor:
        u = torch.tanh(self.W1(h[i]) + self.W2(h[i:]))
        return self.v(u).squeeze(-1)

    def forward(self, i: int, h: torch.Tensor) -> torch.Tensor:
        """Log-distribution over ends i..T-1 (index 0 = end at i)."""
        return F.log_softmax(self.scores(i, h), dim=-1)


class PosAwarePointer(nn.Module):
    """Pointer with POS features and a boundary-difference term.

    POS rows ``n_tags`` and ``n_tags + 1`` are the left (position -1) and
    right (position T) sentinels.
    """

    def __init__(self, h_dim: int, n_tags: int, pos_dim: int, hidden: int):
        super().__init__()
        self.n_tags = n_tags
        self.pos_embed = nn.Embedding(n_tags + 2, pos_dim)
        self.W5 = nn.Linear(h_dim + pos_dim, hidden, bias=False)
        self.W6 = nn.Linear(h_dim + pos_dim, hidden, bias=False)
        self.W7 = nn.Linear(2 * pos_dim, hidden, bias=False)
        self.v = nn.Linear(hidden, 1, bias=False)

    def padded_pos(self, pos_ids: torch.Tensor) -> torch.Tensor:
        """POS embeddings for positions -1..T (T + 2 rows)."""
        left = torch.tensor([self.n_tags], dtype=torch.long)
        right = torch.tensor([self.n_tags + 1], dtype=torch.long)
        return self.pos_embed(torch.cat([left, pos_ids, right]))

    def boundary_features(self, p: torch.Tensor) -> torch.Tensor:
        """Differences [x_k - x_{k-1}; x_{k+1} - x_k] for k = 0..T-1, given padded rows."""
        return torch.cat([p[1:-1] - p[:-2], p[2:] - p[1:-1]], dim=1)

    def scores(self, i: int, h: torch.Tensor, pos_ids: torch.Tensor) -> torch.Tensor:
        p = self.padded_pos(pos_ids)
        x = p[1:-1]
        bde = self.W7(self.boundary_features(p)[i:])
        q = self.W5(torch.cat([h[i], x[i]]))
        keys = self.W6(torch.cat([h[i:], x[i:]], dim=1))
        return self.v(torch.tanh(q + keys + bde)).squeeze(-1)

    def forward(self, i: int, h: torch.Tensor, pos_ids: torch.Tensor) -> torch.Tensor:
        return F.log_softmax(self.scores(i, h, pos_ids), dim=-1)


def length_bucket(i: int, j: int) -> int:
    """Row index for span length j - i + 1; lengths 1..9 own a row, longer ones share the last."""
    return min(j - i + 1, N_LENGTH_BUCKETS) - 1


class SpanRepr(nn.Module):
    def __init__(self, h_dim: int, out_dim: int, len_dim: int = 50):
        super().__init__()
        self.len_embed = nn.Embedding(N_LENGTH_BUCKETS, len_dim)
        self.W3 = nn.Linear(2 * h_dim + len_dim, out_dim, bias=False)
        self.out_dim = out_dim

    def forward(self, i: int, j: int, h: torch.Tensor) -> torch.Tensor:
        length = self.len_embed.weight[length_bucket(i, j)]
        return self.W3(torch.cat([h[i], h[j], length]))


class BiaffineRole(nn.Module):
    """tanh-squashed bilinear score per role type, then softmax."""

    def __init__(self, dim: int):
        super().__init__()
        self.W4 = nn.Parameter(torch.zeros(N_ROLE_TYPES, dim, dim))

    def scores(self, a_o: torch.Tensor, a_r: torch.Tensor) -> torch.Tensor:
        return torch.tanh(torch.einsum("p,cpq,q->c", a_o, self.W4, a_r))

    def forward(self, a_o: torch.Tensor, a_r: torch.Tensor) -> torch.Tensor:
        return F.log_softmax(self.scores(a_o, a_r), dim=-1)
