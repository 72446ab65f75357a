"""The neural transition parser: state encoders, scoring heads and decoding.

``ORLModel`` owns the parameters. A :class:`ParseContext` walks one
sentence, mirroring every transition in the stack/lambda/history encoders
so that scores always reflect the current state.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import Kind, RoleType, Sentence, TermSpan
from .neural import BiEncoder, SequenceEncoder, StackEncoder, init_parameters
from .scorers import (
    ActionScorer,
    BiaffineRole,
    Pointer,
    PosAwarePointer,
    SpanRepr,
    StateFeatures,
    WordRepr,
)
from .transition import (
    START_TAGS,
    TAGS,
    Action,
    Tag,
    TransitionState,
    apply,
    initial_state,
    valid_actions,
)
from .udog import RCGA, LabelVocab, TriaffineRole, build_udog, graph_pool, incidence_tensors
from .vocab import Vocabs


class IllegalGoldAction(ValueError):
    pass


@dataclass
class ModelConfig:
    word_dim: int = 300
    char_dim: int = 50
    char_out: int = 50
    lstm_hidden: int = 150
    stack_hidden: int = 300
    lambda_hidden: int = 150
    history_hidden: int = 150
    action_dim: int = 50
    span_dim: int = 50
    len_dim: int = 50
    pos_dim: int = 50
    label_dim: int = 50
    mlp_hidden: int = 200
    ptr_hidden: int = 150
    rcga_layers: int = 2
    syntax_enhanced: bool = False
    # "arc": re-encode the graph after every detected pair; "shift": once per SHIFT.
    graph_update: str = "arc"

    @classmethod
    def small(cls, **kw) -> "ModelConfig":
        base = dict(word_dim=32, char_dim=16, char_out=24, lstm_hidden=32, stack_hidden=32,
                    lambda_hidden=32, history_hidden=32, action_dim=16, span_dim=24, len_dim=8,
                    pos_dim=8, label_dim=8, mlp_hidden=48, ptr_hidden=32)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class ORLModel(nn.Module):
    def __init__(self, cfg: ModelConfig, vocabs: Vocabs, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.vocabs = vocabs
        self.pos_vocab = vocabs.pos
        self.label_vocab = LabelVocab(vocabs.dep_labels)
        H = 2 * cfg.lstm_hidden

        self.word = WordRepr(len(vocabs.words), cfg.word_dim, len(vocabs.chars), cfg.char_dim, cfg.char_out)
        self.encoder = BiEncoder(self.word.out_dim, cfg.lstm_hidden)
        self.span = SpanRepr(H, cfg.span_dim, cfg.len_dim)
        self.stack_o = StackEncoder(cfg.span_dim, cfg.stack_hidden)
        self.stack_r = StackEncoder(cfg.span_dim, cfg.stack_hidden)
        self.lambda_enc = SequenceEncoder(cfg.span_dim, cfg.lambda_hidden)
        self.action_embed = nn.Embedding(len(TAGS), cfg.action_dim)
        self.history_enc = SequenceEncoder(cfg.action_dim, cfg.history_hidden)
        self.beta_empty = nn.Parameter(torch.zeros(H))

        state_dim = cfg.lambda_hidden + 2 * cfg.stack_hidden + cfg.history_hidden + H
        if cfg.syntax_enhanced:
            state_dim += H
            self.pointer = PosAwarePointer(H, len(self.pos_vocab), cfg.pos_dim, cfg.ptr_hidden)
            self.rcga = RCGA(H, len(self.label_vocab), cfg.label_dim, cfg.rcga_layers)
            self.role = TriaffineRole(cfg.span_dim, H)
        else:
            self.pointer = Pointer(H, cfg.ptr_hidden)
            self.role = BiaffineRole(cfg.span_dim)
        self.action = ActionScorer(state_dim, cfg.mlp_hidden)
        self.h_dim = H
        init_parameters(self, seed)

    @property
    def dtype(self) -> torch.dtype:
        return self.beta_empty.dtype

    def encode(self, s: Sentence) -> Tuple[torch.Tensor, torch.Tensor]:
        """Contextual token states (T, H) and POS ids (T,)."""
        words = torch.tensor([self._word_id(t.surface) for t in s.tokens], dtype=torch.long)
        width = max(len(t.surface) for t in s.tokens)
        chars = torch.zeros(len(s), max(width, 1), dtype=torch.long)
        for i, t in enumerate(s.tokens):
            for k, c in enumerate(t.surface):
                chars[i, k] = self.vocabs.chars.lookup(c)
        pos = torch.tensor([self.pos_vocab.lookup(t.pos) for t in s.tokens], dtype=torch.long)
        return self.encoder(self.word(words, chars)), pos

    def _word_id(self, w: str) -> int:
        v = self.vocabs.words
        if w in v:
            return v.lookup(w)
        return v.lookup(w.lower())

    def context(self, s: Sentence) -> "ParseContext":
        return ParseContext(self, s)

    def l2(self) -> torch.Tensor:
        return sum((p * p).sum() for p in self.parameters())

    def sentence_loss(self, s: Sentence, actions: List[Action]) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Teacher-forced (L_a, L_p, L_c) summed over the action sequence."""
        ctx = self.context(s)
        zero = self.beta_empty.new_zeros(())
        la, lp, lc = zero, zero, zero
        for a in actions:
            da, dp, dc = ctx.loss_step(a)
            la, lp, lc = la + da, lp + dp, lc + dc
            ctx.advance(a)
        return la, lp, lc

    @torch.no_grad()
    def parse(self, s: Sentence) -> Tuple[frozenset, List[Action]]:
        ctx = self.context(s)
        while not ctx.state.is_terminal:
            ctx.advance(ctx.predict())
        return ctx.state.Y, list(ctx.state.actions)

    def policy(self, s: Sentence):
        """Greedy decision function for :func:`ptrorl.transition.run`."""
        ctx = self.context(s)

        def decide(st: TransitionState) -> Action:
            for a in st.actions[len(ctx.state.actions):]:
                ctx.advance(a)
            with torch.no_grad():
                return ctx.predict()

        return decide


class ParseContext:
    def __init__(self, model: ORLModel, s: Sentence):
        self.model = model
        self.sentence = s
        self.state = initial_state(s)
        self.enhanced = model.cfg.syntax_enhanced
        self.stacks = {Kind.OPINION: model.stack_o.new(), Kind.ROLE: model.stack_r.new()}
        self.alpha: Dict[Kind, List[torch.Tensor]] = {Kind.OPINION: [], Kind.ROLE: []}
        self.lambda_out = model.lambda_enc.output(None)
        self.history = None
        self._span_cache: Dict[TermSpan, torch.Tensor] = {}
        self.graph = None
        self.graph_h = None
        self.g = None
        if len(s) == 0:
            self.h = None
            return
        self.h, self.pos_ids = model.encode(s)
        if self.enhanced:
            self.graph = build_udog(s)
            self._encode_graph()

    def _encode_graph(self) -> None:
        node, nbr, lab = incidence_tensors(self.graph, self.model.label_vocab)
        self.graph_h = self.model.rcga(self.h, node, nbr, lab)
        self.g = graph_pool(self.graph_h)
        self._graph_dirty = False

    def term_vec(self, t: TermSpan) -> torch.Tensor:
        v = self._span_cache.get(t)
        if v is None:
            v = self._span_cache[t] = self.model.span(t.start, t.end, self.h)
        return v

    def features(self) -> StateFeatures:
        m = self.model
        st = self.state
        e_beta = self.h[st.front] if st.beta else m.beta_empty
        return StateFeatures(
            e_lambda=self.lambda_out,
            e_o=self.stacks[Kind.OPINION].summary(),
            e_r=self.stacks[Kind.ROLE].summary(),
            e_A=m.history_enc.output(self.history),
            e_beta=e_beta,
            g=self.g if self.enhanced else None,
        )

    def action_logprobs(self) -> torch.Tensor:
        legal = valid_actions(self.state)
        mask = torch.tensor([t in legal for t in TAGS])
        return self.model.action(self.features().concat(), mask)

    def pointer_logprobs(self, start: int) -> torch.Tensor:
        if self.enhanced:
            return self.model.pointer(start, self.graph_h, self.pos_ids)
        return self.model.pointer(start, self.h)

    def _graph_spans(self, opinion: TermSpan, role: TermSpan):
        span = self.model.span
        return span(opinion.start, opinion.end, self.graph_h), span(role.start, role.end, self.graph_h)

    def role_scores(self, opinion: TermSpan, role: TermSpan) -> torch.Tensor:
        """Log-probabilities (biaffine) or per-class sigmoid scores (triaffine)."""
        if self.enhanced:
            return self.model.role(*self._graph_spans(opinion, role), self.g)
        return self.model.role(self.term_vec(opinion), self.term_vec(role))

    def _arc_terms(self) -> Tuple[TermSpan, TermSpan]:
        lam = self.state.lam
        top = self.state.opposite_stack()[-1]
        return (lam, top) if lam.kind is Kind.OPINION else (top, lam)

    def loss_step(self, a: Action) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if a.tag not in valid_actions(self.state):
            raise IllegalGoldAction(f"gold action {a!r} illegal in current state")
        zero = self.model.beta_empty.new_zeros(())
        la = -self.action_logprobs()[a.tag.index]
        lp = lc = zero
        if a.tag in START_TAGS:
            lp = -self.pointer_logprobs(self.state.front)[a.end_index - self.state.front]
        elif a.tag is Tag.ARC:
            gold = a.role_type.index
            if self.enhanced:
                logits = self.model.role.logits(*self._graph_spans(*self._arc_terms()), self.g)
                target = torch.zeros_like(logits)
                target[gold] = 1.0
                lc = F.binary_cross_entropy_with_logits(logits, target, reduction="sum")
            else:
                lc = -self.role_scores(*self._arc_terms())[gold]
        return la, lp, lc

    def predict(self) -> Action:
        tag = TAGS[int(self.action_logprobs().argmax())]
        if tag in START_TAGS:
            start = self.state.front
            return Action(tag, end_index=start + int(self.pointer_logprobs(start).argmax()))
        if tag is Tag.ARC:
            return Action(tag, role_type=RoleType.from_index(int(self.role_scores(*self._arc_terms()).argmax())))
        return Action(tag)

    def advance(self, a: Action) -> None:
        """Apply ``a`` to the transition state and mirror it in the encoders."""
        before = self.state
        self.state = apply(before, a)
        m = self.model
        self.history = m.history_enc.step(self.history, m.action_embed.weight[a.tag.index])
        if a.tag in START_TAGS:
            self.lambda_out = m.lambda_enc.output(m.lambda_enc.step(None, self.term_vec(self.state.lam)))
        elif a.tag in (Tag.ARC, Tag.NO_ARC):
            kind = before.lam.kind.opposite
            self.alpha[kind].append(self.stacks[kind].pop())
            if a.tag is Tag.ARC and self.enhanced:
                self.graph = self.graph.add_pair(self.state.pairs[-1])
                if m.cfg.graph_update == "arc":
                    self._encode_graph()
                else:
                    self._graph_dirty = True
        elif a.tag is Tag.SHIFT:
            for kind in (Kind.OPINION, Kind.ROLE):
                stack = self.stacks[kind]
                while self.alpha[kind]:
                    stack.push(self.alpha[kind].pop())
            self.stacks[before.lam.kind].push(self.term_vec(before.lam))
            self.lambda_out = m.lambda_enc.output(None)
            if self.enhanced and self._graph_dirty:
                self._encode_graph()
