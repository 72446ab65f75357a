"""Named gradient checks for every differentiable head and the full loss.

Each check builds a small float64 instance with fixed random inputs, turns
its output into a scalar with fixed random weights, and compares autograd
with central differences via :func:`ptrorl.neural.grad_check`.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Tuple

import torch
import torch.nn as nn

from .model import ModelConfig, ORLModel
from .neural import BiEncoder, CharCNN, StackEncoder, grad_check, init_parameters
from .scorers import ActionScorer, BiaffineRole, Pointer, PosAwarePointer, SpanRepr
from .synthetic import figure_sentence, random_corpus
from .transition import oracle
from .udog import RCGA, LabelVocab, TriaffineRole, build_udog, incidence_tensors
from .vocab import build_vocabs

DTYPE = torch.float64
TOLERANCE = 1e-4

Check = Tuple[Callable[[], torch.Tensor], List[torch.Tensor]]


def _rand(gen, *shape, requires_grad=False):
    t = torch.randn(*shape, generator=gen, dtype=DTYPE)
    return t.requires_grad_(requires_grad)


def _prep(module: nn.Module, seed: int) -> nn.Module:
    module.to(DTYPE)
    init_parameters(module, seed)
    return module


def _char_cnn(gen, seed) -> Check:
    m = _prep(CharCNN(12, 6, 9), seed)
    chars = torch.tensor([[2, 5, 7, 0, 0, 0], [3, 0, 0, 0, 0, 0], [4, 8, 9, 10, 11, 2]])
    w = _rand(gen, 3, 9)
    return (lambda: (m(chars) * w).sum()), list(m.parameters())


def _bi_encoder(gen, seed) -> Check:
    m = _prep(BiEncoder(5, 4), seed)
    x = _rand(gen, 4, 5, requires_grad=True)
    w = _rand(gen, 4, 8)
    return (lambda: (m(x) * w).sum()), list(m.parameters()) + [x]


def _stack_encoder(gen, seed) -> Check:
    m = _prep(StackEncoder(4, 5), seed)
    xs = [_rand(gen, 4, requires_grad=True) for _ in range(3)]
    ws = [_rand(gen, 5) for _ in range(5)]

    def fn():
        st = m.new()
        out = (st.summary() * ws[0]).sum()
        st.push(xs[0])
        st.push(xs[1])
        out = out + (st.summary() * ws[1]).sum()
        st.pop()
        out = out + (st.summary() * ws[2]).sum()
        st.push(xs[2])
        out = out + (st.summary() * ws[3]).sum()
        st.pop()
        st.pop()
        return out + (st.summary() * ws[4]).sum()

    return fn, list(m.parameters()) + xs


def _action_mlp(gen, seed) -> Check:
    m = _prep(ActionScorer(8, 6), seed)
    e = _rand(gen, 8, requires_grad=True)
    mask = torch.tensor([True, True, True, False, False, False])
    w = _rand(gen, 3)
    return (lambda: (m(e, mask)[:3] * w).sum()), list(m.parameters()) + [e]


def _pointer(gen, seed) -> Check:
    m = _prep(Pointer(6, 5), seed)
    h = _rand(gen, 5, 6, requires_grad=True)
    w = _rand(gen, 4)
    return (lambda: (m(1, h) * w).sum()), list(m.parameters()) + [h]


def _pos_pointer(gen, seed) -> Check:
    m = _prep(PosAwarePointer(6, 4, 3, 5), seed)
    h = _rand(gen, 5, 6, requires_grad=True)
    pos = torch.tensor([0, 2, 1, 3, 0])
    w = _rand(gen, 5)
    return (lambda: (m(0, h, pos) * w).sum()), list(m.parameters()) + [h]


def _span_repr(gen, seed) -> Check:
    m = _prep(SpanRepr(6, 4, 3), seed)
    h = _rand(gen, 12, 6, requires_grad=True)
    w = _rand(gen, 4)
    return (lambda: ((m(1, 3, h) + m(0, 11, h)) * w).sum()), list(m.parameters()) + [h]


def _biaffine(gen, seed) -> Check:
    m = _prep(BiaffineRole(4), seed)
    a_o, a_r = _rand(gen, 4, requires_grad=True), _rand(gen, 4, requires_grad=True)
    w = _rand(gen, 2)
    return (lambda: (m(a_o, a_r) * w).sum()), list(m.parameters()) + [a_o, a_r]


def _triaffine(gen, seed) -> Check:
    m = _prep(TriaffineRole(3, 4), seed)
    a_o, a_r, g = (_rand(gen, d, requires_grad=True) for d in (3, 3, 4))
    w = _rand(gen, 2)
    return (lambda: (m(a_o, a_r, g) * w).sum()), list(m.parameters()) + [a_o, a_r, g]


def _rcga(layer: int):
    def build(gen, seed) -> Check:
        s = figure_sentence()
        labels = LabelVocab(sorted({a.label for a in s.deps}))
        g = build_udog(s, s.gold[:3])
        node, nbr, lab = incidence_tensors(g, labels)
        m = _prep(RCGA(6, len(labels), 3, n_layers=2), seed)
        h = _rand(gen, len(s), 6, requires_grad=True)
        w = _rand(gen, len(s), 6)
        params = list(m.layers[layer].parameters())
        if layer == 0:
            params += [m.label_embed.weight, h]
        return (lambda: (m(h, node, nbr, lab) * w).sum()), params

    return build


def _composite(enhanced: bool):
    def build(gen, seed) -> Check:
        from .training import total_loss

        corpus = [figure_sentence()] + random_corpus(1, seed=seed + 3, min_tokens=6, max_tokens=8, max_terms=4)
        model = ORLModel(ModelConfig.small(syntax_enhanced=enhanced, word_dim=6, char_dim=4, char_out=6,
                                           lstm_hidden=4, stack_hidden=5, lambda_hidden=4, history_hidden=4,
                                           action_dim=3, span_dim=4, len_dim=3, pos_dim=3, label_dim=3,
                                           mlp_hidden=6, ptr_hidden=4),
                         build_vocabs(corpus), seed=seed)
        model.to(DTYPE)
        batch = [(s, oracle(s).actions) for s in corpus]
        return (lambda: total_loss(model, batch, l2=1e-3)), list(model.parameters())

    return build


HEADS: Dict[str, Callable] = {
    "char_cnn": _char_cnn,
    "bi_encoder": _bi_encoder,
    "stack_encoder": _stack_encoder,
    "action_mlp": _action_mlp,
    "pointer": _pointer,
    "pos_pointer_bde": _pos_pointer,
    "span_repr": _span_repr,
    "biaffine": _biaffine,
    "rcga_layer1": _rcga(0),
    "rcga_layer2": _rcga(1),
    "triaffine": _triaffine,
    "composite_loss": _composite(False),
    "composite_loss_syntax": _composite(True),
}


def check_head(name: str, seed: int = 0, corrupt: bool = False, max_entries: Optional[int] = 12) -> float:
    gen = torch.Generator().manual_seed(seed)
    fn, params = HEADS[name](gen, seed)
    perturb = (lambda g: g * 1.01 + 1e-3) if corrupt else None
    return grad_check(fn, params, max_entries=max_entries, seed=seed, perturb=perturb)


def run_all(seed: int = 0, corrupt: Optional[str] = None) -> Dict[str, float]:
    return {name: check_head(name, seed, corrupt=(name == corrupt)) for name in HEADS}
