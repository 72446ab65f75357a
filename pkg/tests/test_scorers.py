import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from ptrorl.core import Sentence
from ptrorl.model import ModelConfig, ORLModel
from ptrorl.neural import init_parameters
from ptrorl.scorers import (
    ActionScorer,
    BiaffineRole,
    EmptyMask,
    Pointer,
    PosAwarePointer,
    SpanRepr,
    StateFeatures,
    length_bucket,
)
from ptrorl.vocab import build_vocabs

D = torch.float64


def prep(m, seed=0):
    m.to(D)
    init_parameters(m, seed)
    return m


def softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def test_word_repr(toy_corpus):
    m = ORLModel(ModelConfig.small(), build_vocabs(toy_corpus), seed=0).to(D)
    s = Sentence.build(["says", "zzzunseen", "qqqunseen"])
    x = m.word(
        torch.tensor([m._word_id(w) for w in s.words]),
        torch.tensor([[m.vocabs.chars.lookup(c) for c in w] for w in ("says", "zzzu", "qqqu")]),
    )
    assert x.shape == (3, m.cfg.word_dim + m.cfg.char_out)
    unk = m.vocabs.words.unk
    assert m._word_id("zzzunseen") == unk
    assert torch.equal(x[0, : m.cfg.word_dim], m.word.word_embed.weight[m._word_id("says")])
    assert torch.equal(x[1, : m.cfg.word_dim], x[2, : m.cfg.word_dim])


def test_state_features_order():
    parts = [torch.full((2,), float(i)) for i in range(6)]
    f = StateFeatures(*parts[:5])
    assert f.concat().tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    assert StateFeatures(*parts).concat().shape == (12,)


def test_action_masking():
    m = prep(ActionScorer(8, 6))
    e = torch.randn(8, dtype=D)
    single = torch.tensor([False, False, True, False, False, False])
    p = m(e, single).exp()
    assert p[2] == 1.0 and p.sum() == 1.0
    three = torch.tensor([True, True, True, False, False, False])
    p = m(e, three).exp()
    assert torch.all(p[3:] == 0) and abs(p.sum().item() - 1) < 1e-12
    e.requires_grad_(True)
    logp = m(e, three)
    (logp[:3].sum()).backward()
    assert torch.all(m.mlp[2].weight.grad[3:] == 0)
    with pytest.raises(EmptyMask):
        m(e, torch.zeros(6, dtype=torch.bool))


def pointer_oracle(W1, W2, v, h, i):
    scores = [float(v @ np.tanh(W1 @ h[i] + W2 @ h[k])) for k in range(i, len(h))]
    return softmax(np.array(scores))


def test_pointer_matches_brute_force():
    m = prep(Pointer(6, 5), seed=2)
    h = torch.randn(4, 6, dtype=D)
    W1, W2, v = (x.detach().numpy() for x in (m.W1.weight, m.W2.weight, m.v.weight[0]))
    for i in range(4):
        got = m(i, h).exp().detach().numpy()
        np.testing.assert_allclose(got, pointer_oracle(W1, W2, v, h.numpy(), i), atol=1e-12)


def test_pointer_singleton_and_shift_invariance():
    m = prep(Pointer(6, 5), seed=2)
    h = torch.randn(5, 6, dtype=D)
    assert m(4, h).exp().tolist() == [1.0]
    s = m.scores(1, h)
    probs = torch.softmax(s, -1)
    assert abs(probs.sum().item() - 1) < 1e-6
    assert int((s + 3.7).argmax()) == int(s.argmax())
    assert torch.allclose(torch.softmax(s + 3.7, -1), probs)


def test_pos_pointer_matches_brute_force():
    m = prep(PosAwarePointer(6, 4, 3, 5), seed=3)
    h = torch.randn(5, 6, dtype=D)
    pos = torch.tensor([0, 3, 1, 1, 2])
    E = m.pos_embed.weight.detach().numpy()
    W5, W6, W7, v = (x.detach().numpy() for x in (m.W5.weight, m.W6.weight, m.W7.weight, m.v.weight[0]))
    H = h.numpy()
    T = 5

    def x(k):
        if k < 0:
            return E[4]
        if k >= T:
            return E[5]
        return E[pos[k]]

    for i in range(T):
        scores = []
        for k in range(i, T):
            bde = W7 @ np.concatenate([x(k) - x(k - 1), x(k + 1) - x(k)])
            u = np.tanh(W5 @ np.concatenate([H[i], x(i)]) + W6 @ np.concatenate([H[k], x(k)]) + bde)
            scores.append(v @ u)
        got = m(i, h, pos).exp().detach().numpy()
        np.testing.assert_allclose(got, softmax(np.array(scores)), atol=1e-12)


def test_pos_pointer_left_sentinel():
    m = prep(PosAwarePointer(6, 4, 3, 5), seed=3)
    pos = torch.tensor([0, 1, 2])
    p = m.padded_pos(pos)
    f = m.boundary_features(p)
    assert torch.equal(f[0, :3], m.pos_embed.weight[0] - m.pos_embed.weight[4])
    assert torch.equal(f[2, 3:], m.pos_embed.weight[5] - m.pos_embed.weight[2])
    assert not torch.equal(m.pos_embed.weight[4], m.pos_embed.weight[5])


def test_bde_ablation_identity():
    H, P, K = 6, 3, 5
    pos_ptr = prep(PosAwarePointer(H, 4, P, K), seed=4)
    plain = prep(Pointer(H, K), seed=5)
    with torch.no_grad():
        pos_ptr.pos_embed.weight.zero_()
        pos_ptr.W7.weight.zero_()
        plain.W1.weight.copy_(pos_ptr.W5.weight[:, :H])
        plain.W2.weight.copy_(pos_ptr.W6.weight[:, :H])
        plain.v.weight.copy_(pos_ptr.v.weight)
    h = torch.randn(6, H, dtype=D)
    pos = torch.tensor([0, 1, 2, 3, 0, 1])
    for i in range(6):
        assert torch.allclose(pos_ptr.scores(i, h, pos), plain.scores(i, h), atol=1e-14)


def test_span_buckets():
    assert length_bucket(3, 3) == 0
    assert length_bucket(0, 8) == 8
    assert length_bucket(0, 9) == length_bucket(0, 40) == 9
    m = prep(SpanRepr(4, 5, 3))
    h = torch.randn(60, 4, dtype=D)
    W = m.W3.weight.detach()
    got = m(10, 40, h)
    expect = W @ torch.cat([h[10], h[40], m.len_embed.weight[9]])
    assert torch.allclose(got, expect)


def test_biaffine_zero_is_uniform():
    m = BiaffineRole(4).to(D)
    p = m(torch.randn(4, dtype=D), torch.randn(4, dtype=D)).exp()
    assert p.tolist() == [0.5, 0.5]


def test_biaffine_matches_brute_force_and_is_asymmetric():
    m = prep(BiaffineRole(4), seed=6)
    a, b = torch.randn(4, dtype=D), torch.randn(4, dtype=D)
    W = m.W4.detach().numpy()
    an, bn = a.numpy(), b.numpy()
    y = np.array([np.tanh(sum(an[p] * W[c, p, q] * bn[q] for p in range(4) for q in range(4))) for c in range(2)])
    np.testing.assert_allclose(m(a, b).exp().detach().numpy(), softmax(y), atol=1e-12)
    assert not torch.allclose(m.scores(a, b), m.scores(b, a))
    with torch.no_grad():
        m.W4.copy_((m.W4 + m.W4.transpose(1, 2)) / 2)
    assert torch.allclose(m.scores(a, b), m.scores(b, a))


@given(st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_pointer_mass(seed):
    torch.manual_seed(seed)
    m = prep(Pointer(4, 3), seed=seed)
    h = torch.randn(7, 4, dtype=D)
    for i in range(7):
        p = m(i, h).exp()
        assert p.shape == (7 - i,)
        assert abs(p.sum().item() - 1) < 1e-6
