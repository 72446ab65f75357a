import itertools
import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ptrorl.core import Kind, OpinionRolePair, Sentence, TermSpan
from ptrorl.data import (
    DimensionMismatch,
    HeaderMismatch,
    ParseError,
    TooFewDocuments,
    load_embeddings,
    make_header,
    prediction_record,
    read_corpus,
    read_predictions,
    split_folds,
    write_corpus,
)
from ptrorl.metrics import MODES, OBJECTS, AlignmentError, credit, evaluate, items_for, matched_credit
from ptrorl.synthetic import random_corpus
from ptrorl.vocab import Vocab


def pair(o, r, t):
    return OpinionRolePair.make(o, r, t)


# --- corpus files -----------------------------------------------------------

def test_corpus_round_trip(tmp_path, toy_corpus):
    path = tmp_path / "c.jsonl"
    write_corpus(path, toy_corpus)
    header, back = read_corpus(path)
    assert header["role_types"] == ["hd", "tg"]
    assert [s.words for s in back] == [s.words for s in toy_corpus]
    assert [s.gold for s in back] == [s.gold for s in toy_corpus]
    assert [s.deps for s in back] == [s.deps for s in toy_corpus]


def test_figure_record_is_one_based(tmp_path, fig):
    path = tmp_path / "fig.jsonl"
    write_corpus(path, [fig])
    rec = json.loads(path.read_text().splitlines()[1])
    assert len(rec["pairs"]) == 4
    assert {"opinion": [5, 6], "role": [7, 9], "type": "tg"} in rec["pairs"]
    assert rec["heads"][1] == 0


def _write(path, header, *records):
    path.write_text("\n".join(json.dumps(x) for x in (header, *records)) + "\n")


def test_parse_errors_carry_line(tmp_path, fig):
    path = tmp_path / "bad.jsonl"
    header = make_header([fig])
    good = {"id": "a", "tokens": ["x"], "pos": ["NN"], "heads": [0], "deprels": ["root"]}
    _write(path, header, good, {**good, "heads": [0, 1]})
    with pytest.raises(ParseError) as e:
        read_corpus(path)
    assert e.value.line == 3
    _write(path, header, {**good, "pos": ["XYZ"]})
    with pytest.raises(ParseError, match="XYZ"):
        read_corpus(path)
    _write(path, header, {**good, "pairs": [{"opinion": [1, 1], "role": [1, 2], "type": "hd"}]})
    with pytest.raises(ParseError):
        read_corpus(path)
    path.write_text(json.dumps(header) + "\n{not json\n")
    with pytest.raises(ParseError) as e:
        read_corpus(path)
    assert e.value.line == 2


def test_header_mismatch(tmp_path, fig):
    path = tmp_path / "h.jsonl"
    _write(path, {**make_header([fig]), "version": 2})
    with pytest.raises(HeaderMismatch):
        read_corpus(path)
    path.write_text("")
    with pytest.raises(HeaderMismatch):
        read_corpus(path)


def test_predictions_round_trip(tmp_path, fig):
    path = tmp_path / "p.jsonl"
    path.write_text(json.dumps(prediction_record(fig, fig.gold[:2])) + "\n")
    [(sid, pred, gold)] = read_predictions(path)
    assert sid == "fig1" and set(pred) == set(fig.gold[:2]) and set(gold) == set(fig.gold)


# --- embeddings -------------------------------------------------------------

def test_embeddings(tmp_path):
    path = tmp_path / "e.txt"
    path.write_text("the 1 2 3\nagency 4 5 6\nzebra 7 8 9\n")
    vocab = Vocab(["the", "agency", "money"])
    table = load_embeddings(path, vocab, seed=0)
    assert table.vectors.shape == (len(vocab), 3)
    assert table.vectors[vocab.lookup("agency")].tolist() == [4, 5, 6]
    assert table.matched == 2 and table.coverage == 2 / len(vocab)
    assert np.abs(table.vectors[vocab.lookup("money")]).max() <= 0.1
    path.write_text("the 1 2 3\nagency 4 5\n")
    with pytest.raises(DimensionMismatch):
        load_embeddings(path, vocab)


# --- metrics ----------------------------------------------------------------

def test_perfect_prediction(fig):
    r = evaluate([fig.gold], [fig.gold])
    for obj in OBJECTS:
        for mode in MODES:
            assert r[obj, mode].f1 == 1.0


def test_partial_overlap_example():
    gold_t, pred_t = TermSpan(2, 3, Kind.ROLE), TermSpan(3, 3, Kind.ROLE)
    assert credit(pred_t, gold_t, "exact") == 0
    assert credit(pred_t, gold_t, "binary") == 1
    assert credit(pred_t, gold_t, "proportional") == 0.5
    r = evaluate([[pair((1, 1), (3, 3), "tg")]], [[pair((1, 1), (2, 3), "tg")]])
    assert r["O-R", "exact"].f1 == 0
    assert r["O-R", "binary"].f1 == 1
    assert r["O-R", "proportional"].f1 == 0.75
    assert r["O", "exact"].f1 == 1


def test_role_type_must_match():
    r = evaluate([[pair((1, 1), (2, 3), "hd")]], [[pair((1, 1), (2, 3), "tg")]])
    assert r["O-R", "binary"].f1 == 0 and r["O", "exact"].f1 == 1
    assert r["O-R(hd)", "exact"].precision == 0 and r["O-R(tg)", "exact"].recall == 0


def test_empty_cases():
    r = evaluate([[]], [[]])
    assert r["O-R", "exact"].f1 == 1
    r = evaluate([[]], [[pair((0, 0), (1, 1), "hd")]])
    assert r["O-R", "exact"].precision == 0 and r["O-R", "exact"].f1 == 0
    with pytest.raises(AlignmentError):
        evaluate([[]], [])


def oracle_credit(p, g, mode):
    if p.role_type != g.role_type:
        return 0.0
    ratios, exact = [], True
    for a, b in ((p.opinion, g.opinion), (p.role, g.role)):
        ta, tb = set(range(a.start, a.end + 1)), set(range(b.start, b.end + 1))
        exact &= ta == tb
        ratios.append(len(ta & tb) / len(tb))
    if mode == "exact":
        return float(exact)
    if min(ratios) == 0:
        return 0.0
    return 1.0 if mode == "binary" else sum(ratios) / 2


def oracle_best(pred, gold, mode):
    m = max(len(pred), len(gold))
    best = 0.0
    for perm in itertools.permutations(range(m), len(pred)):
        best = max(best, sum(oracle_credit(p, gold[j], mode) for p, j in zip(pred, perm) if j < len(gold)))
    return best


def random_pairs(rng, n):
    out = set()
    while len(out) < n:
        o = sorted(rng.sample(range(8), 2))
        r = sorted(rng.sample(range(8), 2))
        out.add(pair(tuple(o), tuple(r), rng.choice("hd tg".split())))
    return sorted(out)


def test_matcher_equals_exhaustive_oracle():
    rng = random.Random(7)
    for _ in range(1000):
        pred = random_pairs(rng, rng.randint(0, 5))
        gold = random_pairs(rng, rng.randint(0, 5))
        for mode in MODES:
            assert abs(matched_credit(pred, gold, mode) - oracle_best(pred, gold, mode)) < 1e-9


@given(st.integers(0, 10**6))
@settings(max_examples=200, deadline=None)
def test_mode_dominance(seed):
    rng = random.Random(seed)
    pred = [random_pairs(rng, rng.randint(0, 4)) for _ in range(3)]
    gold = [random_pairs(rng, rng.randint(0, 4)) for _ in range(3)]
    r = evaluate(pred, gold)
    for obj in OBJECTS:
        e, b, p = (r[obj, m] for m in MODES)
        assert e.f1 <= p.f1 + 1e-12 <= b.f1 + 2e-12
        assert e.precision <= p.precision + 1e-12 <= b.precision + 2e-12


def test_items_for_opinions_deduplicated(fig):
    assert len(items_for(fig.gold, "O")) == 2
    assert len(items_for(fig.gold, "O-R(hd)")) == 2


# --- folds ------------------------------------------------------------------

def test_split_folds_sizes_and_partition():
    corpus = [Sentence.build(["w"], sent_id=f"s{i}", doc_id=f"d{i}") for i in range(350)]
    folds = split_folds(corpus, 5, seed=0)
    assert all(len(tr) == 280 and len(te) == 70 for tr, te in folds)
    tests = [s.sent_id for _, te in folds for s in te]
    assert sorted(tests) == sorted(s.sent_id for s in corpus)
    assert [[s.sent_id for s in te] for _, te in split_folds(corpus, 5, seed=0)] == \
        [[s.sent_id for s in te] for _, te in folds]


def test_split_folds_keeps_documents_whole():
    corpus = random_corpus(40, seed=1, sentences_per_doc=4)
    for train, test in split_folds(corpus, 3, seed=2):
        assert not {s.doc_id for s in train} & {s.doc_id for s in test}
        assert len(train) + len(test) == 40


def test_too_few_documents():
    corpus = [Sentence.build(["w"], doc_id="d") for _ in range(5)]
    with pytest.raises(TooFewDocuments):
        split_folds(corpus, 2)
