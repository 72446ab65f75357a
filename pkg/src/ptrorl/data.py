"""Corpus files, embeddings and cross-validation folds.

Corpora are JSON lines: a header object followed by one sentence record per
line, validated against ``schema/corpus.schema.json``. Files are 1-based;
everything returned from here is 0-based.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from .core import ROOT, OpinionRolePair, Sentence, ValidationError, validate_sentence
from .transition import Action
from .vocab import Vocab

FORMAT = "ptrorl-corpus"
VERSION = 1


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class HeaderMismatch(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class TooFewDocuments(ValueError):
    pass


def _schema() -> dict:
    text = resources.files("ptrorl").joinpath("schema/corpus.schema.json").read_text()
    return json.loads(text)


_SCHEMA = _schema()
_HEADER_VALIDATOR = jsonschema.Draft202012Validator({**_SCHEMA, "$ref": "#/$defs/header"})
_RECORD_VALIDATOR = jsonschema.Draft202012Validator({**_SCHEMA, "$ref": "#/$defs/record"})


def make_header(sentences: Sequence[Sentence], pos_tags=None, dep_labels=None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "pos_tags": sorted(pos_tags if pos_tags is not None else {t.pos for s in sentences for t in s.tokens}),
        "dep_labels": sorted(dep_labels if dep_labels is not None else {a.label for s in sentences for a in s.deps}),
        "role_types": ["hd", "tg"],
    }


def _pair_json(p: OpinionRolePair) -> dict:
    return {
        "opinion": [p.opinion.start + 1, p.opinion.end + 1],
        "role": [p.role.start + 1, p.role.end + 1],
        "type": p.role_type.value,
    }


def pairs_to_json(pairs: Iterable[OpinionRolePair]) -> List[dict]:
    return [_pair_json(p) for p in sorted(pairs)]


def pairs_from_json(items: Iterable[dict]) -> List[OpinionRolePair]:
    return [
        OpinionRolePair.make(
            (d["opinion"][0] - 1, d["opinion"][1] - 1), (d["role"][0] - 1, d["role"][1] - 1), d["type"]
        )
        for d in items
    ]


def sentence_to_record(s: Sentence) -> dict:
    heads = [0] * len(s)
    deprels = ["root"] * len(s)
    for arc in s.deps:
        heads[arc.dependent] = 0 if arc.head == ROOT else arc.head + 1
        deprels[arc.dependent] = arc.label
    rec = {
        "id": s.sent_id,
        "doc": s.doc_id,
        "tokens": list(s.words),
        "pos": list(s.pos_tags),
        "heads": heads,
        "deprels": deprels,
    }
    if s.gold is not None:
        rec["pairs"] = pairs_to_json(s.gold)
    return rec


def record_to_sentence(rec: dict) -> Sentence:
    n = len(rec["tokens"])
    for key in ("pos", "heads", "deprels"):
        if len(rec[key]) != n:
            raise ValueError(f"'{key}' has {len(rec[key])} entries for {n} tokens")
    gold = pairs_from_json(rec["pairs"]) if "pairs" in rec else None
    heads = [h - 1 if h > 0 else ROOT for h in rec["heads"]]
    return Sentence.build(rec["tokens"], rec["pos"], heads, rec["deprels"], gold, rec["id"], rec.get("doc", ""))


def read_corpus(path) -> Tuple[dict, List[Sentence]]:
    path = Path(path)
    with path.open(encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise HeaderMismatch(f"{path}: empty file, header expected")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise HeaderMismatch(f"{path}: header is not JSON ({e})") from e
    errors = sorted(_HEADER_VALIDATOR.iter_errors(header), key=str)
    if errors:
        raise HeaderMismatch(f"{path}: bad header: {errors[0].message}")
    tags, labels = set(header["pos_tags"]), set(header["dep_labels"]) | {"root"}

    sentences = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON ({e.msg})", lineno) from e
        err = next(iter(_RECORD_VALIDATOR.iter_errors(rec)), None)
        if err is not None:
            raise ParseError(err.message, lineno)
        bad = [t for t in rec["pos"] if t not in tags]
        if bad:
            raise ParseError(f"POS tag {bad[0]!r} not declared in header", lineno)
        bad = [l for l in rec["deprels"] if l not in labels]
        if bad:
            raise ParseError(f"dependency label {bad[0]!r} not declared in header", lineno)
        try:
            sentences.append(validate_sentence(record_to_sentence(rec)))
        except (ValidationError, ValueError) as e:
            raise ParseError(str(e), lineno) from e
    return header, sentences


def load_corpus(path) -> List[Sentence]:
    return read_corpus(path)[1]


def write_corpus(path, sentences: Sequence[Sentence], header: Optional[dict] = None) -> None:
    header = header or make_header(sentences)
    with Path(path).open("w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for s in sentences:
            f.write(json.dumps(sentence_to_record(s)) + "\n")


def prediction_record(s: Sentence, pred: Iterable[OpinionRolePair], trace: Optional[Sequence[Action]] = None) -> dict:
    rec = sentence_to_record(s)
    rec["pred_pairs"] = pairs_to_json(pred)
    if trace is not None:
        rec["trace"] = [a.to_json() for a in trace]
    return rec


def read_predictions(path) -> List[Tuple[str, List[OpinionRolePair], Optional[List[OpinionRolePair]]]]:
    """(id, predicted pairs, gold pairs or None) per line of a predictions file."""
    out = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "pred_pairs" not in rec:
                raise ParseError("missing 'pred_pairs'", lineno)
            gold = pairs_from_json(rec["pairs"]) if "pairs" in rec else None
            out.append((rec["id"], pairs_from_json(rec["pred_pairs"]), gold))
    return out


@dataclass
class EmbeddingTable:
    vectors: np.ndarray
    matched: int

    @property
    def coverage(self) -> float:
        return self.matched / len(self.vectors) if len(self.vectors) else 0.0


def load_embeddings(path, vocab: Vocab, seed: int = 0, scale: float = 0.1) -> EmbeddingTable:
    """Rows for ``vocab`` from a ``word v1 v2 ...`` text file; unmatched rows are random."""
    found: Dict[str, np.ndarray] = {}
    dim = None
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DimensionMismatch(f"line {lineno}: {len(values)} values, expected {dim}")
            if word in vocab and word not in found:
                found[word] = np.asarray(values, dtype=np.float64)
    if dim is None:
        raise DimensionMismatch(f"{path}: no vectors")
    rng = np.random.default_rng(seed)
    table = rng.uniform(-scale, scale, size=(len(vocab), dim))
    for word, vec in found.items():
        table[vocab.lookup(word)] = vec
    return EmbeddingTable(table, len(found))


def split_folds(corpus: Sequence[Sentence], k: int, seed: int = 0) -> List[Tuple[List[Sentence], List[Sentence]]]:
    """k (train, test) partitions at document granularity."""
    if k < 2:
        raise ValueError("k must be at least 2")
    docs: Dict[str, List[Sentence]] = {}
    for s in corpus:
        docs.setdefault(s.doc_id, []).append(s)
    if len(docs) < k:
        raise TooFewDocuments(f"{len(docs)} documents cannot fill {k} folds")
    order = sorted(docs)
    random.Random(seed).shuffle(order)
    folds = [order[i::k] for i in range(k)]
    out = []
    for i in range(k):
        test_docs = set(folds[i])
        train = [s for d in order if d not in test_docs for s in docs[d]]
        test = [s for d in order if d in test_docs for s in docs[d]]
        out.append((train, test))
    return out
