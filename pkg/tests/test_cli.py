import json

import pytest
import torch

from ptrorl.cli import main
from ptrorl.core import ROOT, OpinionRolePair, Sentence
from ptrorl.data import write_corpus
from ptrorl.transition import Action, replay


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory, toy_corpus):
    path = tmp_path_factory.mktemp("data") / "train.jsonl"
    write_corpus(path, toy_corpus[:4])
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus_file):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--train", str(corpus_file), "--out", str(out), "--small", "--epochs", "2", "--seed", "1"])
    assert code == 0
    return out


def test_train_writes_artifacts(trained):
    assert (trained / "best.pt").exists()
    report = json.loads((trained / "report.json").read_text())
    assert len(report["epochs"]) == 2
    assert "epochs = 2" in (trained / "run.ini").read_text()


def test_train_missing_input(tmp_path, capsys):
    assert main(["train", "--train", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_bad_flag_is_usage_error():
    assert main(["train", "--no-such-flag"]) == 2


def test_syntax_enhanced_checkpoint(tmp_path, corpus_file):
    out = tmp_path / "enh"
    assert main(["train", "--train", str(corpus_file), "--out", str(out), "--small", "--epochs", "1",
                 "--syntax-enhanced"]) == 0
    state = torch.load(out / "best.pt", weights_only=True)["state_dict"]
    assert any(k.startswith("rcga.") for k in state)
    assert any(k.endswith("W10") for k in state)


def test_parse_with_trace_and_eval(tmp_path, trained, corpus_file, capsys):
    pred = tmp_path / "pred.jsonl"
    assert main(["parse", "--checkpoint", str(trained / "best.pt"), "--input", str(corpus_file),
                 "--output", str(pred), "--trace"]) == 0
    from ptrorl.data import load_corpus

    sentences = load_corpus(corpus_file)
    for s, line in zip(sentences, pred.read_text().splitlines()):
        rec = json.loads(line)
        actions = [Action.from_json(a) for a in rec["trace"]]
        got = {(p["opinion"][0], p["role"][0], p["type"]) for p in rec["pred_pairs"]}
        Y = replay(s, actions).Y
        assert got == {(p.opinion.start + 1, p.role.start + 1, p.role_type.value) for p in Y}
    capsys.readouterr()
    assert main(["eval", "--pred", str(pred), "--gold", str(corpus_file)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"O", "O-R", "O-R(hd)", "O-R(tg)"}


def test_parse_rejects_enhanced_flag_on_vanilla(trained, corpus_file):
    assert main(["parse", "--checkpoint", str(trained / "best.pt"), "--input", str(corpus_file),
                 "--syntax-enhanced"]) == 2


def test_parse_empty_input(tmp_path, trained, corpus_file):
    empty = tmp_path / "empty.jsonl"
    empty.write_text(corpus_file.read_text().splitlines()[0] + "\n")
    out = tmp_path / "out.jsonl"
    assert main(["parse", "--checkpoint", str(trained / "best.pt"), "--input", str(empty),
                 "--output", str(out)]) == 0
    assert out.read_text() == ""


def test_oracle_check(tmp_path, corpus_file, capsys):
    assert main(["oracle-check", "--corpus", str(corpus_file)]) == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert summary["round_trip_failures"] == 0

    shared = Sentence.build(
        ["a", "b", "c", "d"],
        heads=[ROOT, 0, 0, 0],
        gold=[OpinionRolePair.make((0, 0), (3, 3), "hd"), OpinionRolePair.make((0, 1), (3, 3), "tg")],
        sent_id="shared",
    )
    path = tmp_path / "shared.jsonl"
    write_corpus(path, [shared])
    assert main(["oracle-check", "--corpus", str(path)]) == 0
    out = capsys.readouterr().out
    assert "SharedStartUnsupported" in out
    summary = json.loads(out.splitlines()[-1])
    assert summary["shared_start_sentences"] == 1 and summary["skipped_pairs"] == 1


def test_gradcheck_subset_and_corruption(capsys):
    assert main(["gradcheck", "--only", "pointer,biaffine"]) == 0
    assert main(["gradcheck", "--only", "pointer", "--corrupt", "pointer"]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert main(["gradcheck", "--only", "nonsense"]) == 2


def test_config_file_and_flag_precedence(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nonly = span_repr\ntolerance = 1e-30\n")
    assert main(["gradcheck", "--config", str(ini)]) == 1
    assert main(["gradcheck", "--config", str(ini), "--tolerance", "1e-4"]) == 0
    out = capsys.readouterr().out
    assert "span_repr" in out and "pointer" not in out
    ini.write_text("[run]\nbogus = 1\n")
    assert main(["gradcheck", "--config", str(ini)]) == 2
