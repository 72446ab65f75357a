"""Command-line entry point: train, parse, eval, oracle-check, gradcheck.

Exit codes: 0 success, 1 check failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("ptrorl")


class CheckpointMismatch(ValueError):
    pass


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    train: Optional[str] = None
    dev: Optional[str] = None
    corpus: Optional[str] = None
    input: Optional[str] = None
    output: Optional[str] = None
    gold: Optional[str] = None
    pred: Optional[str] = None
    embeddings: Optional[str] = None
    checkpoint: Optional[str] = None
    out: Optional[str] = None
    fold: Optional[str] = None
    syntax_enhanced: bool = False
    small: bool = False
    trace: bool = False
    seed: int = 0
    epochs: int = 30
    lr: float = 1e-3
    l2: float = 1e-6
    batch_size: int = 8
    clip: float = 5.0
    aggregate: str = "mean"
    corrupt: Optional[str] = None
    only: Optional[str] = None
    tolerance: float = 1e-4

    def write(self, path) -> None:
        cp = configparser.ConfigParser()
        cp["run"] = {k: str(v) for k, v in asdict(self).items() if v is not None}
        with open(path, "w") as f:
            cp.write(f)


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in fields(RunConfig)}[name]
    if "bool" in ftype:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if "int" in ftype:
        return int(raw)
    if "float" in ftype:
        return float(raw)
    return raw


def read_config_file(path) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"config file not found: {path}")
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for section in cp.sections():
        for key, raw in cp[section].items():
            key = key.replace("-", "_")
            if key == "command":
                continue
            if key not in known:
                raise UsageError(f"{path}: unknown key '{key}'")
            out[key] = _coerce(key, raw)
    return out


def make_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "command":
            values[f.name] = v
    return RunConfig(command=args.command, **values)


def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise UsageError(f"missing required {what}")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def cmd_train(cfg: RunConfig) -> int:
    from .data import load_corpus, load_embeddings, split_folds
    from .model import ModelConfig
    from .training import TrainConfig, build_model, train
    from .vocab import build_vocabs

    corpus = load_corpus(_require(cfg.train, "training corpus"))
    dev = load_corpus(_require(cfg.dev, "dev corpus")) if cfg.dev else None
    if not cfg.out:
        raise UsageError("missing required output directory (--out)")
    if cfg.fold:
        try:
            i, k = (int(x) for x in cfg.fold.split("/"))
        except ValueError:
            raise UsageError(f"--fold expects I/K, got {cfg.fold!r}")
        if not 1 <= i <= k:
            raise UsageError(f"fold {i} outside 1..{k}")
        corpus, held_out = split_folds(corpus, k, cfg.seed)[i - 1]
        dev = dev if dev is not None else held_out

    tcfg = TrainConfig(lr=cfg.lr, epochs=cfg.epochs, l2=cfg.l2, seed=cfg.seed,
                       syntax_enhanced=cfg.syntax_enhanced, batch_size=cfg.batch_size, clip=cfg.clip)
    mcfg = ModelConfig.small() if cfg.small else ModelConfig()
    vocabs = build_vocabs(corpus + (dev or []))
    emb = None
    if cfg.embeddings:
        emb = load_embeddings(_require(cfg.embeddings, "embedding file"), vocabs.words, seed=cfg.seed)
        print(f"embeddings: {emb.matched}/{len(vocabs.words)} vocabulary rows matched "
              f"(coverage {emb.coverage:.3f})")
    model = build_model(corpus, tcfg, mcfg, vocabs, emb)

    def on_epoch(st):
        line = f"epoch {st.epoch:3d}  L_a={st.loss_a:.4f} L_p={st.loss_p:.4f} L_c={st.loss_c:.4f} l2={st.l2:.2e}"
        if st.dev is not None:
            line += "  dev exact F1: O={:.4f} O-R={:.4f}".format(st.dev["O"]["exact"]["f1"], st.dev["O-R"]["exact"]["f1"])
        print(line, flush=True)

    out = Path(cfg.out)
    report = train(corpus, dev, tcfg, model=model, out_dir=out, on_epoch=on_epoch)
    (out / "report.json").write_text(report.to_json())
    cfg.write(out / "run.ini")
    print(f"best epoch {report.best_epoch}; checkpoint {report.best_checkpoint}")
    return EXIT_OK


def cmd_parse(cfg: RunConfig) -> int:
    from .data import load_corpus, prediction_record
    from .training import load_model

    ckpt = _require(cfg.checkpoint, "checkpoint")
    sentences = load_corpus(_require(cfg.input, "input corpus"))
    try:
        model = load_model(ckpt)
    except (ValueError, RuntimeError, KeyError) as e:
        raise CheckpointMismatch(f"cannot load {ckpt}: {e}") from e
    if cfg.syntax_enhanced and not model.cfg.syntax_enhanced:
        raise CheckpointMismatch("--syntax-enhanced given but checkpoint holds a vanilla model")
    lines = []
    for s in sentences:
        pairs, actions = model.parse(s)
        lines.append(json.dumps(prediction_record(s, pairs, actions if cfg.trace else None)))
    text = "".join(l + "\n" for l in lines)
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    from .data import load_corpus, read_predictions
    from .metrics import AlignmentError, evaluate

    preds = read_predictions(_require(cfg.pred, "predictions file"))
    if cfg.gold:
        gold_by_id = {s.sent_id: s.gold or () for s in load_corpus(_require(cfg.gold, "gold corpus"))}
        missing = [sid for sid, _, _ in preds if sid not in gold_by_id]
        if missing or len(gold_by_id) != len(preds):
            raise AlignmentError(f"predictions and gold do not align (e.g. id {missing[:1] or '?'})")
        gold = [gold_by_id[sid] for sid, _, _ in preds]
    else:
        if any(g is None for _, _, g in preds):
            raise AlignmentError("predictions lack gold 'pairs'; pass --gold")
        gold = [g for _, _, g in preds]
    report = evaluate([p for _, p, _ in preds], gold, aggregate=cfg.aggregate)
    text = report.to_json()
    if cfg.output:
        Path(cfg.output).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_oracle_check(cfg: RunConfig) -> int:
    from .data import load_corpus
    from .transition import oracle, replay

    sentences = load_corpus(_require(cfg.corpus, "corpus"))
    failures = shared = skipped_pairs = 0
    for s in sentences:
        trace = oracle(s)
        if trace.notes:
            shared += 1
            skipped_pairs += len(s.gold or ()) - len(trace.covered)
            for note in trace.notes:
                print(f"{s.sent_id}: {note}")
        if replay(s, trace.actions).Y != trace.covered:
            failures += 1
            print(f"{s.sent_id}: round-trip FAILED")
    print(json.dumps({
        "sentences": len(sentences),
        "round_trip_failures": failures,
        "shared_start_sentences": shared,
        "skipped_pairs": skipped_pairs,
    }))
    return EXIT_CHECK if failures else EXIT_OK


def cmd_gradcheck(cfg: RunConfig) -> int:
    from .gradcheck import HEADS, check_head

    names = cfg.only.split(",") if cfg.only else list(HEADS)
    for name in names + ([cfg.corrupt] if cfg.corrupt else []):
        if name not in HEADS:
            raise UsageError(f"unknown head {name!r}; choose from {', '.join(HEADS)}")
    worst = 0.0
    for name in names:
        err = check_head(name, seed=cfg.seed, corrupt=(name == cfg.corrupt))
        worst = max(worst, err)
        status = "ok" if err < cfg.tolerance else "FAIL"
        print(f"{name:24s} max_rel_err={err:.3e}  {status}", flush=True)
    return EXIT_OK if worst < cfg.tolerance else EXIT_CHECK


COMMANDS = {
    "train": cmd_train,
    "parse": cmd_parse,
    "eval": cmd_eval,
    "oracle-check": cmd_oracle_check,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptrorl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file; command-line flags override its values")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("train", help="train a parser from a gold corpus")
    common(sp)
    sp.add_argument("--train", help="training corpus (JSONL)")
    sp.add_argument("--dev", help="dev corpus for checkpoint selection")
    sp.add_argument("--out", help="output directory for checkpoint and report")
    sp.add_argument("--embeddings", help="word vectors, text format")
    sp.add_argument("--fold", help="train on fold I of K (I/K); its held-out part is the dev set")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--l2", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--clip", type=float)
    sp.add_argument("--syntax-enhanced", action="store_true", default=None)
    sp.add_argument("--small", action="store_true", default=None, help="small layer sizes for quick runs")

    sp = sub.add_parser("parse", help="parse a corpus with a trained checkpoint")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--input")
    sp.add_argument("--output", help="predictions JSONL (default stdout)")
    sp.add_argument("--trace", action="store_true", default=None, help="include action sequences")
    sp.add_argument("--syntax-enhanced", action="store_true", default=None)

    sp = sub.add_parser("eval", help="score predictions")
    common(sp)
    sp.add_argument("--pred")
    sp.add_argument("--gold", help="gold corpus; default uses 'pairs' in the predictions file")
    sp.add_argument("--output", help="write the metric report JSON here too")
    sp.add_argument("--aggregate", choices=("mean", "min", "product"),
                    help="how proportional credit combines a pair's two terms")

    sp = sub.add_parser("oracle-check", help="oracle + replay round trip on every sentence")
    common(sp)
    sp.add_argument("--corpus")

    sp = sub.add_parser("gradcheck", help="finite-difference check of every scoring head")
    common(sp)
    sp.add_argument("--tolerance", type=float)
    sp.add_argument("--only", help="comma-separated subset of heads")
    sp.add_argument("--corrupt", help=argparse.SUPPRESS)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    from .data import DimensionMismatch, HeaderMismatch, ParseError, TooFewDocuments
    from .metrics import AlignmentError

    try:
        cfg = make_config(args)
        return COMMANDS[cfg.command](cfg)
    except (UsageError, CheckpointMismatch, ParseError, HeaderMismatch, DimensionMismatch,
            TooFewDocuments, AlignmentError, OSError) as e:
        print(f"ptrorl {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"ptrorl {args.command}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
