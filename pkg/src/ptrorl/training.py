"""Teacher-forced training over oracle action sequences."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import torch

from .core import Sentence
from .data import EmbeddingTable
from .metrics import evaluate
from .model import ModelConfig, ORLModel
from .neural import save_checkpoint
from .transition import oracle
from .vocab import Vocabs, build_vocabs

log = logging.getLogger(__name__)


class DivergedLoss(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 30
    l2: float = 1e-6
    seed: int = 0
    syntax_enhanced: bool = False
    batch_size: int = 8
    clip: float = 5.0
    dtype: str = "float32"
    # Stop as soon as dev exact O-R F1 reaches this value.
    target_f1: Optional[float] = None

    def __post_init__(self):
        if self.l2 < 0:
            raise ValueError("l2 coefficient must be non-negative")
        if self.lr <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("lr, epochs and batch_size must be positive")


@dataclass
class EpochStats:
    epoch: int
    loss_a: float
    loss_p: float
    loss_c: float
    l2: float
    dev: Optional[dict] = None

    @property
    def total(self) -> float:
        return self.loss_a + self.loss_p + self.loss_c + self.l2


@dataclass
class TrainReport:
    epochs: List[EpochStats] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_score: Optional[float] = None
    best_checkpoint: Optional[str] = None
    skipped_structures: int = 0
    model: Optional[ORLModel] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "epochs": [dict(asdict(e), total=e.total) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_score": self.best_score,
            "best_checkpoint": self.best_checkpoint,
            "skipped_structures": self.skipped_structures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def loss_terms(model: ORLModel, batch, l2: float):
    """Summed (L_a, L_p, L_c) over ``batch`` of (sentence, actions) and the L2 term."""
    zero = model.beta_empty.new_zeros(())
    la, lp, lc = zero, zero, zero
    for s, actions in batch:
        a, p, c = model.sentence_loss(s, actions)
        la, lp, lc = la + a, lp + p, lc + c
    reg = 0.5 * l2 * model.l2() if l2 else zero
    return la, lp, lc, reg


def total_loss(model: ORLModel, batch, l2: float) -> torch.Tensor:
    la, lp, lc, reg = loss_terms(model, batch, l2)
    return la + lp + lc + reg


def decode(model: ORLModel, sentences: Sequence[Sentence]):
    model.eval()
    return [model.parse(s)[0] for s in sentences]


def build_model(
    corpus: Sequence[Sentence],
    cfg: TrainConfig,
    model_cfg: Optional[ModelConfig] = None,
    vocabs: Optional[Vocabs] = None,
    embeddings: Optional[EmbeddingTable] = None,
) -> ORLModel:
    vocabs = vocabs or build_vocabs(corpus)
    model_cfg = model_cfg or ModelConfig()
    model_cfg.syntax_enhanced = cfg.syntax_enhanced
    if embeddings is not None:
        model_cfg.word_dim = embeddings.vectors.shape[1]
    model = ORLModel(model_cfg, vocabs, seed=cfg.seed)
    model.to(getattr(torch, cfg.dtype))
    if embeddings is not None:
        with torch.no_grad():
            model.word.word_embed.weight.copy_(torch.from_numpy(embeddings.vectors))
    return model


def train(
    corpus: Sequence[Sentence],
    dev: Optional[Sequence[Sentence]],
    cfg: TrainConfig,
    model_cfg: Optional[ModelConfig] = None,
    model: Optional[ORLModel] = None,
    out_dir=None,
    on_epoch: Optional[Callable[[EpochStats], None]] = None,
) -> TrainReport:
    """Train with Adam on the composite loss; keep the best-dev parameters.

    Without ``dev`` the lowest training loss selects the best epoch.
    """
    torch.manual_seed(cfg.seed)
    if model is None:
        model = build_model(corpus, cfg, model_cfg)
    report = TrainReport(model=model)

    batches_src = []
    for s in corpus:
        trace = oracle(s)
        for note in trace.notes:
            log.warning("%s: %s", s.sent_id or "?", note)
        report.skipped_structures += len(trace.skipped_terms)
        batches_src.append((s, trace.actions))

    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = random.Random(cfg.seed)
    best_state = None
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = list(range(len(batches_src)))
        rng.shuffle(order)
        sums = [0.0, 0.0, 0.0, 0.0]
        for b in range(0, len(order), cfg.batch_size):
            batch = [batches_src[i] for i in order[b:b + cfg.batch_size]]
            la, lp, lc, reg = loss_terms(model, batch, cfg.l2)
            loss = la + lp + lc + reg
            if not torch.isfinite(loss):
                raise DivergedLoss(
                    f"epoch {epoch}: non-finite loss (L_a={la.item()}, L_p={lp.item()}, L_c={lc.item()})"
                )
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip)
            opt.step()
            for k, v in enumerate((la, lp, lc, reg)):
                sums[k] += v.item()

        stats = EpochStats(epoch, *sums)
        if dev is not None:
            metrics = evaluate(decode(model, dev), [s.gold or () for s in dev])
            stats.dev = metrics.to_dict()
            score = metrics["O-R", "exact"].f1
        else:
            score = -stats.total
        report.epochs.append(stats)
        if on_epoch is not None:
            on_epoch(stats)

        if report.best_score is None or score > report.best_score:
            report.best_score = score
            report.best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            if out_dir is not None:
                path = out_dir / "best.pt"
                save_checkpoint(path, model, checkpoint_extra(model, cfg, epoch))
                report.best_checkpoint = str(path)
        if dev is not None and cfg.target_f1 is not None and score >= cfg.target_f1:
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    return report


def checkpoint_extra(model: ORLModel, cfg: TrainConfig, epoch: int) -> dict:
    return {
        "model_config": asdict(model.cfg),
        "train_config": asdict(cfg),
        "vocabs": model.vocabs.to_dict(),
        "epoch": epoch,
    }


def load_model(path) -> ORLModel:
    from .neural import read_checkpoint

    payload = read_checkpoint(path)
    cfg = ModelConfig.from_dict(payload["model_config"])
    model = ORLModel(cfg, Vocabs.from_dict(payload["vocabs"]))
    dtype = next(iter(payload["state_dict"].values())).dtype
    model.to(dtype)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
