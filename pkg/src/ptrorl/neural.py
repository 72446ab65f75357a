"""Numeric building blocks: encoders, stack LSTM, init, gradient checking."""

from __future__ import annotations

import math
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_FORMAT = "ptrorl-checkpoint"
CHECKPOINT_VERSION = 1


class PopOnEmpty(IndexError):
    pass


class CharCNN(nn.Module):
    """Character convolutions with max-pooling over time, one bank per kernel width."""

    def __init__(self, n_chars: int, char_dim: int = 50, out_dim: int = 50, kernels: Sequence[int] = (3, 4, 5)):
        super().__init__()
        self.kernels = tuple(kernels)
        self.embed = nn.Embedding(n_chars, char_dim)
        base, rem = divmod(out_dim, len(self.kernels))
        widths = [base + (1 if k < rem else 0) for k in range(len(self.kernels))]
        self.convs = nn.ModuleList(nn.Conv1d(char_dim, w, k) for w, k in zip(widths, self.kernels))
        self.out_dim = out_dim

    def forward(self, chars: torch.Tensor) -> torch.Tensor:
        """``chars``: (n_words, max_len) padded char ids -> (n_words, out_dim)."""
        min_len = max(self.kernels)
        if chars.size(1) < min_len:
            chars = F.pad(chars, (0, min_len - chars.size(1)))
        x = self.embed(chars).transpose(1, 2)
        return torch.cat([torch.tanh(conv(x)).max(dim=2).values for conv in self.convs], dim=1)


class BiEncoder(nn.Module):
    def __init__(self, in_dim: int, hidden: int = 150):
        super().__init__()
        self.lstm = nn.LSTM(in_dim, hidden, bidirectional=True, batch_first=True)
        self.out_dim = 2 * hidden

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(T, in_dim) -> (T, 2*hidden)."""
        out, _ = self.lstm(x.unsqueeze(0))
        return out.squeeze(0)


class StackEncoder(nn.Module):
    """Parameters of a stack LSTM; call :meth:`new` for a per-parse stack."""

    def __init__(self, in_dim: int, hidden: int = 300):
        super().__init__()
        self.cell = nn.LSTMCell(in_dim, hidden)
        self.empty = nn.Parameter(torch.zeros(hidden))
        self.hidden = hidden

    def new(self) -> "StackRNN":
        return StackRNN(self)


class StackRNN:
    """Stack with (input, state) checkpoints; popping rewinds to the previous state."""

    def __init__(self, enc: StackEncoder):
        self.enc = enc
        zeros = enc.empty.new_zeros(1, enc.hidden)
        self.states: List[Tuple[torch.Tensor, torch.Tensor]] = [(zeros, zeros)]
        self.inputs: List[torch.Tensor] = []

    def push(self, v: torch.Tensor) -> None:
        self.states.append(self.enc.cell(v.unsqueeze(0), self.states[-1]))
        self.inputs.append(v)

    def pop(self) -> torch.Tensor:
        if not self.inputs:
            raise PopOnEmpty("pop on empty stack")
        self.states.pop()
        return self.inputs.pop()

    def summary(self) -> torch.Tensor:
        if not self.inputs:
            return self.enc.empty
        return self.states[-1][0].squeeze(0)

    def __len__(self) -> int:
        return len(self.inputs)


class SequenceEncoder(nn.Module):
    """Incremental unidirectional LSTM with a learned output for the empty sequence."""

    def __init__(self, in_dim: int, hidden: int):
        super().__init__()
        self.cell = nn.LSTMCell(in_dim, hidden)
        self.empty = nn.Parameter(torch.zeros(hidden))
        self.hidden = hidden

    def start(self):
        return None

    def step(self, state, v: torch.Tensor):
        return self.cell(v.unsqueeze(0), state)

    def output(self, state) -> torch.Tensor:
        return self.empty if state is None else state[0].squeeze(0)


def init_parameters(module: nn.Module, seed: int) -> None:
    """Embeddings and learned vectors uniform(-0.1, 0.1); matrices Glorot; biases zero."""
    gen = torch.Generator().manual_seed(seed)
    embed_params = set()
    for m in module.modules():
        if isinstance(m, nn.Embedding):
            embed_params.add(id(m.weight))
    with torch.no_grad():
        for name, p in module.named_parameters():
            if id(p) in embed_params or (p.dim() == 1 and "bias" not in name):
                p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 0.2 - 0.1)
            elif "bias" in name:
                p.zero_()
            else:
                fan_out, fan_in = p.shape[0], int(math.prod(p.shape[1:]))
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                p.copy_((torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 - 1) * bound)


def grad_check(
    fn: Callable[[], torch.Tensor],
    params: Iterable[torch.Tensor],
    eps: float = 1e-5,
    max_entries: Optional[int] = 40,
    seed: int = 0,
    floor: float = 1e-8,
    perturb: Optional[Callable[[torch.Tensor], torch.Tensor]] = None,
) -> float:
    """Max relative error between autograd and central differences.

    ``fn`` must return a scalar and be deterministic. At most ``max_entries``
    randomly chosen entries per parameter are probed. The relative error is
    ``|a - n| / max(|a|, |n|, floor, 1e4 * r)`` where ``r = eps_mach * |f| / eps``
    bounds the round-off of a central difference: entries smaller than
    ``1e4 * r`` cannot be resolved to 1e-4 relative accuracy, so they are
    compared against that bound instead. ``perturb`` is applied to each
    analytic gradient before comparison (negative-control hook).
    """
    params = [p for p in params]
    for p in params:
        if p.dtype != torch.float64:
            raise TypeError("grad_check requires float64 parameters")
    for p in params:
        p.grad = None
    loss = fn()
    analytic = torch.autograd.grad(loss, params, allow_unused=True)
    roundoff = torch.finfo(torch.float64).eps * max(abs(loss.item()), 1.0) / eps
    floor = max(floor, 1e4 * roundoff)
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            g = torch.zeros_like(p) if g is None else g.clone()
            if perturb is not None:
                g = perturb(g)
            flat = p.view(-1)
            gflat = g.reshape(-1)
            n = flat.numel()
            if max_entries is not None and n > max_entries:
                idx = torch.randperm(n, generator=gen)[:max_entries].tolist()
            else:
                idx = range(n)
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + eps
                up = fn().item()
                flat[i] = orig - eps
                down = fn().item()
                flat[i] = orig
                num = (up - down) / (2 * eps)
                a = gflat[i].item()
                err = abs(a - num) / max(abs(a), abs(num), floor)
                worst = max(worst, err)
    return worst


def save_checkpoint(path, model: nn.Module, extra: Dict) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "shapes": {k: list(v.shape) for k, v in model.state_dict().items()},
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
    }
    payload.update(extra)
    torch.save(payload, path)


def read_checkpoint(path) -> Dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    return payload
