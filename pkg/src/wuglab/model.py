"""Causal transformer LM: architecture, training loop, scoring, checkpoints.

Pre-norm blocks, learned absolute positions, GELU feed-forward, weight tying
between the input embedding and the output projection. Training is
single-threaded and deterministic given the seed. All training math is
float32; the gradient check runs in float64.

Feed-forward width is chosen per size so that parameter counts land on the
published ~3.4M / ~10M / ~25.6M targets for the fitted vocabulary (the tiny
size uses the standard 4x expansion).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

PAD_IGNORE = -100

SIZE_PRESETS = {
    "tiny": dict(n_layers=4, n_heads=4, d_model=256, d_ff=1024, steps=5000),
    "small": dict(n_layers=6, n_heads=8, d_model=512, d_ff=544, steps=8000),
    "medium": dict(n_layers=8, n_heads=8, d_model=768, d_ff=512, steps=10000),
}
PARAM_TARGETS = {"tiny": 3.4e6, "small": 10e6, "medium": 25.6e6}


@dataclass
class ModelConfig:
    size_tag: str
    n_layers: int
    n_heads: int
    d_model: int
    d_ff: int
    vocab_size: int
    max_seq_len: int = 32
    dropout: float = 0.1
    weight_tying: bool = True

    @classmethod
    def for_size(cls, size_tag: str, vocab_size: int, max_seq_len: int = 32) -> "ModelConfig":
        p = SIZE_PRESETS[size_tag]
        return cls(
            size_tag=size_tag,
            n_layers=p["n_layers"],
            n_heads=p["n_heads"],
            d_model=p["d_model"],
            d_ff=p["d_ff"],
            vocab_size=vocab_size,
            max_seq_len=max_seq_len,
        )


@dataclass
class TrainConfig:
    steps: int
    seed: int
    batch_size: int = 16
    base_lr: float = 3e-4
    warmup_steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.1

    @classmethod
    def for_size(cls, size_tag: str, seed: int, **kw) -> "TrainConfig":
        return cls(steps=SIZE_PRESETS[size_tag]["steps"], seed=seed, **kw)


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = nn.MultiheadAttention(
            cfg.d_model, cfg.n_heads, dropout=cfg.dropout, batch_first=True
        )
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_ff),
            nn.GELU(),
            nn.Linear(cfg.d_ff, cfg.d_model),
            nn.Dropout(cfg.dropout),
        )

    def forward(self, x, attn_mask):
        h = self.ln1(x)
        a, _ = self.attn(h, h, h, attn_mask=attn_mask, need_weights=False)
        x = x + a
        x = x + self.mlp(self.ln2(x))
        return x


class GPT(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_seq_len, cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.d_model)
        self.lm_head = nn.Linear(cfg.d_model, cfg.vocab_size, bias=False)
        if cfg.weight_tying:
            self.lm_head.weight = self.tok_emb.weight
        self.apply(self._init)

    @staticmethod
    def _init(m):
        if isinstance(m, (nn.Linear, nn.Embedding)):
            nn.init.normal_(m.weight, mean=0.0, std=0.02)
            if isinstance(m, nn.Linear) and m.bias is not None:
                nn.init.zeros_(m.bias)

    def forward(self, idx: torch.Tensor, return_hidden: bool = False):
        b, t = idx.shape
        if t > self.cfg.max_seq_len:
            raise ValueError(f"sequence length {t} exceeds max {self.cfg.max_seq_len}")
        pos = torch.arange(t, device=idx.device)
        x = self.tok_emb(idx) + self.pos_emb(pos)[None]
        hiddens = [x] if return_hidden else None
        x = self.drop(x)
        mask = torch.triu(
            torch.full((t, t), float("-inf"), dtype=x.dtype, device=idx.device), 1
        )
        for block in self.blocks:
            x = block(x, mask)
            if return_hidden:
                hiddens.append(x)
        logits = self.lm_head(self.ln_f(x))
        return (logits, hiddens) if return_hidden else logits

    def n_params(self) -> int:
        seen, total = set(), 0
        for p in self.parameters():
            if id(p) not in seen:
                seen.add(id(p))
                total += p.numel()
        return total


@dataclass
class Checkpoint:
    config: ModelConfig
    train_config: TrainConfig | None
    model: GPT
    step: int = 0
    opt_state: dict | None = None
    rng_state: bytes = b""


def lr_at(step: int, cfg: TrainConfig) -> float:
    if step < cfg.warmup_steps:
        return cfg.base_lr * (step + 1) / cfg.warmup_steps
    progress = (step - cfg.warmup_steps) / max(1, cfg.steps - cfg.warmup_steps)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class TrainingDiverged(RuntimeError):
    pass


def train(
    token_seqs: list[list[int]],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    log_callback=None,
) -> tuple[Checkpoint, list[tuple[int, float, float]]]:
    """Train from scratch on the given BOS/EOS-wrapped token sequences.

    Returns the checkpoint and a per-step (step, loss, lr) log. Batches pad
    to the batch max length; loss is masked on padding. Deterministic given
    train_cfg.seed (single-threaded)."""
    if not token_seqs:
        raise ValueError("empty training set")
    too_long = max(map(len, token_seqs))
    if too_long > model_cfg.max_seq_len:
        raise ValueError(f"sequence of {too_long} tokens exceeds max_seq_len")
    torch.manual_seed(train_cfg.seed)
    model = GPT(model_cfg)
    model.train()
    opt = torch.optim.AdamW(
        model.parameters(),
        lr=train_cfg.base_lr,
        betas=(train_cfg.beta1, train_cfg.beta2),
        eps=train_cfg.eps,
        weight_decay=train_cfg.weight_decay,
    )
    sampler = torch.Generator().manual_seed(train_cfg.seed + 1)
    seqs = [torch.tensor(s, dtype=torch.long) for s in token_seqs]
    log: list[tuple[int, float, float]] = []
    for step in range(train_cfg.steps):
        idxs = torch.randint(len(seqs), (train_cfg.batch_size,), generator=sampler)
        batch = [seqs[i] for i in idxs]
        t_max = max(len(s) for s in batch)
        x = torch.zeros(len(batch), t_max, dtype=torch.long)
        y = torch.full((len(batch), t_max), PAD_IGNORE, dtype=torch.long)
        for i, s in enumerate(batch):
            x[i, : len(s)] = s
            y[i, : len(s) - 1] = s[1:]
        lr = lr_at(step, train_cfg)
        for g in opt.param_groups:
            g["lr"] = lr
        logits = model(x)
        loss = F.cross_entropy(
            logits[:, :-1].reshape(-1, model_cfg.vocab_size),
            y[:, :-1].reshape(-1),
            ignore_index=PAD_IGNORE,
        )
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        log.append((step, float(loss.item()), lr))
        if log_callback is not None:
            log_callback(step, float(loss.item()), lr)
    model.eval()
    rng_state = bytes(torch.get_rng_state().numpy().tobytes())
    return (
        Checkpoint(
            config=model_cfg,
            train_config=train_cfg,
            model=model,
            step=train_cfg.steps,
            opt_state=_opt_state_tensors(opt, model),
            rng_state=rng_state,
        ),
        log,
    )


def _opt_state_tensors(opt, model) -> dict:
    named = {id(p): n for n, p in model.named_parameters()}
    out = {}
    for p, st in opt.state.items():
        name = named[id(p)]
        out[f"{name}.exp_avg"] = st["exp_avg"].detach().clone()
        out[f"{name}.exp_avg_sq"] = st["exp_avg_sq"].detach().clone()
        out[f"{name}.step"] = st["step"].detach().clone().to(torch.float32)
    return out


# ---------------------------------------------------------------------------
# Inference-side operations


@torch.no_grad()
def forward(ckpt: Checkpoint, ids: list[int]) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """Log-probability distributions per position plus hidden states.

    Hidden states has n_layers + 1 entries; entry 0 is the embedding-layer
    output (token + position)."""
    ckpt.model.eval()
    x = torch.tensor([ids], dtype=torch.long)
    logits, hiddens = ckpt.model(x, return_hidden=True)
    return F.log_softmax(logits[0], dim=-1), [h[0] for h in hiddens]


@torch.no_grad()
def next_token_logprobs(ckpt: Checkpoint, ids: list[int]) -> torch.Tensor:
    ckpt.model.eval()
    logits = ckpt.model(torch.tensor([ids], dtype=torch.long))
    return F.log_softmax(logits[0, -1], dim=-1)


@torch.no_grad()
def score_completion(ckpt: Checkpoint, prompt: list[int], completion: list[int]) -> float:
    """Sum of next-token log-probabilities of the completion, in nats."""
    if not completion:
        return 0.0
    ids = prompt + completion
    logp, _ = forward(ckpt, ids)
    total = 0.0
    for j, tok in enumerate(completion):
        total += float(logp[len(prompt) + j - 1, tok])
    return total


@torch.no_grad()
def greedy_next(ckpt: Checkpoint, prompt: list[int]) -> int:
    """Argmax next token; ties break toward the lowest id."""
    lp = next_token_logprobs(ckpt, prompt)
    return int(torch.argmax(lp).item())


def swap_embeddings(ckpt: Checkpoint, mapping: dict[int, int]) -> Checkpoint:
    """Copy embedding rows mapping[dst] <- src; everything else unchanged."""
    vocab = ckpt.config.vocab_size
    for dst, src in mapping.items():
        if not (0 <= dst < vocab and 0 <= src < vocab):
            raise ValueError(f"embedding swap id out of range: {dst}<-{src}")
    clone = GPT(ckpt.config)
    clone.load_state_dict(ckpt.model.state_dict())
    with torch.no_grad():
        rows = {dst: clone.tok_emb.weight[src].clone() for dst, src in mapping.items()}
        for dst, row in rows.items():
            clone.tok_emb.weight[dst] = row
    clone.eval()
    return Checkpoint(
        config=ckpt.config,
        train_config=ckpt.train_config,
        model=clone,
        step=ckpt.step,
        opt_state=ckpt.opt_state,
        rng_state=ckpt.rng_state,
    )


# ---------------------------------------------------------------------------
# Gradient check (finite-difference oracle)


def gradient_check(
    cfg: ModelConfig | None = None, n_samples_per_tensor: int = 5, eps: float = 1e-5
) -> float:
    """Max relative error of autograd vs central differences, float64."""
    if cfg is None:
        cfg = ModelConfig(
            size_tag="check",
            n_layers=2,
            n_heads=2,
            d_model=16,
            d_ff=64,
            vocab_size=11,
            max_seq_len=8,
            dropout=0.0,
        )
    torch.manual_seed(0)
    model = GPT(cfg).double()
    model.eval()
    rng = np.random.default_rng(0)
    x = torch.tensor([rng.integers(0, cfg.vocab_size, size=cfg.max_seq_len)], dtype=torch.long)
    y = torch.tensor([rng.integers(0, cfg.vocab_size, size=cfg.max_seq_len)], dtype=torch.long)

    def loss_fn():
        logits = model(x)
        return F.cross_entropy(logits.reshape(-1, cfg.vocab_size), y.reshape(-1))

    loss = loss_fn()
    model.zero_grad()
    loss.backward()
    max_rel = 0.0
    seen = set()
    for name, p in model.named_parameters():
        if id(p) in seen:
            continue
        seen.add(id(p))
        flat = p.detach().reshape(-1)
        gflat = p.grad.reshape(-1)
        k = min(n_samples_per_tensor, flat.numel())
        for i in rng.choice(flat.numel(), size=k, replace=False):
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + eps
                lp = float(loss_fn())
                flat[i] = orig - eps
                lm = float(loss_fn())
                flat[i] = orig
            fd = (lp - lm) / (2 * eps)
            an = float(gflat[i])
            rel = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel


# ---------------------------------------------------------------------------
# Byte-stable checkpoint container

_MAGIC = b"WUGCKPT1"


def save_checkpoint(ckpt: Checkpoint, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, torch.Tensor] = dict(ckpt.model.state_dict())
    if ckpt.opt_state:
        for k, v in ckpt.opt_state.items():
            tensors[f"opt::{k}"] = v
    index = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().numpy()
        data = np.ascontiguousarray(arr).tobytes()
        index.append(
            {
                "name": name,
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        blobs.append(data)
        offset += len(data)
    header = {
        "version": 1,
        "config": asdict(ckpt.config),
        "train_config": asdict(ckpt.train_config) if ckpt.train_config else None,
        "step": ckpt.step,
        "rng_state": ckpt.rng_state.hex(),
        "tensors": index,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        for b in blobs:
            f.write(b)


def load_checkpoint(path: Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError("not a wuglab checkpoint")
    hlen = struct.unpack("<Q", raw[8:16])[0]
    header = json.loads(raw[16 : 16 + hlen])
    body = raw[16 + hlen :]
    cfg = ModelConfig(**header["config"])
    tcfg = TrainConfig(**header["train_config"]) if header["train_config"] else None
    state = {}
    opt_state = {}
    for rec in header["tensors"]:
        arr = np.frombuffer(
            body, dtype=np.dtype(rec["dtype"]), count=-1, offset=rec["offset"]
        )[: int(np.prod(rec["shape"])) if rec["shape"] else 1]
        t = torch.from_numpy(arr.reshape(rec["shape"]).copy())
        if rec["name"].startswith("opt::"):
            opt_state[rec["name"][5:]] = t
        else:
            state[rec["name"]] = t
    model = GPT(cfg)
    model.load_state_dict(state)
    model.eval()
    return Checkpoint(
        config=cfg,
        train_config=tcfg,
        model=model,
        step=header["step"],
        opt_state=opt_state or None,
        rng_state=bytes.fromhex(header["rng_state"]),
    )
