"""Toy autoregressive decoder-only transformer with prefix conditioning,
a block-sparse fine-tuning schedule, and per-layer rhythm injection.

The conditioning contract: token sequence = context ++ [delimiter] ++
target, loss masked to target positions only; the rhythm grid is a
[K x seq_len] multi-hot matrix at the codec frame rate, zero outside the
target region. The grid enters at the input embedding through P0 and is
re-added before each injection layer through that layer's own linear map.

Only the first layer of each 4-layer block trains, plus the injection maps
and the output head; token embeddings stay frozen.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .nmf import RhythmTrack

CHECKPOINT_MAGIC = b"BSMC"
CHECKPOINT_VERSION = 1


class CheckpointVersionError(Exception):
    pass


@dataclass
class ModelConfig:
    n_layers: int = 16
    layers_per_block: int = 4
    in_attention_fraction: float = 0.75
    d_model: int = 128
    n_heads: int = 4
    vocab_size: int = 4097
    max_seq_len: int = 512
    rhythm_classes: int = 3
    frame_rate: float = 50.0

    def __post_init__(self):
        if self.n_layers % self.layers_per_block:
            raise ValueError("n_layers must be divisible by layers_per_block")
        if not 0 < self.in_attention_fraction <= 1:
            raise ValueError("in_attention_fraction must lie in (0, 1]")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")

    @property
    def delimiter_id(self) -> int:
        return self.vocab_size - 1

    @property
    def n_blocks(self) -> int:
        return self.n_layers // self.layers_per_block


@dataclass(frozen=True)
class FreezeSchedule:
    trainable_layers: frozenset
    injection_layers: frozenset


def make_freeze_schedule(config: ModelConfig) -> FreezeSchedule:
    """First layer of every block trains; the rhythm condition re-enters at
    the first layer of each block within the leading fraction of blocks
    (and always at the input embedding, which is not a layer index)."""
    step = config.layers_per_block
    trainable = frozenset(b * step for b in range(config.n_blocks))
    m = math.floor(config.in_attention_fraction * config.n_blocks)
    injection = frozenset(b * step for b in range(1, m))
    return FreezeSchedule(trainable_layers=trainable, injection_layers=injection)


@dataclass
class TokenSequence:
    context_tokens: list
    delimiter_id: int
    target_tokens: list
    loss_mask: np.ndarray

    @property
    def tokens(self) -> np.ndarray:
        return np.asarray(
            list(self.context_tokens) + [self.delimiter_id] + list(self.target_tokens),
            dtype=np.int64,
        )

    def __len__(self) -> int:
        return len(self.context_tokens) + 1 + len(self.target_tokens)


def build_sequence(mix_tokens, drum_tokens, rhythm: RhythmTrack, config: ModelConfig):
    """Assemble (TokenSequence, rhythm grid) for one training example.

    Grid columns are zero over context and delimiter; an event at onset t
    lights row class_index at column context_len + 1 + round(t*frame_rate),
    dropped if it falls past the target's end.
    """
    mix_tokens = list(mix_tokens)
    drum_tokens = list(drum_tokens)
    total = len(mix_tokens) + 1 + len(drum_tokens)
    if total > config.max_seq_len:
        raise ValueError("sequence length %d exceeds max_seq_len %d" % (total, config.max_seq_len))
    mask = np.zeros(total, dtype=bool)
    mask[len(mix_tokens) + 1 :] = True
    grid = np.zeros((config.rhythm_classes, total), dtype=np.float32)
    offset = len(mix_tokens) + 1
    for e in rhythm.events:
        frame = int(round(e.onset_sec * config.frame_rate))
        if 0 <= frame < len(drum_tokens) and e.class_index < config.rhythm_classes:
            grid[e.class_index, offset + frame] = 1.0
    seq = TokenSequence(
        context_tokens=mix_tokens,
        delimiter_id=config.delimiter_id,
        target_tokens=drum_tokens,
        loss_mask=mask,
    )
    return seq, grid


class CausalSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)

    def forward(self, x):
        B, T, D = x.shape
        H = self.n_heads
        q, k, v = self.qkv(x).view(B, T, 3, H, D // H).permute(2, 0, 3, 1, 4)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(D // H)
        causal = torch.triu(torch.ones(T, T, dtype=torch.bool, device=x.device), diagonal=1)
        att = att.masked_fill(causal, float("-inf"))
        y = torch.softmax(att, dim=-1) @ v
        return self.proj(y.transpose(1, 2).reshape(B, T, D))


class DecoderLayer(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = CausalSelfAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model), nn.GELU(), nn.Linear(4 * d_model, d_model)
        )

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


def _sinusoidal_positions(max_len: int, d_model: int) -> torch.Tensor:
    pos = torch.zeros(max_len, d_model)
    p = torch.arange(max_len, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model))
    pos[:, 0::2] = torch.sin(p * div)
    pos[:, 1::2] = torch.cos(p * div)
    return pos


class RhythmTransformer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.schedule = make_freeze_schedule(config)
        self.embed = nn.Embedding(config.vocab_size, config.d_model)
        self.register_buffer("positions", _sinusoidal_positions(config.max_seq_len, config.d_model))
        self.layers = nn.ModuleList(
            DecoderLayer(config.d_model, config.n_heads) for _ in range(config.n_layers)
        )
        self.inject_input = nn.Linear(config.rhythm_classes, config.d_model, bias=False)
        self.inject = nn.ModuleDict(
            {
                str(layer): nn.Linear(config.rhythm_classes, config.d_model, bias=False)
                for layer in sorted(self.schedule.injection_layers)
            }
        )
        self.ln_out = nn.LayerNorm(config.d_model)
        self.head = nn.Linear(config.d_model, config.vocab_size)

    def forward(self, tokens: torch.Tensor, grid: torch.Tensor, return_hiddens: bool = False):
        """tokens [B, T] int64; grid [B, K, T] float. Returns [B, T, vocab]
        logits, plus the per-layer hidden states when asked."""
        B, T = tokens.shape
        if T > self.config.max_seq_len:
            raise ValueError("sequence longer than max_seq_len")
        if grid.shape != (B, self.config.rhythm_classes, T):
            raise ValueError("grid shape %r does not match tokens" % (grid.shape,))
        g = grid.transpose(1, 2).to(self.embed.weight.dtype)
        x = self.embed(tokens) + self.positions[:T] + self.inject_input(g)
        hiddens = []
        for i, layer in enumerate(self.layers):
            key = str(i)
            if key in self.inject:
                x = x + self.inject[key](g)
            x = layer(x)
            if return_hiddens:
                hiddens.append(x)
        logits = self.head(self.ln_out(x))
        if return_hiddens:
            return logits, hiddens
        return logits


def init_parameters(model: RhythmTransformer, seed: int = 0) -> None:
    """Deterministic parameter init from a private generator: embeddings
    N(0, 0.02), linear layers uniform +-1/sqrt(fan_in), norms at identity."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, module in model.named_modules():
            if isinstance(module, nn.Embedding):
                module.weight.normal_(0.0, 0.02, generator=gen)
            elif isinstance(module, nn.Linear):
                bound = 1.0 / math.sqrt(module.in_features)
                module.weight.uniform_(-bound, bound, generator=gen)
                if module.bias is not None:
                    module.bias.uniform_(-bound, bound, generator=gen)
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.fill_(0.0)


def make_model(config: ModelConfig = None, seed: int = 0, dtype=torch.float32) -> RhythmTransformer:
    config = config or ModelConfig()
    model = RhythmTransformer(config)
    init_parameters(model, seed)
    model.to(dtype)
    apply_freeze(model)
    return model


def trainable_parameter_names(model: RhythmTransformer) -> list:
    """Parameters the schedule allows to move: layers at trainable indices,
    every injection map, and the output head. Everything else is frozen,
    including token embeddings and the final norm."""
    allowed = []
    for name, _ in model.named_parameters():
        parts = name.split(".")
        if name.startswith("layers."):
            if int(parts[1]) in model.schedule.trainable_layers:
                allowed.append(name)
        elif name.startswith(("inject_input", "inject.", "head.")):
            allowed.append(name)
    return allowed


def apply_freeze(model: RhythmTransformer) -> list:
    """Set requires_grad per the schedule; returns the trainable params."""
    allowed = set(trainable_parameter_names(model))
    trainable = []
    for name, p in model.named_parameters():
        p.requires_grad_(name in allowed)
        if name in allowed:
            trainable.append(p)
    return trainable


@dataclass
class TrainBatch:
    tokens: torch.Tensor  # [B, T] int64
    grids: torch.Tensor  # [B, K, T]
    loss_mask: torch.Tensor  # [B, T] bool

    @classmethod
    def from_examples(cls, examples, config: ModelConfig) -> "TrainBatch":
        """Pad (TokenSequence, grid) pairs to a common length. Padding sits
        after the loss-masked region, so causal attention never lets it
        influence a scored position."""
        T = max(len(seq) for seq, _ in examples)
        B = len(examples)
        tokens = torch.zeros(B, T, dtype=torch.int64)
        grids = torch.zeros(B, config.rhythm_classes, T)
        mask = torch.zeros(B, T, dtype=torch.bool)
        for i, (seq, grid) in enumerate(examples):
            t = len(seq)
            tokens[i, :t] = torch.from_numpy(seq.tokens)
            grids[i, :, :t] = torch.from_numpy(grid)
            mask[i, :t] = torch.from_numpy(seq.loss_mask)
        return cls(tokens=tokens, grids=grids, loss_mask=mask)


def sequence_loss(model: RhythmTransformer, batch: TrainBatch) -> torch.Tensor:
    """Next-token cross entropy over loss-masked positions only."""
    shift_mask = batch.loss_mask[:, 1:]
    if not bool(shift_mask.any()):
        raise ValueError("empty loss mask")
    logits = model(batch.tokens, batch.grids)
    return F.cross_entropy(logits[:, :-1][shift_mask], batch.tokens[:, 1:][shift_mask])


def train_step(model: RhythmTransformer, batch: TrainBatch, lr: float) -> float:
    """One full-batch gradient step on the schedule's trainable parameters.

    Plain SGD with a fixed learning rate: deterministic, no optimizer
    state, and frozen tensors are provably untouched because they never
    receive gradients.
    """
    loss = sequence_loss(model, batch)
    model.zero_grad(set_to_none=True)
    loss.backward()
    with torch.no_grad():
        for p in model.parameters():
            if p.requires_grad and p.grad is not None:
                p.add_(p.grad, alpha=-lr)
    model.zero_grad(set_to_none=True)
    return float(loss.detach())


def generate(
    model: RhythmTransformer,
    mix_tokens,
    rhythm: RhythmTrack,
    max_new: int,
    seed: int = 0,
    temperature: float = 0.0,
) -> list:
    """Continue after the delimiter for max_new tokens.

    Temperature 0 is exact argmax. The delimiter id is excluded from
    sampling so the output always decodes as codec tokens.
    """
    config = model.config
    mix_tokens = list(mix_tokens)
    prompt_len = len(mix_tokens) + 1
    total = prompt_len + max_new
    if total > config.max_seq_len:
        raise ValueError("prompt plus max_new exceeds max_seq_len")
    grid = np.zeros((config.rhythm_classes, total), dtype=np.float32)
    for e in rhythm.events:
        frame = int(round(e.onset_sec * config.frame_rate))
        if 0 <= frame < max_new and e.class_index < config.rhythm_classes:
            grid[e.class_index, prompt_len + frame] = 1.0
    tokens = torch.tensor(mix_tokens + [config.delimiter_id], dtype=torch.int64)
    grid_t = torch.from_numpy(grid)
    gen = torch.Generator().manual_seed(seed)
    out = []
    model.eval()
    with torch.no_grad():
        for _ in range(max_new):
            T = tokens.shape[0]
            logits = model(tokens.unsqueeze(0), grid_t[:, :T].unsqueeze(0))[0, -1]
            logits[config.delimiter_id] = float("-inf")
            if temperature <= 0:
                nxt = int(torch.argmax(logits))
            else:
                probs = torch.softmax(logits / temperature, dim=-1)
                nxt = int(torch.multinomial(probs, 1, generator=gen))
            out.append(nxt)
            tokens = torch.cat([tokens, torch.tensor([nxt], dtype=torch.int64)])
    return out


def save_checkpoint(model: RhythmTransformer, path, losses=None) -> None:
    """Single-file binary: magic, version, JSON header (config + tensor
    manifest + loss log), then raw float32 tensor bytes in manifest order."""
    names = [name for name, _ in model.named_parameters()]
    header = {
        "config": asdict(model.config),
        "tensors": [
            [name, list(p.shape)] for name, p in model.named_parameters()
        ],
        "losses": list(losses) if losses is not None else [],
    }
    blob = json.dumps(header).encode()
    params = dict(model.named_parameters())
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(params[name].detach().to(torch.float32).numpy().tobytes())


def load_checkpoint(path):
    """Returns (model, losses). Raises CheckpointVersionError on a version
    other than CHECKPOINT_VERSION."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a model checkpoint")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                "checkpoint version %d, expected %d" % (version, CHECKPOINT_VERSION)
            )
        header = json.loads(fh.read(blob_len))
        config = ModelConfig(**header["config"])
        model = RhythmTransformer(config)
        states = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise ValueError("checkpoint truncated at tensor %s" % name)
            states[name] = torch.from_numpy(
                np.frombuffer(raw, dtype=np.float32).copy().reshape(shape)
            )
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name not in states:
                raise ValueError("checkpoint missing tensor %s" % name)
            p.copy_(states[name])
    apply_freeze(model)
    return model, header.get("losses", [])
