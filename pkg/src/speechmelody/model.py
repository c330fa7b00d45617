"""Encoder-decoder Transformer over the melody token alphabet.

One architecture serves both generation tasks: relative-position
self-attention in encoder and decoder, standard cross-attention, and a
pitch softmax head. The gap-filling variant adds a sigmoid token-count
head so a pitch and its repetition count come out of one decoding step.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import (
    CorruptCheckpoint,
    NonFiniteGradient,
    SequenceTooLong,
    ShapeMismatch,
    SpecMismatch,
)
from .symbolic import START, VOCAB_SIZE
from .taskgen import MAX_COUNT, Task, TrainPair

PITCH_CLASSES = 89  # silence plus the 88 piano keys
PAD = 0             # padding id; padded positions are masked everywhere


@dataclass(frozen=True)
class ModelSpec:
    variant: Task
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 128
    dropout: float = 0.1
    vocab_size: int = VOCAB_SIZE
    rel_window: int = 32
    max_len: int = 502

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["variant"] = Task(d["variant"])
        return cls(**d)


def preset(name: str, variant: Task | None = None) -> ModelSpec:
    """Named hyperparameter presets; "desk" is sized for laptop training."""
    if name == "paper":
        if variant is Task.GAPFILL:
            return ModelSpec(variant, d_model=512, n_layers=6, n_heads=8,
                             d_ff=1024, rel_window=128)
        if variant is Task.DENOISE:
            return ModelSpec(variant, d_model=128, n_layers=2, n_heads=2,
                             d_ff=1024, rel_window=128)
        raise ValueError("paper preset requires a task variant")
    if name == "desk":
        if variant is None:
            raise ValueError("desk preset requires a task variant")
        return ModelSpec(variant, d_model=64, n_layers=2, n_heads=2,
                         d_ff=128, rel_window=32)
    raise ValueError(f"unknown preset {name!r}")


def scale_count(count: int) -> float:
    """Map a token count in [1, 500] onto the sigmoid range [0, 1]."""
    return (min(int(count), MAX_COUNT) - 1) / (MAX_COUNT - 1)


def unscale_count(sigmoid_out: float) -> int:
    """Inverse of scale_count, rounding to the nearest integer count."""
    return int(round(float(sigmoid_out) * (MAX_COUNT - 1))) + 1


def relative_position_logits(q: torch.Tensor, rel_emb: torch.Tensor, window: int,
                             n_keys: int | None = None) -> torch.Tensor:
    """Query-against-relative-embedding attention logits.

    q: [B, H, Lq, Dh]; rel_emb: [H, 2*window+1, Dh]. The relative distance
    key_pos - query_pos is clipped to [-window, window], so positions
    farther apart share the boundary embedding. Returns [B, H, Lq, Lk].
    """
    lq = q.shape[2]
    lk = n_keys if n_keys is not None else lq
    device = q.device
    rel = torch.arange(lk, device=device)[None, :] - torch.arange(lq, device=device)[:, None]
    idx = torch.clamp(rel, -window, window) + window
    emb = rel_emb[:, idx, :]                      # [H, Lq, Lk, Dh]
    return torch.einsum("bhqd,hqkd->bhqk", q, emb)


class RelativeSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, window: int, dropout: float,
                 causal: bool):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.window = window
        self.causal = causal
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)
        self.rel_emb = nn.Parameter(
            torch.randn(n_heads, 2 * window + 1, self.head_dim) * 0.02
        )

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, l, _ = x.shape
        return x.view(b, l, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None = None):
        q, k, v = self._split(self.q_proj(x)), self._split(self.k_proj(x)), self._split(self.v_proj(x))
        logits = q @ k.transpose(-1, -2)
        logits = logits + relative_position_logits(q, self.rel_emb, self.window)
        logits = logits / math.sqrt(self.head_dim)
        if self.causal:
            l = x.shape[1]
            future = torch.triu(torch.ones(l, l, dtype=torch.bool, device=x.device), 1)
            logits = logits.masked_fill(future, float("-inf"))
        if pad_mask is not None:
            logits = logits.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        attn = self.dropout(torch.softmax(logits, dim=-1))
        out = (attn @ v).transpose(1, 2).flatten(2)
        return self.out_proj(out)


class CrossAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, l, _ = x.shape
        return x.view(b, l, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, memory: torch.Tensor,
                memory_pad: torch.Tensor | None = None):
        q = self._split(self.q_proj(x))
        k = self._split(self.k_proj(memory))
        v = self._split(self.v_proj(memory))
        logits = (q @ k.transpose(-1, -2)) / math.sqrt(self.head_dim)
        if memory_pad is not None:
            logits = logits.masked_fill(memory_pad[:, None, None, :], float("-inf"))
        attn = self.dropout(torch.softmax(logits, dim=-1))
        out = (attn @ v).transpose(1, 2).flatten(2)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_model, d_ff),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(d_ff, d_model),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class EncoderLayer(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.norm1 = nn.LayerNorm(spec.d_model)
        self.attn = RelativeSelfAttention(spec.d_model, spec.n_heads,
                                          spec.rel_window, spec.dropout, causal=False)
        self.norm2 = nn.LayerNorm(spec.d_model)
        self.ff = FeedForward(spec.d_model, spec.d_ff, spec.dropout)
        self.dropout = nn.Dropout(spec.dropout)

    def forward(self, x, pad_mask):
        x = x + self.dropout(self.attn(self.norm1(x), pad_mask))
        x = x + self.dropout(self.ff(self.norm2(x)))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.norm1 = nn.LayerNorm(spec.d_model)
        self.self_attn = RelativeSelfAttention(spec.d_model, spec.n_heads,
                                               spec.rel_window, spec.dropout, causal=True)
        self.norm2 = nn.LayerNorm(spec.d_model)
        self.cross_attn = CrossAttention(spec.d_model, spec.n_heads, spec.dropout)
        self.norm3 = nn.LayerNorm(spec.d_model)
        self.ff = FeedForward(spec.d_model, spec.d_ff, spec.dropout)
        self.dropout = nn.Dropout(spec.dropout)

    def forward(self, x, memory, dec_pad, enc_pad):
        x = x + self.dropout(self.self_attn(self.norm1(x), dec_pad))
        x = x + self.dropout(self.cross_attn(self.norm2(x), memory, enc_pad))
        x = x + self.dropout(self.ff(self.norm3(x)))
        return x


class MelodyTransformer(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.enc_embed = nn.Embedding(spec.vocab_size, spec.d_model)
        self.dec_embed = nn.Embedding(spec.vocab_size, spec.d_model)
        self.embed_dropout = nn.Dropout(spec.dropout)
        self.enc_layers = nn.ModuleList(EncoderLayer(spec) for _ in range(spec.n_layers))
        self.dec_layers = nn.ModuleList(DecoderLayer(spec) for _ in range(spec.n_layers))
        self.enc_norm = nn.LayerNorm(spec.d_model)
        self.dec_norm = nn.LayerNorm(spec.d_model)
        self.pitch_head = nn.Linear(spec.d_model, PITCH_CLASSES)
        if spec.variant is Task.GAPFILL:
            self.count_head = nn.Linear(spec.d_model, 1)

    def encode(self, enc_tokens: torch.Tensor, enc_pad: torch.Tensor | None = None):
        if enc_tokens.shape[1] > self.spec.max_len:
            raise SequenceTooLong(
                f"encoder input length {enc_tokens.shape[1]} > {self.spec.max_len}"
            )
        x = self.enc_embed(enc_tokens) * math.sqrt(self.spec.d_model)
        x = self.embed_dropout(x)
        for layer in self.enc_layers:
            x = layer(x, enc_pad)
        return self.enc_norm(x)

    def decode(self, dec_tokens: torch.Tensor, memory: torch.Tensor,
               dec_pad: torch.Tensor | None = None,
               enc_pad: torch.Tensor | None = None):
        if dec_tokens.shape[1] > self.spec.max_len:
            raise SequenceTooLong(
                f"decoder input length {dec_tokens.shape[1]} > {self.spec.max_len}"
            )
        x = self.dec_embed(dec_tokens) * math.sqrt(self.spec.d_model)
        x = self.embed_dropout(x)
        for layer in self.dec_layers:
            x = layer(x, memory, dec_pad, enc_pad)
        return self.dec_norm(x)

    def forward(self, enc_tokens: torch.Tensor, dec_tokens: torch.Tensor,
                enc_pad: torch.Tensor | None = None,
                dec_pad: torch.Tensor | None = None):
        """Returns (pitch_logits [B, Ld, 89], count_pred [B, Ld] or None)."""
        if enc_tokens.shape[0] != dec_tokens.shape[0]:
            raise ShapeMismatch("encoder/decoder batch sizes differ")
        memory = self.encode(enc_tokens, enc_pad)
        h = self.decode(dec_tokens, memory, dec_pad, enc_pad)
        pitch_logits = self.pitch_head(h)
        counts = None
        if self.spec.variant is Task.GAPFILL:
            counts = torch.sigmoid(self.count_head(h)).squeeze(-1)
        return pitch_logits, counts


# --- batching ----------------------------------------------------------------

def collate(pairs: list[TrainPair]) -> dict:
    """Pad a list of TrainPairs into batch tensors.

    Gap-fill decoder steps walk the target runs: the decoder consumes the
    previous run's pitch (START first) and predicts the current run's pitch
    and scaled count. Denoise decoder steps walk the content positions.
    """
    task = pairs[0].task
    enc_lens = [len(p.encoder_input.tokens) for p in pairs]
    enc = torch.full((len(pairs), max(enc_lens)), PAD, dtype=torch.long)
    enc_pad = torch.ones(enc.shape, dtype=torch.bool)
    for i, p in enumerate(pairs):
        enc[i, : enc_lens[i]] = torch.tensor(p.encoder_input.tokens, dtype=torch.long)
        enc_pad[i, : enc_lens[i]] = False

    if task is Task.GAPFILL:
        step_lens = [len(p.target_runs) for p in pairs]
        width = max(step_lens)
        dec_in = torch.full((len(pairs), width), PAD, dtype=torch.long)
        pitch_t = torch.full((len(pairs), width), 0, dtype=torch.long)
        count_t = torch.zeros((len(pairs), width), dtype=torch.float32)
        mask = torch.zeros((len(pairs), width), dtype=torch.bool)
        for i, p in enumerate(pairs):
            pitches = [pitch for pitch, _ in p.target_runs]
            dec_in[i, : step_lens[i]] = torch.tensor([START] + pitches[:-1], dtype=torch.long)
            pitch_t[i, : step_lens[i]] = torch.tensor(pitches, dtype=torch.long)
            count_t[i, : step_lens[i]] = torch.tensor(
                [scale_count(c) for _, c in p.target_runs], dtype=torch.float32
            )
            mask[i, : step_lens[i]] = True
    else:
        step_lens = [p.target_seq.content_len for p in pairs]
        width = max(step_lens)
        dec_in = torch.full((len(pairs), width), PAD, dtype=torch.long)
        pitch_t = torch.full((len(pairs), width), 0, dtype=torch.long)
        count_t = torch.zeros((len(pairs), width), dtype=torch.float32)
        mask = torch.zeros((len(pairs), width), dtype=torch.bool)
        for i, p in enumerate(pairs):
            content = list(p.target_seq.content)
            dec_in[i, : step_lens[i]] = torch.tensor([START] + content[:-1], dtype=torch.long)
            pitch_t[i, : step_lens[i]] = torch.tensor(content, dtype=torch.long)
            mask[i, : step_lens[i]] = True

    return {
        "task": task,
        "enc": enc,
        "enc_pad": enc_pad,
        "dec_in": dec_in,
        "dec_pad": ~mask,
        "pitch_target": pitch_t,
        "count_target": count_t,
        "step_mask": mask,
    }


def compute_loss(variant: Task, pitch_logits: torch.Tensor,
                 count_pred: torch.Tensor | None, batch: dict):
    """Pitch NLL plus (gap-fill only) count MSE, averaged over real steps."""
    target = batch["pitch_target"]
    mask = batch["step_mask"]
    if pitch_logits.shape[:2] != target.shape:
        raise ShapeMismatch(
            f"logits {tuple(pitch_logits.shape[:2])} vs targets {tuple(target.shape)}"
        )
    flat_mask = mask.reshape(-1)
    nll = F.cross_entropy(
        pitch_logits.reshape(-1, PITCH_CLASSES)[flat_mask],
        target.reshape(-1)[flat_mask],
    )
    parts = {"pitch_nll": float(nll.detach())}
    loss = nll
    if variant is Task.GAPFILL:
        if count_pred is None or count_pred.shape != target.shape:
            raise ShapeMismatch("count predictions missing or mis-shaped")
        scaled = batch["count_target"].to(count_pred.dtype)
        mse = torch.mean((count_pred.reshape(-1)[flat_mask] - scaled.reshape(-1)[flat_mask]) ** 2)
        parts["count_mse"] = float(mse.detach())
        loss = loss + mse
    return loss, parts


# --- optimization ------------------------------------------------------------

def warmup_lr(step: int, d_model: int, warmup: int) -> float:
    """Inverse-sqrt schedule with linear warmup; peaks at step == warmup."""
    if step < 1:
        raise ValueError("step is 1-based")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


class Trainer:
    """Single-writer training state: model, Adam optimizer, step counter."""

    def __init__(self, spec: ModelSpec, warmup: int = 4000, seed: int = 0):
        torch.manual_seed(seed)
        self.spec = spec
        self.warmup = warmup
        self.model = MelodyTransformer(spec)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=1.0, betas=(0.9, 0.98), eps=1e-9
        )
        self.step = 0

    def train_step(self, pairs: list[TrainPair]) -> dict:
        self.step += 1
        lr = warmup_lr(self.step, self.spec.d_model, self.warmup)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.model.train()
        batch = collate(pairs)
        logits, counts = self.model(batch["enc"], batch["dec_in"],
                                    batch["enc_pad"], batch["dec_pad"])
        loss, parts = compute_loss(self.spec.variant, logits, counts, batch)
        self.optimizer.zero_grad()
        loss.backward()
        for name, param in self.model.named_parameters():
            if param.grad is not None and not torch.isfinite(param.grad).all():
                raise NonFiniteGradient(f"non-finite gradient in {name} at step {self.step}")
        self.optimizer.step()
        return {"step": self.step, "loss": float(loss.detach()), "lr": lr, **parts}


def train_model(
    corpus,
    task: Task,
    spec: ModelSpec | None = None,
    steps: int = 1000,
    seed: int = 0,
    batch_size: int = 8,
    warmup: int = 400,
    stop_pitch_nll: float | None = None,
    log_every: int = 0,
):
    """Train from scratch on a token corpus; returns (trainer, history).

    stop_pitch_nll, when set, ends training early once the mean pitch NLL
    over the last 25 steps falls below it.
    """
    from .taskgen import make_batches  # local import keeps module load light

    if spec is None:
        spec = preset("desk", task)
    trainer = Trainer(spec, warmup=warmup, seed=seed)
    rng = np.random.default_rng(seed)
    batches = make_batches(list(corpus), task, batch_size, rng)
    history = []
    recent = []
    for _ in range(steps):
        metrics = trainer.train_step(next(batches))
        history.append(metrics)
        recent.append(metrics["pitch_nll"])
        if log_every and metrics["step"] % log_every == 0:
            print(
                f"step {metrics['step']:5d}  loss {metrics['loss']:.4f}  "
                f"pitch_nll {metrics['pitch_nll']:.4f}"
            )
        if stop_pitch_nll is not None and len(recent) >= 25:
            if float(np.mean(recent[-25:])) < stop_pitch_nll:
                break
    return trainer, history


# --- checkpointing -----------------------------------------------------------

CHECKPOINT_FORMAT = "speechmelody-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    spec: ModelSpec
    parameters: dict
    optimizer_state: dict | None
    step_count: int


def save_checkpoint(path, model: MelodyTransformer,
                    optimizer: torch.optim.Optimizer | None = None,
                    step_count: int = 0) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "parameters": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "step_count": step_count,
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_spec: ModelSpec | None = None) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint("not a speechmelody checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {payload.get('version')}")
    try:
        spec = ModelSpec.from_dict(payload["spec"])
        parameters = payload["parameters"]
        step_count = int(payload["step_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint payload: {exc}") from exc
    for name, tensor in parameters.items():
        if not torch.isfinite(tensor).all():
            raise CorruptCheckpoint(f"non-finite parameter {name}")
    if expected_spec is not None and spec != expected_spec:
        raise SpecMismatch(f"checkpoint spec {spec} != expected {expected_spec}")
    return Checkpoint(spec, parameters, payload.get("optimizer_state"), step_count)


def build_model(ckpt: Checkpoint) -> MelodyTransformer:
    """Instantiate a model from a checkpoint and load its weights."""
    model = MelodyTransformer(ckpt.spec)
    try:
        model.load_state_dict(ckpt.parameters)
    except RuntimeError as exc:
        raise SpecMismatch(f"parameters do not fit declared spec: {exc}") from exc
    model.eval()
    return model
