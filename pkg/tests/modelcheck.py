"""Independent model-verification utilities shared by the unit and
acceptance suites: a from-scratch content-only attention forward used as an
oracle, and a central finite-difference gradient checker."""

import math

import torch
import torch.nn.functional as F

from speechmelody.model import PITCH_CLASSES, MelodyTransformer, compute_loss
from speechmelody.taskgen import Task


def _heads(x, n_heads):
    b, l, d = x.shape
    return x.view(b, l, n_heads, d // n_heads).transpose(1, 2)


def _linear(x, sd, name):
    return x @ sd[f"{name}.weight"].T + sd[f"{name}.bias"]


def _ln(x, sd, name):
    return F.layer_norm(x, x.shape[-1:], sd[f"{name}.weight"], sd[f"{name}.bias"])


def _plain_attention(x_q, x_kv, sd, prefix, n_heads, causal=False, key_pad=None):
    q = _heads(_linear(x_q, sd, f"{prefix}.q_proj"), n_heads)
    k = _heads(_linear(x_kv, sd, f"{prefix}.k_proj"), n_heads)
    v = _heads(_linear(x_kv, sd, f"{prefix}.v_proj"), n_heads)
    logits = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
    if causal:
        l = x_q.shape[1]
        future = torch.triu(torch.ones(l, l, dtype=torch.bool), 1)
        logits = logits.masked_fill(future, float("-inf"))
    if key_pad is not None:
        logits = logits.masked_fill(key_pad[:, None, None, :], float("-inf"))
    out = (torch.softmax(logits, dim=-1) @ v).transpose(1, 2).flatten(2)
    return _linear(out, sd, f"{prefix}.out_proj")


def _ff(x, sd, prefix):
    h = torch.relu(_linear(x, sd, f"{prefix}.net.0"))
    return _linear(h, sd, f"{prefix}.net.3")


def reference_forward(model: MelodyTransformer, enc_tokens, dec_tokens,
                      enc_pad=None, dec_pad=None):
    """Forward pass reimplemented without any relative-position terms.

    Matches the model when its relative embeddings are all zero; serves as
    the content-only attention oracle.
    """
    spec = model.spec
    sd = {k: v.detach().clone() for k, v in model.state_dict().items()}
    scale = math.sqrt(spec.d_model)

    x = sd["enc_embed.weight"][enc_tokens] * scale
    for i in range(spec.n_layers):
        p = f"enc_layers.{i}"
        x = x + _plain_attention(_ln(x, sd, f"{p}.norm1"), _ln(x, sd, f"{p}.norm1"),
                                 sd, f"{p}.attn", spec.n_heads, key_pad=enc_pad)
        x = x + _ff(_ln(x, sd, f"{p}.norm2"), sd, f"{p}.ff")
    memory = _ln(x, sd, "enc_norm")

    y = sd["dec_embed.weight"][dec_tokens] * scale
    for i in range(spec.n_layers):
        p = f"dec_layers.{i}"
        normed = _ln(y, sd, f"{p}.norm1")
        y = y + _plain_attention(normed, normed, sd, f"{p}.self_attn",
                                 spec.n_heads, causal=True, key_pad=dec_pad)
        y = y + _plain_attention(_ln(y, sd, f"{p}.norm2"), memory, sd,
                                 f"{p}.cross_attn", spec.n_heads, key_pad=enc_pad)
        y = y + _ff(_ln(y, sd, f"{p}.norm3"), sd, f"{p}.ff")
    h = _ln(y, sd, "dec_norm")

    pitch_logits = _linear(h, sd, "pitch_head")
    counts = None
    if spec.variant is Task.GAPFILL:
        counts = torch.sigmoid(_linear(h, sd, "count_head")).squeeze(-1)
    return pitch_logits, counts


def finite_difference_check(model: MelodyTransformer, batch: dict,
                            eps: float = 1e-5, entries_per_tensor: int = 6,
                            grad_floor: float = 0.1):
    """Compare autograd gradients with central finite differences.

    The model must be in double precision and eval mode. For each parameter
    tensor the largest-|gradient| entries plus a few seeded-random ones are
    perturbed. The error at each entry is |fd - analytic| divided by
    max(|fd|, |analytic|, grad_floor): gradients above grad_floor are
    compared relatively, while smaller ones are held to an absolute bound
    of grad_floor * tolerance (1e-5 at the defaults, matching
    torch.autograd.gradcheck's atol). The floor is needed because the
    central difference itself carries up to ~2e-6 absolute noise at
    eps=1e-5: the two float64 loss evaluations are only stable to ~4e-11
    through the attention/LayerNorm reductions, and that cancellation
    noise divides by 2*eps. No implementation can beat it on near-zero
    gradients. Returns the worst error across all tensors.
    """
    model.eval()

    def loss_value():
        logits, counts = model(batch["enc"], batch["dec_in"],
                               batch["enc_pad"], batch["dec_pad"])
        loss, _ = compute_loss(model.spec.variant, logits, counts, batch)
        return float(loss.detach())

    model.zero_grad()
    logits, counts = model(batch["enc"], batch["dec_in"],
                           batch["enc_pad"], batch["dec_pad"])
    loss, _ = compute_loss(model.spec.variant, logits, counts, batch)
    loss.backward()

    worst = 0.0
    gen = torch.Generator().manual_seed(0)
    for name, param in model.named_parameters():
        grad = param.grad.detach().clone().reshape(-1)
        flat = param.data.reshape(-1)
        n_top = min(entries_per_tensor // 2, flat.numel())
        top = torch.topk(grad.abs(), n_top).indices
        rand = torch.randint(0, flat.numel(), (entries_per_tensor - n_top,), generator=gen)
        for i in torch.cat([top, rand]).tolist():
            orig = float(flat[i])
            flat[i] = orig + eps
            up = loss_value()
            flat[i] = orig - eps
            down = loss_value()
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            analytic = float(grad[i])
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), grad_floor)
            worst = max(worst, rel)
    return worst


def logits_rows_are_distributions(pitch_logits, atol=1e-6):
    probs = torch.softmax(pitch_logits, dim=-1)
    return (
        torch.isfinite(pitch_logits).all()
        and bool(torch.all((probs.sum(-1) - 1.0).abs() <= atol))
        and probs.shape[-1] == PITCH_CLASSES
    )
