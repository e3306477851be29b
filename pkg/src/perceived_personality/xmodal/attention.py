"""Kernelized linear attention and the transformer block built on it."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from ..errors import ValidationError

# Added to the attention normalizer so that it never vanishes.
EPS_DEN = 1e-6
LN_EPS = 1e-5


def feature_map(x: torch.Tensor) -> torch.Tensor:
    """elu(x) + 1, strictly positive."""
    return F.elu(x) + 1.0


def _as_tensor(x) -> tuple[torch.Tensor, bool]:
    if isinstance(x, torch.Tensor):
        return x, False
    return torch.as_tensor(x, dtype=torch.float64), True


def linear_attention_t(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, eps: float = EPS_DEN) -> torch.Tensor:
    """Non-causal linear attention on tensors of shape ``(..., T, d)``.

    ``out_i = phi(q_i) . S / (phi(q_i) . z + eps)`` where
    ``S = mean_j phi(k_j) v_j^T`` and ``z = mean_j phi(k_j)``. Using means
    instead of sums leaves the ratio unchanged but makes the output exactly
    invariant to repeating every key/value row.
    """
    fq = feature_map(q)
    fk = feature_map(k)
    tk = k.shape[-2]
    kv = torch.einsum("...jd,...je->...de", fk, v) / tk
    z = fk.mean(dim=-2)
    num = torch.einsum("...id,...de->...ie", fq, kv)
    den = torch.einsum("...id,...d->...i", fq, z) + eps
    return num / den.unsqueeze(-1)


def linear_attention(Q, K, V, eps: float = EPS_DEN):
    """Linear attention for ``Q (Tq, d)``, ``K (Tk, d)``, ``V (Tk, d_v)``.

    Accepts numpy arrays (returns numpy) or torch tensors (returns torch).
    """
    q, was_np = _as_tensor(Q)
    k, _ = _as_tensor(K)
    v, _ = _as_tensor(V)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValidationError("Q, K, V must be 2-D")
    if q.shape[1] != k.shape[1]:
        raise ValidationError(f"query/key width mismatch: {q.shape[1]} vs {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ValidationError(f"keys and values differ in length: {k.shape[0]} vs {v.shape[0]}")
    if k.shape[0] < 1:
        raise ValidationError("need at least one key")
    out = linear_attention_t(q, k, v, eps)
    return out.detach().numpy() if was_np else out


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + LN_EPS) * gain + bias


BLOCK_KEYS = ("wq", "wk", "wv", "wo", "bo", "ln_gain", "ln_bias", "ff_w1", "ff_b1", "ff_w2", "ff_b2")


def block_t(target: torch.Tensor, source: torch.Tensor, w: dict, heads: int) -> torch.Tensor:
    """One attention block: queries from ``target``, keys/values from ``source``.

    ``h = LN(target + MHA(target, source))`` followed by
    ``out = h + FFN(h)`` with a ReLU feed-forward.
    """
    d = target.shape[-1]
    if source.shape[-1] != d:
        raise ValidationError(f"target width {d} != source width {source.shape[-1]}")
    if d % heads:
        raise ValidationError(f"width {d} not divisible by {heads} heads")
    dh = d // heads
    q = (target @ w["wq"]).reshape(-1, heads, dh).transpose(0, 1)
    k = (source @ w["wk"]).reshape(-1, heads, dh).transpose(0, 1)
    v = (source @ w["wv"]).reshape(-1, heads, dh).transpose(0, 1)
    att = linear_attention_t(q, k, v).transpose(0, 1).reshape(-1, d)
    h = layer_norm(target + att @ w["wo"] + w["bo"], w["ln_gain"], w["ln_bias"])
    ff = torch.relu(h @ w["ff_w1"] + w["ff_b1"]) @ w["ff_w2"] + w["ff_b2"]
    return h + ff


def cross_modal_block(target, source, weights: dict, heads: int = 4):
    """Cross-modal block on projected sequences ``(T_target, d)`` and ``(T_source, d)``.

    ``weights`` maps the names in ``BLOCK_KEYS`` to arrays. Numpy in,
    numpy out.
    """
    missing = [k for k in BLOCK_KEYS if k not in weights]
    if missing:
        raise ValidationError(f"block weights missing {missing}")
    t, was_np = _as_tensor(target)
    s, _ = _as_tensor(source)
    if t.ndim != 2 or s.ndim != 2:
        raise ValidationError("target and source must be 2-D")
    w = {k: _as_tensor(weights[k])[0] for k in BLOCK_KEYS}
    out = block_t(t, s, w, heads)
    return out.detach().numpy() if was_np else out
