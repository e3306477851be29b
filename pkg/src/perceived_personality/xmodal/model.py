"""Linear multimodal transformer over acoustic, textual and visual streams.

Every modality is projected to a common width ``d``. For each ordered
(source, target) pair a cross-modal block lets the target query the
source, giving six blocks. The two outputs sharing a target are
concatenated featurewise, projected back to ``d`` and fused by a
self-attention block, then mean-pooled over time. The three pooled
vectors feed a linear head with logistic output, one score per trait.

There is no positional encoding, so attention over a stream is invariant
to reordering its timesteps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..core import TraitVector
from ..errors import NumericError, ValidationError
from .attention import BLOCK_KEYS, block_t

MODALITIES = ("acoustic", "textual", "visual")
DEFAULT_INPUT_DIMS = {"acoustic": 88, "textual": 768, "visual": 17}
PAIRS = tuple((src, tgt) for tgt in MODALITIES for src in MODALITIES if src != tgt)


@dataclass(frozen=True)
class HyperConfig:
    d: int = 32
    heads: int = 4
    layers: int = 1
    ff_mult: int = 2
    learning_rate: float = 1e-2
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.heads < 1 or self.layers < 1 or self.ff_mult < 1:
            raise ValidationError("d, heads, layers and ff_mult must be positive")
        if self.d % self.heads:
            raise ValidationError(f"d={self.d} not divisible by heads={self.heads}")
        if self.learning_rate < 0 or self.epochs < 0:
            raise ValidationError("learning_rate and epochs must be non-negative")


@dataclass(frozen=True)
class ModalitySequence:
    modality: str
    features: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValidationError(f"unknown modality {self.modality!r}")
        arr = np.array(self.features, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValidationError(f"{self.modality}: need a (T>=1, d) matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{self.modality}: non-finite features")
        arr.setflags(write=False)
        object.__setattr__(self, "features", arr)


def block_prefix(kind: str, name: str, layer: int) -> str:
    return f"{kind}.{name}.layer{layer}"


def cross_name(src: str, tgt: str) -> str:
    return f"{src}->{tgt}"


@dataclass
class ModelParams:
    """Named float64 parameter arrays plus the configuration that shapes them."""

    hyper: HyperConfig
    input_dims: dict[str, int]
    tensors: dict[str, np.ndarray]
    loss_curve: list[float] = field(default_factory=list)

    def inventory(self) -> dict[str, list[str]]:
        """Distinct blocks by kind, e.g. six ``cross`` entries."""
        kinds: dict[str, set[str]] = {}
        for key in self.tensors:
            parts = key.split(".")
            if parts[0] in ("cross", "fuse"):
                kinds.setdefault(parts[0], set()).add(parts[1])
        return {k: sorted(v) for k, v in kinds.items()}

    def n_parameters(self) -> int:
        return int(sum(a.size for a in self.tensors.values()))

    def torch_params(self, requires_grad: bool = False) -> dict[str, torch.Tensor]:
        return {
            k: torch.tensor(v, dtype=torch.float64, requires_grad=requires_grad)
            for k, v in self.tensors.items()
        }

    def copy(self) -> "ModelParams":
        return ModelParams(self.hyper, dict(self.input_dims), {k: v.copy() for k, v in self.tensors.items()}, list(self.loss_curve))


def _block_shapes(d: int, ff: int) -> dict[str, tuple[int, ...]]:
    return {
        "wq": (d, d),
        "wk": (d, d),
        "wv": (d, d),
        "wo": (d, d),
        "bo": (d,),
        "ln_gain": (d,),
        "ln_bias": (d,),
        "ff_w1": (d, ff),
        "ff_b1": (ff,),
        "ff_w2": (ff, d),
        "ff_b2": (d,),
    }


def param_shapes(input_dims: dict[str, int], hyper: HyperConfig) -> dict[str, tuple[int, ...]]:
    d, ff = hyper.d, hyper.d * hyper.ff_mult
    shapes: dict[str, tuple[int, ...]] = {}
    for m in MODALITIES:
        shapes[f"proj.{m}.weight"] = (input_dims[m], d)
        shapes[f"proj.{m}.bias"] = (d,)
    for src, tgt in PAIRS:
        for layer in range(hyper.layers):
            for k, s in _block_shapes(d, ff).items():
                shapes[f"{block_prefix('cross', cross_name(src, tgt), layer)}.{k}"] = s
    for tgt in MODALITIES:
        shapes[f"fuse.{tgt}.proj.weight"] = (2 * d, d)
        shapes[f"fuse.{tgt}.proj.bias"] = (d,)
        for layer in range(hyper.layers):
            for k, s in _block_shapes(d, ff).items():
                shapes[f"{block_prefix('fuse', tgt, layer)}.{k}"] = s
    shapes["head.weight"] = (3 * d, 5)
    shapes["head.bias"] = (5,)
    return shapes


def init_params(input_dims: dict[str, int] | None = None, hyper: HyperConfig = HyperConfig()) -> ModelParams:
    """Seeded initialization: scaled normal weights, unit LN gains, zero biases."""
    dims = dict(DEFAULT_INPUT_DIMS if input_dims is None else input_dims)
    missing = [m for m in MODALITIES if m not in dims]
    if missing:
        raise ValidationError(f"input_dims missing {missing}")
    rng = np.random.default_rng(hyper.seed)
    tensors = {}
    for name, shape in param_shapes(dims, hyper).items():
        if name.endswith("ln_gain"):
            tensors[name] = np.ones(shape)
        elif len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), shape)
    return ModelParams(hyper, dims, tensors)


def _check(x: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise NumericError(f"non-finite activation in {where}")
    return x


def _block_weights(p: dict, prefix: str) -> dict:
    return {k: p[f"{prefix}.{k}"] for k in BLOCK_KEYS}


def forward_t(seqs: dict[str, torch.Tensor], p: dict[str, torch.Tensor], hyper: HyperConfig) -> torch.Tensor:
    """Differentiable forward pass returning the 5 squashed scores."""
    proj = {
        m: _check(seqs[m] @ p[f"proj.{m}.weight"] + p[f"proj.{m}.bias"], f"proj.{m}")
        for m in MODALITIES
    }
    pooled = []
    for tgt in MODALITIES:
        streams = []
        for src in MODALITIES:
            if src == tgt:
                continue
            x = proj[tgt]
            for layer in range(hyper.layers):
                prefix = block_prefix("cross", cross_name(src, tgt), layer)
                x = _check(block_t(x, proj[src], _block_weights(p, prefix), hyper.heads), prefix)
            streams.append(x)
        z = torch.cat(streams, dim=-1) @ p[f"fuse.{tgt}.proj.weight"] + p[f"fuse.{tgt}.proj.bias"]
        for layer in range(hyper.layers):
            prefix = block_prefix("fuse", tgt, layer)
            z = _check(block_t(z, z, _block_weights(p, prefix), hyper.heads), prefix)
        pooled.append(z.mean(dim=0))
    logits = _check(torch.cat(pooled) @ p["head.weight"] + p["head.bias"], "head")
    return torch.sigmoid(logits)


def _sequences(acoustic, textual, visual, params: ModelParams) -> dict[str, torch.Tensor]:
    out = {}
    for m, s in zip(MODALITIES, (acoustic, textual, visual)):
        arr = s.features if isinstance(s, ModalitySequence) else ModalitySequence(m, s).features
        if isinstance(s, ModalitySequence) and s.modality != m:
            raise ValidationError(f"expected {m} sequence, got {s.modality}")
        if arr.shape[1] != params.input_dims[m]:
            raise ValidationError(f"{m}: feature width {arr.shape[1]} != model input {params.input_dims[m]}")
        out[m] = torch.tensor(arr, dtype=torch.float64)
    return out


def forward_scores(acoustic, textual, visual, params: ModelParams) -> np.ndarray:
    """Raw (5,) score array in (0, 1)."""
    seqs = _sequences(acoustic, textual, visual, params)
    with torch.no_grad():
        return forward_t(seqs, params.torch_params(), params.hyper).numpy()


def forward(acoustic, textual, visual, params: ModelParams) -> TraitVector:
    return TraitVector.from_array(forward_scores(acoustic, textual, visual, params))


Sample = tuple[tuple, object]


def _dataset_tensors(dataset, params: ModelParams):
    out = []
    for inputs, target in dataset:
        seqs = _sequences(*inputs, params)
        y = target.to_array() if isinstance(target, TraitVector) else np.asarray(target, dtype=float)
        out.append((seqs, torch.from_numpy(np.array(y, dtype=float))))
    return out


def _mse(batch, p, hyper) -> torch.Tensor:
    losses = [((forward_t(seqs, p, hyper) - y) ** 2).mean() for seqs, y in batch]
    return torch.stack(losses).mean()


def train(dataset, hyper: HyperConfig = HyperConfig(), input_dims: dict[str, int] | None = None,
          init: ModelParams | None = None) -> ModelParams:
    """Full-batch Adam on the mean squared trait error.

    ``loss_curve[i]`` is the loss before update ``i``; the last entry is the
    loss after the final update, so the curve has ``epochs + 1`` points.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("empty training set")
    if init is None:
        dims = input_dims or {m: np.asarray(getattr(s, "features", s)).shape[1] for m, s in zip(MODALITIES, dataset[0][0])}
        init = init_params(dims, hyper)
    params = ModelParams(hyper, dict(init.input_dims), {k: v.copy() for k, v in init.tensors.items()})
    batch = _dataset_tensors(dataset, params)
    p = params.torch_params(requires_grad=True)
    opt = torch.optim.Adam(list(p.values()), lr=hyper.learning_rate)
    curve = []
    for epoch in range(hyper.epochs):
        opt.zero_grad()
        loss = _mse(batch, p, hyper)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NumericError(f"training diverged at epoch {epoch}: loss={value}, last finite={curve[-1:] or None}")
        curve.append(value)
        loss.backward()
        opt.step()
    with torch.no_grad():
        final = float(_mse(batch, p, hyper))
    if not math.isfinite(final):
        raise NumericError(f"training diverged after final update: loss={final}")
    curve.append(final)
    params.tensors = {k: v.detach().numpy().copy() for k, v in p.items()}
    params.loss_curve = curve
    return params


def mse_loss(params: ModelParams, dataset) -> float:
    batch = _dataset_tensors(list(dataset), params)
    with torch.no_grad():
        return float(_mse(batch, params.torch_params(), params.hyper))


@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    coordinates: tuple[tuple[str, int], ...]
    analytic: np.ndarray
    numeric: np.ndarray
    relative_errors: np.ndarray
    passed: bool


def grad_check(params: ModelParams, batch, tolerance: float = 1e-4, n_coords: int = 200,
               step: float = 1e-5, seed: int = 0, abs_floor: float = 1e-8) -> GradCheckResult:
    """Compare autograd gradients of the MSE with central differences.

    ``relative_error = |a - n| / max(|a|, |n|, abs_floor)`` over a seeded
    sample of ``n_coords`` parameter coordinates drawn across all tensors.
    """
    batch = list(batch)
    if not batch:
        raise ValidationError("empty batch")
    data = _dataset_tensors(batch, params)
    names = list(params.tensors)
    sizes = np.array([params.tensors[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    flat_idx = np.sort(rng.choice(total, size=min(n_coords, total), replace=False))
    coords = []
    for i in flat_idx:
        t = int(np.searchsorted(offsets, i, side="right") - 1)
        coords.append((names[t], int(i - offsets[t])))

    p = params.torch_params(requires_grad=True)
    loss = _mse(data, p, params.hyper)
    loss.backward()
    analytic = np.array([p[n].grad.reshape(-1)[j].item() for n, j in coords])

    numeric = np.empty(len(coords))
    with torch.no_grad():
        q = params.torch_params()
        for c, (n, j) in enumerate(coords):
            flat = q[n].view(-1)
            orig = flat[j].item()
            flat[j] = orig + step
            up = float(_mse(data, q, params.hyper))
            flat[j] = orig - step
            down = float(_mse(data, q, params.hyper))
            flat[j] = orig
            numeric[c] = (up - down) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_floor)
    rel = np.abs(analytic - numeric) / denom
    worst = float(rel.max()) if rel.size else 0.0
    return GradCheckResult(worst, tuple(coords), analytic, numeric, rel, worst < tolerance)
