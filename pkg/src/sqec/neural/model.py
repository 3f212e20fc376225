"""Fully convolutional 3D decoder network.

Parameters live in :class:`ModelParams` as plain numpy arrays; computation
is delegated to torch, whose autograd supplies the gradients.  Every layer
is a 3x3x3 zero-padded convolution, hidden layers use ReLU and the output
layer a sigmoid, so the network is translation equivariant away from the
volume boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

VARIANTS = ("classifier", "simplified", "diffusion")
OUT_CHANNELS = 12
HIDDEN = (128, 128, 128)
KERNEL = 3
MAGIC = b"SQNN"
FORMAT_VERSION = 1


def input_channels(variant: str) -> int:
    """4 syndrome + 8 presence channels, plus 12 tentative + 4 fuzzy residual for diffusion."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return 28 if variant == "diffusion" else 12


@dataclass
class ModelParams:
    """Convolution weights ``[out, in, k, k, k]`` and biases ``[out]`` per layer."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    variant: str = "classifier"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 5 or b.shape != (w.shape[0],):
                raise ValueError(f"bad layer shapes {w.shape} / {b.shape}")
        for a, b in zip(self.weights, self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError("layer channel counts do not chain")

    @property
    def in_channels(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights[-1].shape[0]

    def layer_shapes(self) -> List[Tuple[int, ...]]:
        return [w.shape for w in self.weights]

    def arrays(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.variant, dict(self.meta)
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
            self.variant,
            dict(self.meta),
        )


def init_params(
    variant: str = "classifier",
    seed: int = 0,
    hidden: Sequence[int] = HIDDEN,
    in_channels: int | None = None,
    out_channels: int = OUT_CHANNELS,
    kernel: int = KERNEL,
    dtype=np.float32,
) -> ModelParams:
    """Fan-in scaled uniform initialisation (the torch default for conv layers)."""
    if in_channels is None:
        in_channels = input_channels(variant)
    rng = np.random.default_rng(seed)
    sizes = [in_channels, *hidden, out_channels]
    weights, biases = [], []
    for cin, cout in zip(sizes, sizes[1:]):
        bound = 1.0 / np.sqrt(cin * kernel**3)
        weights.append(rng.uniform(-bound, bound, (cout, cin, kernel, kernel, kernel)).astype(dtype))
        biases.append(rng.uniform(-bound, bound, cout).astype(dtype))
    return ModelParams(weights, biases, variant)


def zero_params(like: ModelParams) -> ModelParams:
    return ModelParams(
        [np.zeros_like(w) for w in like.weights], [np.zeros_like(b) for b in like.biases], like.variant
    )


def torch_logits(tensors: Sequence[torch.Tensor], x: torch.Tensor) -> torch.Tensor:
    """Pre-sigmoid network output for torch parameters ``[w0, b0, w1, b1, ...]``."""
    n = len(tensors) // 2
    h = x
    for i in range(n):
        w, b = tensors[2 * i], tensors[2 * i + 1]
        h = F.conv3d(h, w, b, padding=w.shape[-1] // 2)
        if i < n - 1:
            h = F.relu(h)
    return h


def to_torch(params: ModelParams, requires_grad: bool = False) -> List[torch.Tensor]:
    return [torch.tensor(a, requires_grad=requires_grad) for a in params.arrays()]


def _check_input(params: ModelParams, x: np.ndarray) -> None:
    if x.ndim != 5:
        raise ValueError(f"input must be (batch, channels, depth, height, width), got {x.shape}")
    if x.shape[1] != params.in_channels:
        raise ValueError(f"model expects {params.in_channels} input channels, got {x.shape[1]}")


def forward(params: ModelParams, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Sigmoid outputs ``(batch, 12, depth, height, width)``."""
    x = np.asarray(x)
    _check_input(params, x)
    dtype = params.weights[0].dtype
    tensors = to_torch(params)
    out = np.empty((x.shape[0], params.out_channels, *x.shape[2:]), dtype=dtype)
    with torch.no_grad():
        for lo in range(0, x.shape[0], batch_size):
            chunk = torch.from_numpy(np.ascontiguousarray(x[lo : lo + batch_size], dtype=dtype))
            out[lo : lo + batch_size] = torch.sigmoid(torch_logits(tensors, chunk)).numpy()
    return out


def masked_bce(logits: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy over elements where ``mask`` is set."""
    per = F.binary_cross_entropy_with_logits(logits, target, reduction="none")
    mask = mask.expand_as(per)
    return (per * mask).sum() / mask.sum().clamp_min(1)


def loss_and_grad(
    params: ModelParams, x: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None
) -> Tuple[float, ModelParams]:
    """Masked mean binary cross-entropy and its gradient for every parameter."""
    _check_input(params, x)
    target = np.asarray(target)
    if target.shape != (x.shape[0], params.out_channels, *x.shape[2:]):
        raise ValueError(f"target shape {target.shape} does not match the output")
    if mask is None:
        mask = np.ones_like(target)
    dtype = params.weights[0].dtype
    tensors = to_torch(params, requires_grad=True)
    logits = torch_logits(tensors, torch.from_numpy(np.ascontiguousarray(x, dtype=dtype)))
    loss = masked_bce(
        logits,
        torch.from_numpy(np.ascontiguousarray(target, dtype=dtype)),
        torch.from_numpy(np.ascontiguousarray(mask, dtype=dtype)),
    )
    if not torch.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    loss.backward()
    grads = [t.grad.numpy().copy() for t in tensors]
    return float(loss.detach()), ModelParams(grads[0::2], grads[1::2], params.variant)


# ----------------------------------------------------------------------------
# Checkpoints: magic, version, variant tag, layer shapes, then float32 data.


def save_checkpoint(params: ModelParams, path) -> None:
    tag = params.variant.encode()
    parts = [MAGIC, struct.pack("<HB", FORMAT_VERSION, len(tag)), tag]
    parts.append(struct.pack("<H", len(params.weights)))
    for w in params.weights:
        parts.append(struct.pack("<5I", *w.shape))
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, tag_len = struct.unpack_from("<HB", blob, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 7
    variant = blob[pos : pos + tag_len].decode()
    pos += tag_len
    (n_layers,) = struct.unpack_from("<H", blob, pos)
    pos += 2
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<5I", blob, pos))
        pos += 20
    weights, biases = [], []
    for shape in shapes:
        n = int(np.prod(shape))
        weights.append(np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32))
        pos += 4 * n
        biases.append(np.frombuffer(blob, dtype="<f4", count=shape[0], offset=pos).astype(np.float32))
        pos += 4 * shape[0]
    if pos != len(blob):
        raise ValueError(f"{path}: trailing or missing data")
    return ModelParams(weights, biases, variant)
