"""Training data generation and the supervised training loop."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np
import torch

from .. import rng
from ..lattice import CodeLayout, build_layout
from ..noise import BASES, NoiseConfig
from ..propagation import SyndromeVolume, simulate
from ..simplifier import greedy_reduce, simplifier_generators
from .features import model_input, target_mask, volume_channels
from .fuzzy import fuzzy_residual
from .model import (
    ModelParams,
    init_params,
    load_checkpoint,
    masked_bce,
    save_checkpoint,
    to_torch,
    torch_logits,
)

log = logging.getLogger(__name__)

DEFAULT_P_VALUES = (0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int):
        super().__init__(f"training diverged at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and training-data recipe.

    ``p_mix`` of ``None`` draws the diffusion mixing level uniformly per
    instance; a number fixes it.
    """

    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 1
    optimiser: str = "adam"
    seed: int = 0
    p_values: Tuple[float, ...] = DEFAULT_P_VALUES
    distance: int = 7
    cycles: int | None = None  # defaults to the distance
    instances: int = 50_000
    simplify: bool = False
    diffusion: bool = False
    p_mix: float | None = None
    hidden: Tuple[int, ...] = (128, 128, 128)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0 or self.instances < 1:
            raise ValueError("learning rate, batch size and instance count must be positive")
        if self.optimiser not in ("adam", "sgd"):
            raise ValueError(f"unknown optimiser {self.optimiser!r}")
        if self.p_mix is not None and not 0.0 <= self.p_mix <= 1.0:
            raise ValueError("p_mix must lie in [0, 1]")
        if self.simplify and self.diffusion:
            raise ValueError("the diffusion variant is trained on unsimplified data")
        rng.check_seed(self.seed)

    @property
    def variant(self) -> str:
        if self.diffusion:
            return "diffusion"
        return "simplified" if self.simplify else "classifier"

    @property
    def n_cycles(self) -> int:
        return self.cycles or self.distance

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrainingSet:
    layout: CodeLayout
    cycles: int
    events: np.ndarray  # [n, cycles + 1, rows, cols, 4]
    targets: np.ndarray  # [n, cycles, rows, cols, 12]
    bases: np.ndarray  # [n] of "X" / "Z"
    p_values: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return len(self.events)


def _sub_seed(seed: int, index: int) -> int:
    state = np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(2, np.uint64)
    return int(state[0])


def generate_dataset(cfg: TrainConfig, instances: int | None = None, seed: int | None = None) -> TrainingSet:
    """Sample training instances over a uniform mixture of p' values and both bases."""
    n = cfg.instances if instances is None else instances
    seed = cfg.seed if seed is None else seed
    layout = build_layout(cfg.distance)
    cycles = cfg.n_cycles
    combos = [(p, b) for p in cfg.p_values for b in BASES]
    counts = np.full(len(combos), n // len(combos))
    counts[: n % len(combos)] += 1
    gens = simplifier_generators(layout, cycles) if cfg.simplify else None
    events, targets, bases, ps = [], [], [], []
    for i, ((p, basis), k) in enumerate(zip(combos, counts)):
        if k == 0:
            continue
        vol, syn = simulate(layout, NoiseConfig(p, cycles, basis, _sub_seed(seed, i)), int(k))
        if gens is not None:
            vol = greedy_reduce(vol, gens)
        events.append(syn.events)
        targets.append(vol.channels())
        bases += [basis] * int(k)
        ps += [p] * int(k)
    order = rng.generator(seed, rng.STREAM_TRAIN).permutation(n)
    return TrainingSet(
        layout,
        cycles,
        np.concatenate(events)[order],
        np.concatenate(targets)[order],
        np.array(bases)[order],
        np.array(ps)[order],
    )


def mix_targets(targets: np.ndarray, layout: CodeLayout, generator, p_mix=None) -> np.ndarray:
    """Replace each target bit by a uniform value with probability ``p_mix``."""
    n = targets.shape[0]
    level = generator.random(n) if p_mix is None else np.full(n, float(p_mix))
    level = level.reshape(n, *([1] * (targets.ndim - 1)))
    replace = generator.random(targets.shape) < level
    noise = generator.random(targets.shape)
    mixed = np.where(replace, noise, targets.astype(float))
    return mixed * layout.presence[..., [0, 1, 2, 3, 0, 1, 2, 3, 4, 5, 6, 7]]


def batch_inputs(data: TrainingSet, idx: np.ndarray, cfg: TrainConfig, generator) -> np.ndarray:
    """Network inputs for instances ``idx`` (with tentative channels for diffusion)."""
    events = data.events[idx]
    if not cfg.diffusion:
        return model_input(SyndromeVolume(events, data.layout, "Z"))
    tentative = mix_targets(data.targets[idx], data.layout, generator, cfg.p_mix)
    fuzzy = np.zeros(events.shape, dtype=float)
    bases = data.bases[idx]
    for b in BASES:
        sel = bases == b
        if sel.any():
            fuzzy[sel] = fuzzy_residual(SyndromeVolume(events[sel], data.layout, b), tentative[sel])
    return model_input(SyndromeVolume(events, data.layout, "Z"), tentative, fuzzy)


def train(
    data: TrainingSet,
    cfg: TrainConfig,
    params: ModelParams | None = None,
    progress: bool = False,
    on_epoch=None,
) -> ModelParams:
    """Adam (or SGD) on masked binary cross-entropy; returns new parameters.

    The per-epoch mean loss is stored in ``params.meta["history"]``.
    ``on_epoch(epoch, params)`` receives a snapshot after every epoch.
    """
    if params is None:
        params = init_params(cfg.variant, seed=cfg.seed, hidden=cfg.hidden)
    params = params.astype(np.float32)
    if cfg.epochs == 0:
        out = params.copy()
        out.meta["history"] = []
        return out
    tensors = to_torch(params, requires_grad=True)
    if cfg.optimiser == "adam":
        opt = torch.optim.Adam(tensors, lr=cfg.learning_rate, betas=(0.9, 0.999))
    else:
        opt = torch.optim.SGD(tensors, lr=cfg.learning_rate)
    mask = torch.from_numpy(target_mask(data.layout, data.cycles))
    shuffle = rng.generator(cfg.seed, rng.STREAM_TRAIN)
    mixing = rng.generator(cfg.seed, rng.STREAM_MIX)
    history: List[float] = []
    n = len(data)
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = shuffle.permutation(n)
        total, batches = 0.0, 0
        for step, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = np.sort(order[lo : lo + cfg.batch_size])
            x = torch.from_numpy(batch_inputs(data, idx, cfg, mixing).astype(np.float32))
            y = torch.from_numpy(volume_channels(data.targets[idx]))
            opt.zero_grad()
            loss = masked_bce(torch_logits(tensors, x), y, mask)
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, step)
            loss.backward()
            opt.step()
            total += loss.item()
            batches += 1
            if progress and step % 200 == 0:
                log.info("epoch %d step %d loss %.5f (%.0fs)", epoch, step, loss.item(), time.perf_counter() - start)
        history.append(total / batches)
        log.info("epoch %d mean loss %.5f", epoch, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, _snapshot(tensors, cfg.variant, history))
    return _snapshot(tensors, cfg.variant, history)


def _snapshot(tensors, variant: str, history: List[float]) -> ModelParams:
    arrays = [t.detach().numpy().copy() for t in tensors]
    out = ModelParams(arrays[0::2], arrays[1::2], variant)
    out.meta["history"] = list(history)
    return out


def load_or_train(cfg: TrainConfig, cache_dir, progress: bool = False) -> ModelParams:
    """Train once per configuration and reuse the checkpoint afterwards."""
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    stem = cache / f"{cfg.variant}-{cfg.digest()}"
    ckpt, info = stem.with_suffix(".sqnn"), stem.with_suffix(".json")
    if ckpt.exists() and info.exists():
        params = load_checkpoint(ckpt)
        params.meta.update(json.loads(info.read_text()))
        return params
    data = generate_dataset(cfg)
    params = train(data, cfg, progress=progress)
    save_checkpoint(params, ckpt)
    info.write_text(json.dumps({"config": asdict(cfg), "history": params.meta["history"]}, indent=2))
    params.meta["config"] = asdict(cfg)
    return params
