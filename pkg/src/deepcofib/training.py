"""Two-stage joint training.

Stage 1 fits sparsifier + desparsifier as one noisy-to-clean patch model.
Stage 2 freezes the desparsifier and fits collaborator + denoiser network on
windowed match sets encoded by the trained sparsifier, with the loss taken
on the decoded reference patch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .dataset import PatchPairSet
from .image import patch_field, patch_grid
from .matching import WindowSpec, match_all
from .models import ModelBundle, collaborate, sparsify
from .nn import AdamState, DenseNetwork, adam_step, backward, forward, mse_loss

log = logging.getLogger(__name__)

EVAL_CHUNK = 4096


class TrainingDivergence(RuntimeError):
    def __init__(self, stage: int, epoch: int, value: float):
        super().__init__(f"stage {stage}: non-finite loss {value} at epoch {epoch}")
        self.stage = stage
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    epochs: int = 200
    learning_rate: float = 1e-3
    seed: int = 0
    sigma: float = 25.0
    shuffle: bool = True
    val_fraction: float = 0.05
    checkpoint_every: int = 0
    stage2_samples: Optional[int] = None  # None: every reference patch

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


PROFILES = {
    # 10 images of 100x100 -> 92,160 stage-1 pairs
    "desk": dict(images=10, image_size=100, config=TrainConfig(epochs=20, stage2_samples=30000)),
    "paper": dict(images=100, image_size=100, config=TrainConfig(epochs=200)),
}


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float


EpochHook = Callable[[EpochRecord, ModelBundle], None]


def split_indices(count: int, val_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(count)
    n_val = int(round(count * val_fraction))
    if count - n_val < 1:
        n_val = count - 1
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def apply_chunked(net: DenseNetwork, x: np.ndarray, chunk: int = EVAL_CHUNK) -> np.ndarray:
    """Forward ``x`` (dim, count) in fixed column blocks."""
    out = [forward(net, x[:, i : i + chunk])[0] for i in range(0, x.shape[1], chunk)]
    if not out:
        return np.empty((net.out_dim, 0))
    return np.concatenate(out, axis=1)


def _batches(indices: np.ndarray, config: TrainConfig, rng: np.random.Generator):
    order = rng.permutation(indices) if config.shuffle else indices
    for i in range(0, len(order), config.batch_size):
        yield order[i : i + config.batch_size]


def _check(stage: int, epoch: int, value: float) -> None:
    if not math.isfinite(value):
        raise TrainingDivergence(stage, epoch, value)


# -- stage 1 -----------------------------------------------------------------


def _stage1_eval(bundle: ModelBundle, ds: PatchPairSet, idx: np.ndarray) -> float:
    if len(idx) == 0:
        return math.nan
    total = 0.0
    for i in range(0, len(idx), EVAL_CHUNK):
        sel = idx[i : i + EVAL_CHUNK]
        codes = forward(bundle.sparsifier, ds.noisy[sel].T)[0]
        pred = forward(bundle.desparsifier, codes)[0]
        diff = pred - ds.clean[sel].T
        total += float(np.sum(diff * diff))
    return total / (len(idx) * ds.noisy.shape[1])


def train_stage1(
    dataset: PatchPairSet,
    config: TrainConfig,
    bundle: ModelBundle | None = None,
    on_epoch: EpochHook | None = None,
) -> tuple[ModelBundle, list[EpochRecord]]:
    """Minimise MSE(desparsify(sparsify(noisy)), clean) with Adam."""
    if bundle is None:
        bundle = ModelBundle.create(n=dataset.n, sigma=dataset.sigma, seed=config.seed)
    bundle.check_compatible()
    rng = np.random.default_rng([config.seed, 1])
    train_idx, val_idx = split_indices(len(dataset), config.val_fraction, rng)
    nets = (bundle.sparsifier, bundle.desparsifier)
    params = [p for net in nets for p in net.parameters()]
    state = AdamState.for_params(params, learning_rate=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        total, seen = 0.0, 0
        for batch in _batches(train_idx, config, rng):
            codes, c_sp = forward(bundle.sparsifier, dataset.noisy[batch].T)
            pred, c_de = forward(bundle.desparsifier, codes)
            loss, g = mse_loss(pred, dataset.clean[batch].T)
            _check(1, epoch, loss)
            g_de, g_codes = backward(bundle.desparsifier, c_de, g)
            g_sp, _ = backward(bundle.sparsifier, c_sp, g_codes)
            adam_step(params, g_sp + g_de, state)
            for net in nets:
                net.touch()
            total += loss * len(batch)
            seen += len(batch)
        rec = EpochRecord(epoch, total / seen, _stage1_eval(bundle, dataset, val_idx))
        _check(1, epoch, rec.train_mse)
        history.append(rec)
        log.info("stage 1 epoch %d train_mse %.6g val_mse %.6g", epoch, rec.train_mse, rec.val_mse)
        if on_epoch is not None:
            on_epoch(rec, bundle)
    bundle.stage = max(bundle.stage, 1)
    bundle.sigma = dataset.sigma
    return bundle, history


# -- stage 2 -----------------------------------------------------------------


@dataclass
class Stage2Sample:
    reps: np.ndarray  # (m, d), column 0 is the reference
    target: np.ndarray  # (n*n,) clean reference patch


@dataclass
class Stage2Samples:
    """Match sets stored as indices into a shared table of sparse codes."""

    codes: np.ndarray  # (m, total_patches)
    indices: np.ndarray  # (K, d) columns of ``codes``
    targets: np.ndarray  # (K, n*n)

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, k: int) -> Stage2Sample:
        return Stage2Sample(self.codes[:, self.indices[k]], self.targets[k])

    def reps(self, sel) -> np.ndarray:
        """Stacked ``(m, len(sel), d)`` reps for a batch."""
        return self.codes[:, self.indices[sel]]


def build_stage2_samples(
    noisy_images,
    clean_images,
    sparsifier: DenseNetwork,
    spec: WindowSpec,
    n: int = 5,
    max_samples: int | None = None,
    seed: int = 0,
    workers: int = 1,
) -> Stage2Samples:
    """Encode every stride-1 noisy patch, match each reference, keep the clean target."""
    codes, indices, targets = [], [], []
    offset = 0
    for noisy, clean in zip(noisy_images, clean_images):
        if noisy.shape != clean.shape:
            raise ValueError("noisy and clean images differ in shape")
        field = patch_field(noisy, n)
        flat = field.reshape(-1, n * n)
        codes.append(apply_chunked(sparsifier, flat.T))
        refs = patch_grid(noisy.shape[0], noisy.shape[1], n)
        idx, _ = match_all(field, refs, spec, workers=workers)
        indices.append(idx + offset)
        targets.append(patch_field(clean, n).reshape(-1, n * n))
        offset += len(flat)
    samples = Stage2Samples(
        np.concatenate(codes, axis=1), np.concatenate(indices), np.concatenate(targets)
    )
    if max_samples is not None and max_samples < len(samples):
        rng = np.random.default_rng([seed, 2])
        keep = np.sort(rng.choice(len(samples), size=max_samples, replace=False))
        samples = Stage2Samples(samples.codes, samples.indices[keep], samples.targets[keep])
    return samples


def _stage2_eval(bundle: ModelBundle, samples: Stage2Samples, idx: np.ndarray) -> float:
    if len(idx) == 0:
        return math.nan
    total = 0.0
    for i in range(0, len(idx), EVAL_CHUNK):
        sel = idx[i : i + EVAL_CHUNK]
        y = collaborate(bundle.collaborator, samples.reps(sel))
        pred = forward(bundle.desparsifier, forward(bundle.denoiser, y)[0])[0]
        diff = pred - samples.targets[sel].T
        total += float(np.sum(diff * diff))
    return total / (len(idx) * samples.targets.shape[1])


def train_stage2(
    samples: Stage2Samples,
    bundle: ModelBundle,
    config: TrainConfig,
    on_epoch: EpochHook | None = None,
) -> tuple[ModelBundle, list[EpochRecord]]:
    """Fit collaborator + denoiser through the frozen desparsifier."""
    bundle.check_compatible()
    rng = np.random.default_rng([config.seed, 3])
    train_idx, val_idx = split_indices(len(samples), config.val_fraction, rng)
    collab, den, desp = bundle.collaborator, bundle.denoiser, bundle.desparsifier
    params = collab.parameters() + den.parameters()
    state = AdamState.for_params(params, learning_rate=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        total, seen = 0.0, 0
        for batch in _batches(train_idx, config, rng):
            x = samples.reps(batch)
            y = collaborate(collab, x)
            h, c_den = forward(den, y)
            pred, c_desp = forward(desp, h)
            loss, g = mse_loss(pred, samples.targets[batch].T)
            _check(2, epoch, loss)
            _, g_h = backward(desp, c_desp, g)  # parameter grads discarded: frozen
            g_den, g_y = backward(den, c_den, g_h)
            g_c, _ = collab.backward(x, g_y)
            adam_step(params, [g_c] + g_den, state)
            den.touch()
            total += loss * len(batch)
            seen += len(batch)
        rec = EpochRecord(epoch, total / seen, _stage2_eval(bundle, samples, val_idx))
        _check(2, epoch, rec.train_mse)
        history.append(rec)
        log.info("stage 2 epoch %d train_mse %.6g val_mse %.6g", epoch, rec.train_mse, rec.val_mse)
        if on_epoch is not None:
            on_epoch(rec, bundle)
    bundle.stage = 2
    return bundle, history


def train_all(
    dataset: PatchPairSet,
    config: TrainConfig,
    spec: WindowSpec = WindowSpec(),
    stage2_config: TrainConfig | None = None,
    on_epoch: Callable[[int, EpochRecord, ModelBundle], None] | None = None,
    workers: int = 1,
) -> tuple[ModelBundle, dict[int, list[EpochRecord]]]:
    bundle = ModelBundle.create(n=dataset.n, S=spec.S, d=spec.d, sigma=dataset.sigma,
                                seed=config.seed)

    def hook(stage):
        return None if on_epoch is None else (lambda rec, b: on_epoch(stage, rec, b))

    bundle, h1 = train_stage1(dataset, config, bundle, hook(1))
    cfg2 = stage2_config or config
    samples = build_stage2_samples(
        dataset.noisy_images, dataset.clean_images, bundle.sparsifier, spec, n=dataset.n,
        max_samples=cfg2.stage2_samples, seed=cfg2.seed, workers=workers,
    )
    bundle, h2 = train_stage2(samples, bundle, cfg2, hook(2))
    return bundle, {1: h1, 2: h2}


def format_log_line(rec: EpochRecord) -> str:
    return f"epoch,{rec.epoch},train_mse,{rec.train_mse!r},val_mse,{rec.val_mse!r}"


def with_overrides(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
