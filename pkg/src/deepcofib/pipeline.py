"""Whole-image denoising and evaluation."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .image import Patches, aggregate, as_image, patch_field
from .matching import CHUNK, WindowSpec, match_all
from .models import ModelBundle, collaborate
from .nn import forward


@dataclass
class DenoiseRequest:
    noisy: np.ndarray
    bundle: ModelBundle
    spec: WindowSpec | None = None  # defaults to the bundle's S and d
    stride: int = 1

    def window(self) -> WindowSpec:
        return self.spec or WindowSpec(S=self.bundle.S, d=self.bundle.d)


@dataclass
class EvaluationReport:
    psnr_noisy: float
    psnr_denoised: float
    ssim_noisy: float
    ssim_denoised: float
    timing: dict[str, float] = field(default_factory=dict)

    def line(self) -> str:
        return (
            f"psnr_noisy={self.psnr_noisy:.4f} psnr_denoised={self.psnr_denoised:.4f} "
            f"ssim_noisy={self.ssim_noisy:.6f} ssim_denoised={self.ssim_denoised:.6f}"
        )


def reference_coords(height: int, width: int, n: int, stride: int = 1) -> np.ndarray:
    """Strided top-left grid, with the last row/column added so every pixel is covered."""
    if stride < 1:
        raise ValueError("stride must be >= 1")

    def axis(size):
        pos = list(range(0, size - n + 1, stride))
        if pos[-1] != size - n:
            pos.append(size - n)
        return np.array(pos)

    rr, cc = np.meshgrid(axis(height), axis(width), indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.intp)


def _map_blocks(fn, count: int, workers: int):
    blocks = [slice(i, min(i + CHUNK, count)) for i in range(0, count, CHUNK)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, blocks))
    return [fn(b) for b in blocks]


def denoise_image(
    request: DenoiseRequest, workers: int = 1, timing: dict | None = None
) -> np.ndarray:
    """Match, encode, collaborate, denoise, decode and overlap-average.

    Work is split into fixed-size blocks, so the result is bit-identical for
    any ``workers`` value.  The output is clamped to [0, 1].
    """
    bundle = request.bundle
    bundle.check_compatible()
    spec = request.window()
    if spec.d != bundle.d:
        raise ValueError(f"window d={spec.d} does not match the bundle's d={bundle.d}")
    noisy = as_image(request.noisy)
    n = bundle.n
    if min(noisy.shape) < n:
        raise ValueError(f"image {noisy.shape} smaller than the {n}x{n} patch size")
    height, width = noisy.shape
    timing = {} if timing is None else timing

    t0 = time.perf_counter()
    field_ = patch_field(noisy, n)
    flat = field_.reshape(-1, n * n)
    refs = reference_coords(height, width, n, request.stride)
    idx, _ = match_all(field_, refs, spec, workers=workers)
    t1 = time.perf_counter()

    def encode(sl):
        return forward(bundle.sparsifier, flat[sl].T)[0]

    codes = np.concatenate(_map_blocks(encode, len(flat), workers), axis=1)
    t2 = time.perf_counter()

    def denoise(sl):
        y = collaborate(bundle.collaborator, codes[:, idx[sl]])
        return forward(bundle.desparsifier, forward(bundle.denoiser, y)[0])[0].T

    patches = np.concatenate(_map_blocks(denoise, len(refs), workers))
    t3 = time.perf_counter()
    out = aggregate(Patches(refs, patches, n), width, height)
    timing.update(match=t1 - t0, sparsify=t2 - t1, denoise=t3 - t2,
                  aggregate=time.perf_counter() - t3)
    return np.clip(out, 0.0, 1.0)


def evaluate(clean, noisy, denoised, timing: dict | None = None) -> EvaluationReport:
    clean, noisy, denoised = as_image(clean), as_image(noisy), as_image(denoised)
    if not (clean.shape == noisy.shape == denoised.shape):
        raise ValueError(
            f"image shapes differ: {clean.shape}, {noisy.shape}, {denoised.shape}"
        )
    return EvaluationReport(
        psnr_noisy=metrics.psnr(clean, noisy),
        psnr_denoised=metrics.psnr(clean, denoised),
        ssim_noisy=metrics.ssim(clean, noisy),
        ssim_denoised=metrics.ssim(clean, denoised),
        timing=dict(timing or {}),
    )


@dataclass
class BatchResult:
    image: np.ndarray | None
    report: EvaluationReport | None
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def denoise_batch(requests, cleans=None, workers: int = 1) -> list[BatchResult]:
    """Denoise each request independently; failures are recorded, not raised.

    With ``cleans`` (one clean image per request) each result carries an
    evaluation report.
    """
    results = []
    cleans = [None] * len(requests) if cleans is None else list(cleans)
    if len(cleans) != len(requests):
        raise ValueError("need one clean image per request")
    for req, clean in zip(requests, cleans):
        try:
            timing: dict = {}
            out = denoise_image(req, workers=workers, timing=timing)
            report = None if clean is None else evaluate(clean, req.noisy, out, timing)
            results.append(BatchResult(out, report))
        except Exception as exc:  # noqa: BLE001 - collected per item
            results.append(BatchResult(None, None, exc))
    return results


def psnr_gain(report: EvaluationReport) -> float:
    if math.isinf(report.psnr_denoised):
        return math.inf
    return report.psnr_denoised - report.psnr_noisy
