"""Windowed block matching on noisy spatial-domain patches.

For each reference patch, the ``d - 1`` candidates with the smallest
Euclidean distance inside a clipped ``S x S`` window are returned, the
reference itself first.  Ties are broken by row-major candidate coordinate.
When the window holds fewer than ``d - 1`` other candidates the reference is
repeated, directly after itself, to keep exactly ``d`` entries.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend

# Work is split into fixed-size blocks so results never depend on worker count.
CHUNK = 4096


@dataclass(frozen=True)
class WindowSpec:
    S: int = 50
    d: int = 5

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.S < 1:
            raise ValueError("S must be >= 1")

    def half_width(self, n: int) -> int:
        if self.S < n:
            raise ValueError(f"window S={self.S} smaller than patch size n={n}")
        return (self.S - n) // 2


@dataclass
class MatchSet:
    coords: np.ndarray  # (d, 2): reference first, then similars by distance
    distances: np.ndarray  # (d,)


def _field_n(field: np.ndarray) -> int:
    n = int(round(np.sqrt(field.shape[2])))
    if n * n != field.shape[2]:
        raise ValueError("patch field depth is not a square")
    return n


def candidate_coords(ref, spec: WindowSpec, height: int, width: int, n: int) -> np.ndarray:
    """Valid top-left coordinates inside the clipped window around ``ref``."""
    half = spec.half_width(n)
    r, c = ref
    prows, pcols = height - n + 1, width - n + 1
    if not (0 <= r < prows and 0 <= c < pcols):
        raise ValueError(f"reference {ref} is not a valid patch coordinate")
    rows = np.arange(max(r - half, 0), min(r + half + 1, prows))
    cols = np.arange(max(c - half, 0), min(c + half + 1, pcols))
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def match_all(
    field: np.ndarray,
    refs: np.ndarray,
    spec: WindowSpec,
    workers: int = 1,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Match many references at once.

    ``field`` is the stride-1 patch field from :func:`image.patch_field`.
    Returns ``(indices, distances)``, each ``(len(refs), d)``; indices are flat
    positions ``row * field.shape[1] + col`` into the field.
    """
    field = np.ascontiguousarray(field, dtype=np.float64)
    refs = np.asarray(refs, dtype=np.intp).reshape(-1, 2)
    half = spec.half_width(_field_n(field))
    if len(refs) and (
        refs.min() < 0 or refs[:, 0].max() >= field.shape[0] or refs[:, 1].max() >= field.shape[1]
    ):
        raise ValueError("reference coordinate outside the patch field")
    blocks = [refs[i : i + CHUNK] for i in range(0, len(refs), CHUNK)]

    def run(block):
        return _backend.match_patches(field, block, half, spec.d, backend=backend)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    if not parts:
        return np.empty((0, spec.d), np.intp), np.empty((0, spec.d))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def find_similar(field: np.ndarray, ref, spec: WindowSpec, backend: str | None = None) -> MatchSet:
    idx, dist = match_all(field, np.array([ref]), spec, backend=backend)
    rows, cols = np.divmod(idx[0], field.shape[1])
    return MatchSet(np.stack([rows, cols], axis=1), dist[0])
