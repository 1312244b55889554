"""Grayscale images, noise synthesis and overlapping patches.

Images are 2-D float64 arrays of shape ``(height, width)`` with nominal
intensities in [0, 1].  Files on disk use the 0-255 scale.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _backend


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


class CoverageError(ValueError):
    """Aggregation left a pixel with no covering patch."""

    def __init__(self, row: int, col: int):
        super().__init__(f"pixel ({row}, {col}) is not covered by any patch")
        self.pixel = (row, col)


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to a sibling temp file, then rename over ``path``."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def as_image(x) -> np.ndarray:
    img = np.asarray(x, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite intensities")
    return img


# -- PGM ---------------------------------------------------------------------


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_pgm(data: bytes) -> np.ndarray:
    if data[:2] != b"P5":
        raise FormatError(f"not a binary PGM: magic {data[:2]!r}")
    tokens, pos = _header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("malformed PGM header") from None
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is accepted")
    if width <= 0 or height <= 0:
        raise FormatError(f"bad PGM dimensions {width}x{height}")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after PGM maxval")
    payload = data[pos + 1 : pos + 1 + width * height]
    if len(payload) != width * height:
        raise FormatError(f"truncated PGM payload: {len(payload)} of {width * height} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return pixels.astype(np.float64) / 255.0


def encode_pgm(image) -> bytes:
    img = as_image(image)
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def save_pgm(image, path) -> None:
    atomic_write(path, encode_pgm(image))


# -- noise -------------------------------------------------------------------


def add_awgn_sigma(image, sigma_255: float, seed=None) -> np.ndarray:
    """Add white Gaussian noise with standard deviation ``sigma_255 / 255``.

    The result is not clamped.
    """
    img = as_image(image)
    if not sigma_255 >= 0:
        raise ValueError(f"sigma must be non-negative, got {sigma_255}")
    if sigma_255 == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return img + rng.normal(0.0, sigma_255 / 255.0, size=img.shape)


def snr_sigma(image, snr_db: float) -> float:
    """Noise standard deviation (0-1 scale) giving ``snr_db`` for this image."""
    img = as_image(image)
    power = float(np.mean(img * img))
    if power == 0:
        raise ValueError("SNR is undefined for an all-zero image")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return math.sqrt(power / 10.0 ** (snr_db / 10.0))


def add_awgn_snr(image, snr_db: float, seed=None) -> np.ndarray:
    return add_awgn_sigma(image, 255.0 * snr_sigma(image, snr_db), seed)


# -- patches -----------------------------------------------------------------


@dataclass
class Patches:
    """Vectorized ``n x n`` patches and their top-left coordinates.

    ``values[k]`` is the row-major flattening of the patch at ``coords[k]``.
    """

    coords: np.ndarray  # (K, 2) int
    values: np.ndarray  # (K, n*n)
    n: int

    def __len__(self) -> int:
        return len(self.coords)


def patch_grid(height: int, width: int, n: int, stride: int = 1) -> np.ndarray:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if n < 1 or n > min(height, width):
        raise ValueError(f"patch size {n} does not fit a {height}x{width} image")
    rows = np.arange(0, height - n + 1, stride)
    cols = np.arange(0, width - n + 1, stride)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.intp)


def patch_field(image, n: int) -> np.ndarray:
    """All stride-1 patches as a contiguous ``(M-n+1, N-n+1, n*n)`` array."""
    img = as_image(image)
    if n > min(img.shape):
        raise ValueError(f"patch size {n} does not fit a {img.shape[0]}x{img.shape[1]} image")
    view = sliding_window_view(img, (n, n))
    return np.ascontiguousarray(view.reshape(view.shape[0], view.shape[1], n * n))


def extract_patches(image, n: int, stride: int = 1) -> Patches:
    img = as_image(image)
    coords = patch_grid(img.shape[0], img.shape[1], n, stride)
    field = patch_field(img, n)
    return Patches(coords, field[coords[:, 0], coords[:, 1]], n)


def aggregate(patches: Patches, width: int, height: int, backend=None) -> np.ndarray:
    """Overlap-average patches back into a ``(height, width)`` image."""
    n = patches.n
    coords = np.asarray(patches.coords, dtype=np.intp).reshape(-1, 2)
    values = np.asarray(patches.values, dtype=np.float64).reshape(len(coords), n * n)
    if len(coords) and (
        coords.min() < 0
        or coords[:, 0].max() > height - n
        or coords[:, 1].max() > width - n
    ):
        raise ValueError(f"patch coordinate out of range for a {height}x{width} image")
    sums, counts = _backend.accumulate(values, coords, n, height, width, backend=backend)
    holes = np.argwhere(counts == 0)
    if len(holes):
        raise CoverageError(int(holes[0, 0]), int(holes[0, 1]))
    return sums / counts
