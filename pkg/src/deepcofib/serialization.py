"""Binary containers: DCFB1 model bundles and DCFD1 patch datasets.

All integers are little-endian, reals are little-endian IEEE-754 float64.

Model bundle::

    b"DCFB"  u8 version=1
    four sub-models, in order sparsifier, collaborator, denoiser, desparsifier:
        u32 layer_count
        per layer: u32 in_dim, u32 out_dim, u32 activation,
                   f64[out_dim*in_dim] weights (row-major), f64[out_dim] bias
        (the collaborator is one layer with in_dim=d, out_dim=m, activation 0
         and no bias block)
    trailer: u32 n, u32 m, u32 d, u32 S, u32 stage, f64 sigma, u64 seed

Dataset::

    b"DCFD"  u8 version=1
    u32 n, u64 count, f64 sigma, u64 seed, u8 per_patch_noise, u32 image_count
    per image: u32 height, u32 width
    u32[count] image ids
    f64[count, n*n] noisy patches, f64[count, n*n] clean patches
    per image: f64[h*w] clean pixels, f64[h*w] noisy pixels
"""

from __future__ import annotations

import struct

import numpy as np

from .dataset import PatchPairSet
from .image import FormatError, atomic_write
from .models import Collaborator, ModelBundle
from .nn import IDENTITY, RELU, DenseLayer, DenseNetwork, ShapeError

MODEL_MAGIC = b"DCFB"
DATA_MAGIC = b"DCFD"
VERSION = 1
ACT_CODES = {IDENTITY: 0, RELU: 1}
ACT_NAMES = {v: k for k, v in ACT_CODES.items()}
SUBMODELS = ("sparsifier", "collaborator", "denoiser", "desparsifier")
_TRAILER = struct.Struct("<5IdQ")


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = memoryview(data)
        self.pos = 0
        self.what = what

    def take(self, size: int, context: str) -> memoryview:
        if self.pos + size > len(self.data):
            raise FormatError(
                f"truncated {self.what}: {context} needs {size} bytes at offset {self.pos}, "
                f"{len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str, context: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, context))

    def reals(self, count: int, context: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, context), dtype="<f8").astype(np.float64)

    def header(self, magic: bytes) -> None:
        got = bytes(self.take(4, "magic"))
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}")
        (version,) = self.unpack("<B", "version")
        if version != VERSION:
            raise FormatError(f"unsupported {self.what} version {version}, expected {VERSION}")

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.pos} trailing bytes after {self.what} payload"
            )


def _le(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _pack_network(net: DenseNetwork) -> bytes:
    out = [struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        out.append(struct.pack("<3I", layer.in_dim, layer.out_dim, ACT_CODES[layer.activation]))
        out.append(_le(layer.weights))
        out.append(_le(layer.bias))
    return b"".join(out)


def _read_network(rd: _Reader, name: str) -> DenseNetwork:
    (count,) = rd.unpack("<I", f"{name} layer count")
    layers = []
    for k in range(count):
        in_dim, out_dim, code = rd.unpack("<3I", f"{name} layer {k} header")
        if code not in ACT_NAMES:
            raise FormatError(f"{name} layer {k}: unknown activation code {code}")
        w = rd.reals(in_dim * out_dim, f"{name} layer {k} weights").reshape(out_dim, in_dim)
        b = rd.reals(out_dim, f"{name} layer {k} bias")
        layers.append(DenseLayer(w, b, ACT_NAMES[code]))
    try:
        return DenseNetwork(layers)
    except ShapeError as exc:
        raise FormatError(f"{name}: {exc}") from None


def encode_model(bundle: ModelBundle) -> bytes:
    c = bundle.collaborator
    parts = [
        MODEL_MAGIC,
        struct.pack("<B", VERSION),
        _pack_network(bundle.sparsifier),
        struct.pack("<4I", 1, c.d, c.m, ACT_CODES[IDENTITY]),
        _le(c.weights),
        _pack_network(bundle.denoiser),
        _pack_network(bundle.desparsifier),
        _TRAILER.pack(
            bundle.n, bundle.m, bundle.d, bundle.S, bundle.stage, bundle.sigma, bundle.seed
        ),
    ]
    return b"".join(parts)


def decode_model(data: bytes) -> ModelBundle:
    rd = _Reader(data, "model file")
    rd.header(MODEL_MAGIC)
    sparsifier = _read_network(rd, "sparsifier")
    count, d, m, code = rd.unpack("<4I", "collaborator header")
    if count != 1 or code != ACT_CODES[IDENTITY]:
        raise FormatError(f"collaborator: expected one layer with activation 0, got {count}/{code}")
    collab = Collaborator(rd.reals(m * d, "collaborator weights").reshape(m, d))
    denoiser = _read_network(rd, "denoiser")
    desparsifier = _read_network(rd, "desparsifier")
    n, m2, d2, S, stage, sigma, seed = _TRAILER.unpack(rd.take(_TRAILER.size, "metadata"))
    rd.finish()
    return ModelBundle(sparsifier, collab, denoiser, desparsifier, n=n, m=m2, d=d2, S=S,
                       sigma=sigma, seed=seed, stage=stage)


def save_model(bundle: ModelBundle, path) -> None:
    atomic_write(path, encode_model(bundle))


def load_model(path) -> ModelBundle:
    with open(path, "rb") as fh:
        return decode_model(fh.read())


def encode_dataset(ds: PatchPairSet) -> bytes:
    n2 = ds.n * ds.n
    parts = [
        DATA_MAGIC,
        struct.pack("<B", VERSION),
        struct.pack("<IQdQBI", ds.n, len(ds), ds.sigma, ds.seed, int(ds.per_patch_noise),
                    len(ds.clean_images)),
    ]
    parts += [struct.pack("<2I", *img.shape) for img in ds.clean_images]
    parts.append(np.ascontiguousarray(ds.image_ids, dtype="<u4").tobytes())
    parts.append(_le(ds.noisy.reshape(len(ds), n2)))
    parts.append(_le(ds.clean.reshape(len(ds), n2)))
    for clean, noisy in zip(ds.clean_images, ds.noisy_images):
        parts += [_le(clean), _le(noisy)]
    return b"".join(parts)


def decode_dataset(data: bytes) -> PatchPairSet:
    rd = _Reader(data, "dataset file")
    rd.header(DATA_MAGIC)
    n, count, sigma, seed, per_patch, n_images = rd.unpack("<IQdQBI", "dataset header")
    shapes = [rd.unpack("<2I", f"image {i} shape") for i in range(n_images)]
    ids = np.frombuffer(rd.take(4 * count, "image ids"), dtype="<u4").astype(np.uint32)
    n2 = n * n
    noisy = rd.reals(count * n2, "noisy patches").reshape(count, n2)
    clean = rd.reals(count * n2, "clean patches").reshape(count, n2)
    cleans, noisys = [], []
    for i, (h, w) in enumerate(shapes):
        cleans.append(rd.reals(h * w, f"image {i} clean pixels").reshape(h, w))
        noisys.append(rd.reals(h * w, f"image {i} noisy pixels").reshape(h, w))
    rd.finish()
    return PatchPairSet(noisy, clean, ids, n, sigma, seed, cleans, noisys, bool(per_patch))


def save_dataset(ds: PatchPairSet, path) -> None:
    atomic_write(path, encode_dataset(ds))


def load_dataset(path) -> PatchPairSet:
    with open(path, "rb") as fh:
        return decode_dataset(fh.read())
