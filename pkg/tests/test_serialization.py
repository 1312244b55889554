import struct

import numpy as np
import pytest

from deepcofib.dataset import build_dataset
from deepcofib.image import FormatError
from deepcofib.models import ModelBundle
from deepcofib.serialization import (
    decode_dataset,
    decode_model,
    encode_dataset,
    encode_model,
    load_model,
    save_model,
)


def _same(a: ModelBundle, b: ModelBundle):
    for name, sub in a.submodels().items():
        other = b.submodels()[name]
        pa = sub.parameters()
        pb = other.parameters()
        assert len(pa) == len(pb)
        for x, y in zip(pa, pb):
            assert x.shape == y.shape and x.tobytes() == y.tobytes()
    for field in ("n", "m", "d", "S", "sigma", "seed", "stage"):
        assert getattr(a, field) == getattr(b, field)


def test_round_trip(tmp_path):
    b = ModelBundle.create(seed=11, sigma=40.0)
    b.collaborator.weights[:] = np.random.default_rng(0).normal(size=(100, 5))
    b.stage = 2
    save_model(b, tmp_path / "m.dcfb")
    _same(b, load_model(tmp_path / "m.dcfb"))
    assert encode_model(load_model(tmp_path / "m.dcfb")) == encode_model(b)


def test_layout_prefix():
    b = ModelBundle.create(n=2, m=3, d=2)
    data = encode_model(b)
    assert data[:5] == b"DCFB\x01"
    assert struct.unpack_from("<4I", data, 5) == (3, 4, 3, 1)
    w0 = b.sparsifier.layers[0].weights
    np.testing.assert_array_equal(np.frombuffer(data, "<f8", count=12, offset=21), w0.ravel())


def test_bad_magic():
    data = bytearray(encode_model(ModelBundle.create()))
    data[0:4] = b"XXXX"
    with pytest.raises(FormatError, match="magic"):
        decode_model(bytes(data))


def test_bad_version():
    data = bytearray(encode_model(ModelBundle.create()))
    data[4] = 2
    with pytest.raises(FormatError, match="version"):
        decode_model(bytes(data))


def test_truncated():
    data = encode_model(ModelBundle.create())
    with pytest.raises(FormatError, match="truncated"):
        decode_model(data[:-3])


def test_trailing_bytes():
    with pytest.raises(FormatError, match="trailing"):
        decode_model(encode_model(ModelBundle.create()) + b"\0")


def test_header_inconsistent_with_payload():
    data = bytearray(encode_model(ModelBundle.create()))
    # first sparsifier layer claims out_dim 101 instead of 100
    struct.pack_into("<I", data, 13, 101)
    with pytest.raises(FormatError):
        decode_model(bytes(data))


def test_unknown_activation():
    data = bytearray(encode_model(ModelBundle.create()))
    struct.pack_into("<I", data, 17, 7)
    with pytest.raises(FormatError, match="activation"):
        decode_model(bytes(data))


def test_dataset_round_trip(rng):
    imgs = [rng.random((9, 8)), rng.random((7, 7))]
    ds = build_dataset(imgs, n=3, sigma=10.0, seed=4)
    back = decode_dataset(encode_dataset(ds))
    assert back.noisy.tobytes() == ds.noisy.tobytes()
    assert back.clean.tobytes() == ds.clean.tobytes()
    assert back.image_ids.tolist() == ds.image_ids.tolist()
    assert (back.n, back.sigma, back.seed) == (3, 10.0, 4)
    for a, b in zip(back.noisy_images, ds.noisy_images):
        assert a.tobytes() == b.tobytes()


def test_dataset_truncated(rng):
    data = encode_dataset(build_dataset([rng.random((6, 6))], n=3))
    with pytest.raises(FormatError):
        decode_dataset(data[:-1])
