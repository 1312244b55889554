import numpy as np
import pytest

from deepcofib.dataset import PatchPairSet, build_dataset
from deepcofib.matching import WindowSpec
from deepcofib.models import ModelBundle, collaborate
from deepcofib.nn import forward
from deepcofib.synthetic import synthetic_corpus, synthetic_image
from deepcofib.training import (
    TrainConfig,
    TrainingDivergence,
    build_stage2_samples,
    format_log_line,
    split_indices,
    train_stage1,
    train_stage2,
)


@pytest.fixture(scope="module")
def small_pairs():
    ds = build_dataset(synthetic_corpus(2, 40, seed=2), n=5, sigma=25.0, seed=0)
    k = 1000
    return PatchPairSet(ds.noisy[:k], ds.clean[:k], ds.image_ids[:k], 5, 25.0, 0)


@pytest.fixture(scope="module")
def stage1_bundle():
    ds = build_dataset(synthetic_corpus(2, 30, seed=8), n=5, sigma=25.0, seed=1)
    bundle, _ = train_stage1(ds, TrainConfig(epochs=3, seed=1))
    return ds, bundle


class TestDataset:
    def test_pair_count(self):
        ds = build_dataset([np.zeros((100, 100))] * 10, n=5, sigma=25.0, seed=0)
        assert len(ds) == 92160 and ds.clean.shape == (92160, 25)

    def test_sigma_zero(self, rng):
        ds = build_dataset([rng.random((12, 12))], sigma=0.0)
        assert ds.noisy.tobytes() == ds.clean.tobytes()

    def test_deterministic(self, rng):
        imgs = [rng.random((12, 10)), rng.random((9, 9))]
        a = build_dataset(imgs, sigma=25.0, seed=3)
        b = build_dataset(imgs, sigma=25.0, seed=3)
        assert a.noisy.tobytes() == b.noisy.tobytes()

    def test_noise_is_per_image(self, rng):
        img = rng.random((10, 10))
        ds = build_dataset([img], sigma=25.0, seed=3)
        noise = (ds.noisy - ds.clean).reshape(6, 6, 25)
        # horizontally adjacent patches share four of five columns of noise
        a = noise[0, 0].reshape(5, 5)[:, 1:]
        b = noise[0, 1].reshape(5, 5)[:, :4]
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_per_patch_switch(self, rng):
        ds = build_dataset([rng.random((10, 10))], sigma=25.0, seed=3, per_patch_noise=True)
        noise = (ds.noisy - ds.clean).reshape(6, 6, 25)
        assert not np.allclose(noise[0, 0].reshape(5, 5)[:, 1:], noise[0, 1].reshape(5, 5)[:, :4])

    def test_undersized_image(self, rng):
        with pytest.raises(ValueError, match="image 1"):
            build_dataset([rng.random((6, 6)), rng.random((4, 9))], n=5)


class TestConfig:
    def test_zero_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_zero_batch(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)

    def test_split(self):
        rng = np.random.default_rng(0)
        tr, va = split_indices(1000, 0.05, rng)
        assert len(va) == 50 and len(tr) == 950
        assert sorted(np.concatenate([tr, va]).tolist()) == list(range(1000))

    def test_log_line(self):
        from deepcofib.training import EpochRecord

        assert format_log_line(EpochRecord(3, 0.5, 0.25)) == "epoch,3,train_mse,0.5,val_mse,0.25"


class TestStage1:
    def test_loss_halves(self, small_pairs):
        _, hist = train_stage1(small_pairs, TrainConfig(epochs=20, seed=0))
        assert len(hist) == 20
        assert all(np.isfinite([h.train_mse for h in hist]))
        assert hist[-1].train_mse < 0.5 * hist[0].train_mse

    def test_deterministic(self, small_pairs):
        cfg = TrainConfig(epochs=2, seed=5)
        a, ha = train_stage1(small_pairs, cfg)
        b, hb = train_stage1(small_pairs, cfg)
        assert [h.train_mse for h in ha] == [h.train_mse for h in hb]
        for x, y in zip(a.sparsifier.parameters() + a.desparsifier.parameters(),
                        b.sparsifier.parameters() + b.desparsifier.parameters()):
            assert x.tobytes() == y.tobytes()

    def test_noise_free_autoencoder(self):
        ds = build_dataset(synthetic_corpus(3, 50, seed=4), n=5, sigma=0.0, seed=0)
        bundle, _ = train_stage1(ds, TrainConfig(epochs=20, seed=0))
        held_out = build_dataset([synthetic_image(40, seed=77)], n=5, sigma=0.0).clean.T
        recon = forward(bundle.desparsifier, forward(bundle.sparsifier, held_out)[0])[0]
        assert np.mean((recon - held_out) ** 2) < 1e-3

    def test_divergence(self, small_pairs):
        bad = PatchPairSet(small_pairs.noisy.copy(), small_pairs.clean, small_pairs.image_ids, 5,
                           25.0, 0)
        bad.noisy[:, 3] = np.nan
        with pytest.raises(TrainingDivergence) as info:
            train_stage1(bad, TrainConfig(epochs=2))
        assert info.value.epoch == 0

    def test_epoch_hook(self, small_pairs):
        seen = []
        train_stage1(small_pairs, TrainConfig(epochs=2), on_epoch=lambda rec, b: seen.append(rec))
        assert [r.epoch for r in seen] == [0, 1]


class TestStage2Samples:
    def test_constant_image(self, stage1_bundle):
        _, bundle = stage1_bundle
        img = np.full((12, 12), 0.3)
        s = build_stage2_samples([img], [img], bundle.sparsifier, WindowSpec(10, 5))
        reps = s[17].reps
        assert reps.shape == (100, 5)
        for j in range(1, 5):
            np.testing.assert_array_equal(reps[:, j], reps[:, 0])

    def test_shapes_and_count(self, stage1_bundle):
        ds, bundle = stage1_bundle
        s = build_stage2_samples(ds.noisy_images, ds.clean_images, bundle.sparsifier,
                                 WindowSpec(12, 5))
        assert len(s) == 2 * 26 * 26
        assert s.reps(np.arange(10)).shape == (100, 10, 5)
        assert s[0].target.shape == (25,)
        np.testing.assert_array_equal(s[0].target, ds.clean_images[0][:5, :5].ravel())
        np.testing.assert_allclose(
            s[0].reps[:, 0], forward(bundle.sparsifier, ds.noisy_images[0][:5, :5].ravel())[0],
            rtol=0, atol=1e-13,
        )

    def test_subsample(self, stage1_bundle):
        ds, bundle = stage1_bundle
        s = build_stage2_samples(ds.noisy_images, ds.clean_images, bundle.sparsifier,
                                 WindowSpec(12, 5), max_samples=100, seed=3)
        assert len(s) == 100


class TestStage2:
    def _samples(self, stage1_bundle, k=1200):
        ds, bundle = stage1_bundle
        return build_stage2_samples(ds.noisy_images, ds.clean_images, bundle.sparsifier,
                                    WindowSpec(12, 5), max_samples=k)

    def _copy(self, bundle):
        return ModelBundle(bundle.sparsifier.copy(), bundle.collaborator.copy(),
                           bundle.denoiser.copy(), bundle.desparsifier.copy(), stage=1)

    def test_freeze_and_progress(self, stage1_bundle):
        bundle = self._copy(stage1_bundle[1])
        before = [p.copy() for p in bundle.desparsifier.parameters()]
        c_before = bundle.collaborator.weights.copy()
        _, hist = train_stage2(self._samples(stage1_bundle), bundle, TrainConfig(epochs=20))
        for a, b in zip(before, bundle.desparsifier.parameters()):
            assert a.tobytes() == b.tobytes()
        assert not np.array_equal(c_before, bundle.collaborator.weights)
        assert hist[-1].train_mse < hist[0].train_mse
        assert bundle.stage == 2

    def test_first_forward_composition(self, stage1_bundle):
        bundle = self._copy(stage1_bundle[1])
        v = np.random.default_rng(1).random(100)
        reps = np.repeat(v[:, None], 5, axis=1)
        shared = collaborate(bundle.collaborator, reps)
        np.testing.assert_allclose(shared, v, rtol=1e-15)
        got = forward(bundle.desparsifier, forward(bundle.denoiser, shared)[0])[0]
        want = forward(bundle.desparsifier, forward(bundle.denoiser, v)[0])[0]
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)
