"""Clean/noisy training patch pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .image import add_awgn_sigma, as_image, extract_patches


@dataclass
class PatchPairSet:
    """Row ``k`` of ``noisy``/``clean`` is one vectorized ``n x n`` patch.

    The whole clean and noisy source images are kept as well; stage-2 sample
    construction needs them for block matching.
    """

    noisy: np.ndarray  # (count, n*n)
    clean: np.ndarray  # (count, n*n)
    image_ids: np.ndarray  # (count,) uint32
    n: int
    sigma: float  # 0-255 scale
    seed: int
    clean_images: list[np.ndarray] = field(default_factory=list)
    noisy_images: list[np.ndarray] = field(default_factory=list)
    per_patch_noise: bool = False

    def __len__(self) -> int:
        return len(self.noisy)


def build_dataset(
    clean_images, n: int = 5, sigma: float = 25.0, seed: int = 0, per_patch_noise: bool = False
) -> PatchPairSet:
    """Noise each whole image, then cut both versions into stride-1 patches.

    With ``per_patch_noise`` the noisy patches instead get independent noise
    per patch (overlaps disagree); the stored noisy images are still noised
    per image.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = np.random.default_rng(seed)
    cleans, noisys, noisy_p, clean_p, ids = [], [], [], [], []
    for i, img in enumerate(clean_images):
        img = as_image(img)
        if min(img.shape) < n:
            raise ValueError(f"image {i} is {img.shape[0]}x{img.shape[1]}, smaller than {n}x{n}")
        noisy = add_awgn_sigma(img, sigma, rng)
        cp = extract_patches(img, n).values
        if per_patch_noise:
            np_ = add_awgn_sigma(cp, sigma, rng)
        else:
            np_ = extract_patches(noisy, n).values
        cleans.append(img)
        noisys.append(noisy)
        clean_p.append(cp)
        noisy_p.append(np_)
        ids.append(np.full(len(cp), i, dtype=np.uint32))
    if not cleans:
        raise ValueError("no images given")
    return PatchPairSet(
        noisy=np.concatenate(noisy_p),
        clean=np.concatenate(clean_p),
        image_ids=np.concatenate(ids),
        n=n,
        sigma=float(sigma),
        seed=int(seed),
        clean_images=cleans,
        noisy_images=noisys,
        per_patch_noise=per_patch_noise,
    )
