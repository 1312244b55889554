"""Procedural grayscale scenes for desk-scale training and tests.

A scene is drawn in the unit square (smooth shading, flat and striped
shapes, soft edges) and can be rendered at any resolution, which gives
consistent multi-resolution versions of one picture.
"""

from __future__ import annotations

import numpy as np


def _scene(rng: np.random.Generator):
    shapes = []
    for _ in range(rng.integers(6, 12)):
        shapes.append(
            dict(
                kind=rng.choice(["ellipse", "rect", "stripes", "disk"]),
                cx=rng.uniform(0, 1), cy=rng.uniform(0, 1),
                rx=rng.uniform(0.06, 0.3), ry=rng.uniform(0.06, 0.3),
                angle=rng.uniform(0, np.pi),
                level=rng.uniform(0.1, 0.9),
                freq=rng.uniform(6, 18),
            )
        )
    return dict(
        grad=rng.uniform(-0.25, 0.25, size=2),
        base=rng.uniform(0.3, 0.7),
        waves=[(rng.uniform(0.5, 3, size=2), rng.uniform(0, 2 * np.pi), rng.uniform(0, 0.08))
               for _ in range(3)],
        shapes=shapes,
    )


def _render(scene, size: int, supersample: int = 4) -> np.ndarray:
    k = size * supersample
    t = (np.arange(k) + 0.5) / k
    y, x = np.meshgrid(t, t, indexing="ij")
    img = scene["base"] + scene["grad"][0] * (x - 0.5) + scene["grad"][1] * (y - 0.5)
    for freq, phase, amp in scene["waves"]:
        img = img + amp * np.sin(2 * np.pi * (freq[0] * x + freq[1] * y) + phase)
    for s in scene["shapes"]:
        ca, sa = np.cos(s["angle"]), np.sin(s["angle"])
        u = ((x - s["cx"]) * ca + (y - s["cy"]) * sa) / s["rx"]
        v = (-(x - s["cx"]) * sa + (y - s["cy"]) * ca) / s["ry"]
        if s["kind"] == "rect":
            mask = (np.abs(u) < 1) & (np.abs(v) < 1)
        elif s["kind"] == "disk":
            w = v * s["ry"] / s["rx"]
            mask = u * u + w * w < 1
        else:
            mask = u * u + v * v < 1
        value = np.full_like(img, s["level"])
        if s["kind"] == "stripes":
            value = s["level"] + 0.2 * np.sign(np.sin(s["freq"] * u))
        img = np.where(mask, value, img)
    img = img.reshape(size, supersample, size, supersample).mean(axis=(1, 3))
    return np.clip(img, 0.02, 0.98)


def synthetic_image(size: int = 100, seed: int = 0) -> np.ndarray:
    return _render(_scene(np.random.default_rng(seed)), size)


def synthetic_multires(sizes=(64, 128, 256), seed: int = 0) -> list[np.ndarray]:
    scene = _scene(np.random.default_rng(seed))
    return [_render(scene, s) for s in sizes]


def synthetic_corpus(count: int = 10, size: int = 100, seed: int = 0) -> list[np.ndarray]:
    return [synthetic_image(size, seed * 100003 + i) for i in range(count)]
