"""Sparsifier, collaborator, denoiser network and desparsifier.

Shapes follow the network engine: sparse codes are ``(m, batch)`` columns,
patch stacks for collaboration are ``(m, batch, d)`` with the reference in
slot 0 of the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import IDENTITY, RELU, DenseLayer, DenseNetwork, ShapeError, forward, param_count

DENOISER_DEPTH = 10
SPARSIFIER_HIDDEN = 2
DESPARSIFIER_HIDDEN = 2


class ArchitectureError(ValueError):
    """A sub-model does not have the expected layout."""

    def __init__(self, submodel: str, message: str):
        super().__init__(f"{submodel}: {message}")
        self.submodel = submodel


def build_sparsifier(n2: int = 25, m: int = 100, rng=None) -> DenseNetwork:
    sizes = [n2] + [m] * (SPARSIFIER_HIDDEN + 1)
    return DenseNetwork.build(sizes, [RELU] * (SPARSIFIER_HIDDEN + 1), rng)


def build_desparsifier(m: int = 100, n2: int = 25, rng=None) -> DenseNetwork:
    sizes = [m] * (DESPARSIFIER_HIDDEN + 1) + [n2]
    return DenseNetwork.build(sizes, [RELU] * DESPARSIFIER_HIDDEN + [IDENTITY], rng)


def build_denoiser(m: int = 100, depth: int = DENOISER_DEPTH, rng=None) -> DenseNetwork:
    return DenseNetwork.build([m] * (depth + 1), [RELU] * (depth - 1) + [IDENTITY], rng)


class Collaborator:
    """Trainable ``m x d`` element-wise weights followed by a row mean."""

    def __init__(self, weights):
        self.weights = np.array(weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError("collaborator weights must be an m x d matrix")

    @classmethod
    def ones(cls, m: int = 100, d: int = 5) -> "Collaborator":
        return cls(np.ones((m, d)))

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def n_params(self) -> int:
        return self.weights.size

    def parameters(self) -> list[np.ndarray]:
        return [self.weights]

    def copy(self) -> "Collaborator":
        return Collaborator(self.weights.copy())

    def _check(self, reps: np.ndarray) -> np.ndarray:
        reps = np.asarray(reps, dtype=np.float64)
        if reps.ndim not in (2, 3) or reps.shape[0] != self.m or reps.shape[-1] != self.d:
            raise ShapeError(
                f"expected ({self.m}, d={self.d}) or ({self.m}, batch, {self.d}) reps, "
                f"got {reps.shape}"
            )
        return reps

    def __call__(self, reps: np.ndarray) -> np.ndarray:
        return collaborate(self, reps)

    def backward(self, reps: np.ndarray, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradients ``(dC, dX)`` of a loss with ``grad_out = dLoss/d(collaborate(C, X))``."""
        reps = self._check(reps)
        g = np.asarray(grad_out, dtype=np.float64)
        w = self.weights if reps.ndim == 2 else self.weights[:, None, :]
        gx = g[..., None] / self.d
        grad_x = gx * w
        grad_c = gx * reps
        if reps.ndim == 3:
            grad_c = grad_c.sum(axis=1)
        return grad_c, grad_x


def collaborate(collaborator: Collaborator, reps: np.ndarray) -> np.ndarray:
    reps = collaborator._check(reps)
    w = collaborator.weights if reps.ndim == 2 else collaborator.weights[:, None, :]
    return (w * reps).sum(axis=-1) / collaborator.d


@dataclass
class ModelBundle:
    sparsifier: DenseNetwork
    collaborator: Collaborator
    denoiser: DenseNetwork
    desparsifier: DenseNetwork
    n: int = 5
    m: int = 100
    d: int = 5
    S: int = 50
    sigma: float = 25.0  # training noise level on the 0-255 scale
    seed: int = 0
    stage: int = 0  # highest completed training stage
    extra: dict = field(default_factory=dict, repr=False)

    @classmethod
    def create(
        cls, n: int = 5, m: int = 100, d: int = 5, S: int = 50, sigma: float = 25.0, seed: int = 0
    ) -> "ModelBundle":
        rng = np.random.default_rng(seed)
        return cls(
            sparsifier=build_sparsifier(n * n, m, rng),
            collaborator=Collaborator.ones(m, d),
            denoiser=build_denoiser(m, rng=rng),
            desparsifier=build_desparsifier(m, n * n, rng),
            n=n, m=m, d=d, S=S, sigma=sigma, seed=seed,
        )

    def submodels(self) -> dict:
        return {
            "sparsifier": self.sparsifier,
            "collaborator": self.collaborator,
            "denoiser": self.denoiser,
            "desparsifier": self.desparsifier,
        }

    def param_counts(self) -> dict[str, int]:
        counts = {
            "sparsifier": param_count(self.sparsifier),
            "collaborator": self.collaborator.n_params,
            "denoiser_net": param_count(self.denoiser),
            "desparsifier": param_count(self.desparsifier),
        }
        counts["denoiser_model"] = counts["collaborator"] + counts["denoiser_net"]
        counts["total"] = (
            counts["sparsifier"] + counts["denoiser_model"] + counts["desparsifier"]
        )
        return counts

    def check_compatible(self) -> None:
        """Dimension chain patch -> code -> collaborated code -> code -> patch."""
        n2 = self.n * self.n
        chain = [
            ("sparsifier", self.sparsifier.in_dim, n2, "input"),
            ("sparsifier", self.sparsifier.out_dim, self.m, "output"),
            ("collaborator", self.collaborator.m, self.m, "rows"),
            ("collaborator", self.collaborator.d, self.d, "columns"),
            ("denoiser", self.denoiser.in_dim, self.m, "input"),
            ("denoiser", self.denoiser.out_dim, self.m, "output"),
            ("desparsifier", self.desparsifier.in_dim, self.m, "input"),
            ("desparsifier", self.desparsifier.out_dim, n2, "output"),
        ]
        for name, got, want, what in chain:
            if got != want:
                raise ArchitectureError(name, f"{what} dimension {got}, expected {want}")


def expected_counts(n: int = 5, m: int = 100, d: int = 5) -> dict[str, int]:
    n2 = n * n
    hidden = m * m + m
    counts = {
        "sparsifier": n2 * m + m + SPARSIFIER_HIDDEN * hidden,
        "collaborator": m * d,
        "denoiser_net": DENOISER_DEPTH * hidden,
        "desparsifier": DESPARSIFIER_HIDDEN * hidden + m * n2 + n2,
    }
    counts["denoiser_model"] = counts["collaborator"] + counts["denoiser_net"]
    counts["total"] = counts["sparsifier"] + counts["denoiser_model"] + counts["desparsifier"]
    return counts


def verify_architecture(bundle: ModelBundle) -> dict[str, int]:
    """Check layer layout and parameter counts; return the counts."""
    bundle.check_compatible()
    layouts = {
        "sparsifier": (bundle.sparsifier, SPARSIFIER_HIDDEN + 1),
        "denoiser_net": (bundle.denoiser, DENOISER_DEPTH),
        "desparsifier": (bundle.desparsifier, DESPARSIFIER_HIDDEN + 1),
    }
    for name, (net, depth) in layouts.items():
        if len(net.layers) != depth:
            raise ArchitectureError(name, f"{len(net.layers)} layers, expected {depth}")
    counts = bundle.param_counts()
    for name, want in expected_counts(bundle.n, bundle.m, bundle.d).items():
        if counts[name] != want:
            raise ArchitectureError(name, f"{counts[name]} parameters, expected {want}")
    return counts


def sparsify(sparsifier: DenseNetwork, patches: np.ndarray) -> np.ndarray:
    """Encode ``(n*n,)`` or ``(n*n, batch)`` patch vectors into sparse codes."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape[0] != sparsifier.in_dim:
        raise ShapeError(f"patch dimension {patches.shape[0]}, expected {sparsifier.in_dim}")
    return forward(sparsifier, patches)[0]


def desparsify(desparsifier: DenseNetwork, codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.float64)
    if codes.shape[0] != desparsifier.in_dim:
        raise ShapeError(f"code dimension {codes.shape[0]}, expected {desparsifier.in_dim}")
    return forward(desparsifier, codes)[0]


def denoise_sparse(collaborator: Collaborator, denoiser: DenseNetwork, reps: np.ndarray) -> np.ndarray:
    return forward(denoiser, collaborate(collaborator, reps))[0]


def measure_sparsity(reps: np.ndarray, threshold: float = 0.01) -> float:
    """Mean number of entries per code above ``threshold`` times its peak magnitude.

    ``reps`` is ``(m, count)``; an all-zero code counts as 0 active entries.
    """
    reps = np.asarray(reps, dtype=np.float64)
    if reps.ndim == 1:
        reps = reps[:, None]
    if reps.size == 0 or reps.shape[1] == 0:
        raise ValueError("no sparse representations given")
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    mag = np.abs(reps)
    peak = mag.max(axis=0)
    active = (mag > threshold * peak) & (peak > 0)
    return float(active.sum(axis=0).mean())
