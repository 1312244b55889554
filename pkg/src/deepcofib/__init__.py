"""Patch-based image denoising by collaborative filtering of learned sparse codes.

Noisy ``5 x 5`` patches are encoded by a learned sparsifier, each reference
patch is combined with its most similar neighbours through trainable
element-wise collaboration weights and a dense denoiser network, decoded by
a learned desparsifier, and the image is rebuilt by overlap averaging.
"""

from ._backend import BACKEND
from .dataset import PatchPairSet, build_dataset
from .image import (
    CoverageError,
    FormatError,
    Patches,
    add_awgn_sigma,
    add_awgn_snr,
    aggregate,
    extract_patches,
    load_pgm,
    save_pgm,
)
from .matching import MatchSet, WindowSpec, find_similar
from .metrics import psnr, ssim
from .models import (
    ArchitectureError,
    Collaborator,
    ModelBundle,
    collaborate,
    denoise_sparse,
    desparsify,
    measure_sparsity,
    sparsify,
    verify_architecture,
)
from .pipeline import DenoiseRequest, EvaluationReport, denoise_batch, denoise_image, evaluate
from .serialization import load_model, save_model
from .training import TrainConfig, build_stage2_samples, train_stage1, train_stage2

__version__ = "0.1.0"
