"""Command-line front end.

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

from . import image as imageio
from .dataset import build_dataset
from .image import FormatError
from .matching import WindowSpec
from .models import ArchitectureError, ModelBundle, verify_architecture
from .nn import OptimizationError
from .pipeline import DenoiseRequest, denoise_image, evaluate
from .serialization import load_dataset, load_model, save_dataset, save_model
from .training import (
    PROFILES,
    EpochRecord,
    TrainConfig,
    TrainingDivergence,
    build_stage2_samples,
    format_log_line,
    train_stage1,
    train_stage2,
)

log = logging.getLogger("deepcofib")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# key in config file -> (TrainConfig field or local name, type)
CONFIG_KEYS = {
    "epochs": int,
    "batch": int,
    "lr": float,
    "seed": int,
    "val_fraction": float,
    "checkpoint_every": int,
    "stage2_samples": int,
    "S": int,
    "d": int,
    "workers": int,
}


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve_train_settings(args) -> tuple[TrainConfig, WindowSpec, int]:
    """Flags > config file > profile defaults."""
    profile = PROFILES[args.profile]["config"]
    base = {
        "epochs": profile.epochs,
        "batch": profile.batch_size,
        "lr": profile.learning_rate,
        "seed": profile.seed,
        "val_fraction": profile.val_fraction,
        "checkpoint_every": profile.checkpoint_every,
        "stage2_samples": profile.stage2_samples,
        "S": 50,
        "d": 5,
        "workers": 1,
    }
    if args.config:
        base.update(read_config_file(args.config))
    for key in base:
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if base["epochs"] < 1:
        raise UsageError("--epochs must be >= 1")
    if base["batch"] < 1:
        raise UsageError("--batch must be >= 1")
    if not base["lr"] > 0:
        raise UsageError("--lr must be positive")
    if base["workers"] < 1:
        raise UsageError("--workers must be >= 1")
    if base["stage2_samples"] is not None and base["stage2_samples"] < 1:
        base["stage2_samples"] = None
    try:
        config = TrainConfig(
            batch_size=base["batch"],
            epochs=base["epochs"],
            learning_rate=base["lr"],
            seed=base["seed"],
            val_fraction=base["val_fraction"],
            checkpoint_every=base["checkpoint_every"],
            stage2_samples=base["stage2_samples"],
        )
        spec = WindowSpec(S=base["S"], d=base["d"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return config, spec, base["workers"]


def _existing(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


# -- commands ----------------------------------------------------------------


def cmd_generate_data(args) -> int:
    folder = Path(args.images)
    if not folder.is_dir():
        raise UsageError(f"not a directory: {folder}")
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise UsageError(f"no .pgm images in {folder}")
    if args.sigma < 0:
        raise UsageError("--sigma must be non-negative")
    images = []
    for p in files:
        try:
            images.append(imageio.load_pgm(p))
        except FormatError as exc:
            raise UsageError(f"{p}: {exc}") from None
    try:
        ds = build_dataset(images, n=args.n, sigma=args.sigma, seed=args.seed,
                           per_patch_noise=args.per_patch_noise)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_dataset(ds, args.out)
    print(f"{len(ds)} pairs")
    return EXIT_OK


def _epoch_writer(log_path: str, model_path: str, checkpoint_every: int):
    def hook(stage: int):
        def write(rec: EpochRecord, bundle: ModelBundle) -> None:
            with open(log_path, "a") as fh:
                fh.write(format_log_line(rec) + "\n")
            if checkpoint_every and (rec.epoch + 1) % checkpoint_every == 0:
                save_model(bundle, f"{model_path}.stage{stage}-epoch{rec.epoch + 1}")

        return write

    return hook


def cmd_train(args) -> int:
    config, spec, workers = resolve_train_settings(args)
    data = load_dataset(_existing(args.data, "dataset"))
    log_path = args.log or f"{args.model}.log"
    hook = _epoch_writer(log_path, args.model, config.checkpoint_every)

    if args.stage == "2":
        if not os.path.isfile(args.model):
            raise UsageError(f"stage 2 needs a stage-1 model file; {args.model} does not exist")
        bundle = load_model(args.model)
        if bundle.stage < 1:
            raise UsageError(f"{args.model} has not completed stage 1")
        spec = WindowSpec(S=spec.S, d=bundle.d)
    else:
        bundle = ModelBundle.create(n=data.n, d=spec.d, S=spec.S, sigma=data.sigma,
                                    seed=config.seed)
        bundle, hist = train_stage1(data, config, bundle, hook(1))
        print(f"stage 1 final train_mse={hist[-1].train_mse:.6g}")

    if args.stage in ("2", "all"):
        samples = build_stage2_samples(
            data.noisy_images, data.clean_images, bundle.sparsifier, spec, n=bundle.n,
            max_samples=config.stage2_samples, seed=config.seed, workers=workers,
        )
        bundle.S = spec.S
        bundle, hist = train_stage2(samples, bundle, config, hook(2))
        print(f"stage 2 on {len(samples)} samples, final train_mse={hist[-1].train_mse:.6g}")

    verify_architecture(bundle)
    save_model(bundle, args.model)
    print(f"wrote {args.model}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    noisy = imageio.load_pgm(_existing(args.input, "input image"))
    bundle = load_model(_existing(args.model, "model file"))
    verify_architecture(bundle)
    clean = imageio.load_pgm(_existing(args.clean, "clean image")) if args.clean else None
    if clean is not None and clean.shape != noisy.shape:
        raise UsageError(f"clean image {clean.shape} and input {noisy.shape} differ in shape")
    timing: dict = {}
    out = denoise_image(
        DenoiseRequest(noisy, bundle, stride=args.stride), workers=args.workers, timing=timing
    )
    imageio.save_pgm(out, args.out)
    if clean is not None:
        # compare what is on disk: the denoised output after 8-bit quantisation
        print(evaluate(clean, noisy, imageio.decode_pgm(imageio.encode_pgm(out)), timing).line())
    return EXIT_OK


def cmd_add_noise(args) -> int:
    img = imageio.load_pgm(_existing(args.input, "input image"))
    if args.sigma is not None:
        if args.sigma < 0:
            raise UsageError("--sigma must be non-negative")
        noisy = imageio.add_awgn_sigma(img, args.sigma, args.seed)
    else:
        try:
            noisy = imageio.add_awgn_snr(img, args.snr_db, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    imageio.save_pgm(noisy, args.out)
    return EXIT_OK


def cmd_info(args) -> int:
    bundle = load_model(_existing(args.model, "model file"))
    counts = bundle.param_counts()
    labels = {
        "sparsifier": "sparsifier",
        "collaborator": "collaborator",
        "denoiser_net": "denoiser network",
        "denoiser_model": "denoiser model",
        "desparsifier": "desparsifier",
        "total": "total",
    }
    for key, label in labels.items():
        print(f"{label:<17}{counts[key]:>8,d}")
    print(
        f"n={bundle.n} m={bundle.m} d={bundle.d} S={bundle.S} sigma={bundle.sigma:g} "
        f"seed={bundle.seed} stage={bundle.stage}"
    )
    try:
        verify_architecture(bundle)
        print("architecture: ok")
    except ArchitectureError as exc:
        print(f"architecture: MISMATCH ({exc})")
        return EXIT_RUNTIME
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _finite_float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise argparse.ArgumentTypeError("nan is not allowed")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepcofib", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="build a clean/noisy patch-pair dataset")
    p.add_argument("--images", required=True, help="directory of P5 PGM images")
    p.add_argument("--sigma", type=_finite_float, required=True, help="noise std on the 0-255 scale")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=5, help="patch side")
    p.add_argument("--per-patch-noise", action="store_true")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="run training stage 1, 2 or both")
    p.add_argument("--stage", choices=("1", "2", "all"), default="all")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=_finite_float)
    p.add_argument("--seed", type=int)
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--config", help="key=value overrides file")
    p.add_argument("--log", help="training log (default: MODEL.log)")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--stage2-samples", dest="stage2_samples", type=int,
                   help="cap on stage-2 reference patches (0: all)")
    p.add_argument("--S", dest="S", type=int, help="search window side")
    p.add_argument("--d", dest="d", type=int, help="patches per collaboration")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise a PGM image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clean", help="clean reference for PSNR/SSIM")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("add-noise", help="add white Gaussian noise to a PGM image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sigma", type=_finite_float)
    g.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("info", help="print the architecture of a model file")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    if getattr(args, "stride", 1) < 1:
        parser.error("--stride must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"deepcofib: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ArchitectureError) as exc:
        print(f"deepcofib: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergence, OptimizationError) as exc:
        print(f"deepcofib: training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"deepcofib: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
