"""Command-line pipeline: synthesis, dataset building, training, dehazing, metrics.

Subcommands::

    hazenet synth CLEAN DEPTH -o HAZY --beta B --airlight R,G,B
    hazenet build-dataset MANIFEST -o PATCHES [dataset flags]
    hazenet train (--manifest M | --patches P) -o MODEL [training flags]
    hazenet dehaze HAZY --model MODEL -o OUT [--emit-tmap] [pipeline flags]
    hazenet eval DEHAZED REFERENCE [--machine]

Every numeric option resolves as: explicit command line flag, then a
``--config`` file of flat ``key=value`` lines (keys match flag names,
dashes and underscores interchangeable), then the built-in default.
Exit codes: 0 success, 2 usage or validation error, 3 I/O error,
4 numeric failure.
"""

import argparse
import math
import os
import sys

from .dehazer import Dehazer
from .estimator import JointHazeEstimator
from .haze import synthesize_haze, transmittance_from_depth
from .interpolate import ConvergenceError
from .io import ImageIOError, read_gray, read_image, write_gray, write_image
from .metrics import psnr, ssim
from .nn import ModelFileError
from .synth import SynthConfig, build_training_set, load_manifest, load_patches, save_patches

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

DEFAULTS = {
    "patch_size": 15,
    "stride": 5,
    "variance_threshold": 0.002,
    "lambda": 1e-2,
    "eps_w": 1e-4,
    "cg_tol": 1e-8,
    "cg_max_iters": 10000,
    "epochs": 90,
    "batch_size": 1000,
    "seed": 0,
    "beta_range": (0.5, 1.0),
    "airlight_range": (0.7, 1.0),
    "max_missing_depth": 0.1,
}


def _floats(text, count, flag):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != count:
        raise argparse.ArgumentTypeError(f"{flag} expects {count} comma-separated values")
    return tuple(float(p) for p in parts)


def _parse_config_value(raw):
    raw = raw.strip()
    if "," in raw:
        return tuple(float(p) for p in raw.split(",") if p.strip())
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def read_config_file(path):
    """Parse a flat key=value config file."""
    values = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = _parse_config_value(value.strip())
    return values


class Options:
    """Layered option lookup: command line over config file over defaults."""

    def __init__(self, args):
        self._cli = vars(args)
        self._file = read_config_file(args.config) if getattr(args, "config", None) else {}

    def __getitem__(self, key):
        key = key.replace("-", "_")
        # argparse mangles python keywords ("lambda" is stored as "lambda_")
        cli_value = self._cli.get(key, self._cli.get(key + "_"))
        if cli_value is not None:
            return cli_value
        if key in self._file:
            return self._file[key]
        return DEFAULTS[key]


def _add_config_flag(parser):
    parser.add_argument("--config", help="flat key=value config file (defaults < file < flags)")


def _add_dataset_flags(parser):
    parser.add_argument("--patch-size", type=int, help="patch edge length (default 15)")
    parser.add_argument("--stride", type=int, help="patch grid stride (default 5)")
    parser.add_argument(
        "--variance-threshold",
        type=float,
        help="drop patches at or below this intensity variance (default 0.002)",
    )
    parser.add_argument(
        "--beta-range",
        type=lambda s: _floats(s, 2, "--beta-range"),
        help="scattering coefficient range LO,HI (default 0.5,1.0)",
    )
    parser.add_argument(
        "--airlight-range",
        type=lambda s: _floats(s, 2, "--airlight-range"),
        help="per-channel airlight range LO,HI (default 0.7,1.0)",
    )
    parser.add_argument(
        "--max-missing-depth",
        type=float,
        help="drop patches whose invalid-depth fraction exceeds this (default 0.1)",
    )
    parser.add_argument("--seed", type=int, help="generator seed (default 0)")


def _add_pipeline_flags(parser):
    parser.add_argument("--patch-size", type=int, help="patch edge length (default 15)")
    parser.add_argument("--stride", type=int, help="patch grid stride (default 5)")
    parser.add_argument(
        "--variance-threshold",
        type=float,
        help="drop patches at or below this intensity variance (default 0.002)",
    )
    parser.add_argument(
        "--lambda",
        dest="lambda_",
        type=float,
        help="smoothness strength of the interpolation (default 0.01)",
    )
    parser.add_argument(
        "--eps-w", type=float, help="guard constant in the edge weights (default 1e-4)"
    )
    parser.add_argument(
        "--cg-tol", type=float, help="relative residual tolerance of the solver (default 1e-8)"
    )
    parser.add_argument(
        "--cg-max-iters", type=int, help="iteration cap of the solver (default 10000)"
    )


def _synth_config(opts):
    lo, hi = opts["airlight_range"]
    return SynthConfig(
        beta_range=tuple(opts["beta_range"]),
        airlight_range=((lo, hi), (lo, hi), (lo, hi)),
        patch_size=opts["patch_size"],
        stride=opts["stride"],
        variance_threshold=opts["variance_threshold"],
        max_missing_depth_fraction=opts["max_missing_depth"],
        seed=opts["seed"],
    )


def _tmap_path(output_path):
    return os.path.splitext(output_path)[0] + "_tmap.png"


def cmd_synth(args):
    clean = read_image(args.clean)
    depth = read_gray(args.depth)
    transmittance = transmittance_from_depth(depth, args.beta)
    hazy = synthesize_haze(clean, transmittance, list(args.airlight))
    write_image(hazy, args.output)
    write_gray(transmittance, _tmap_path(args.output), bits=16)
    print(f"wrote {args.output} and {_tmap_path(args.output)}")
    return EXIT_OK


def cmd_build_dataset(args):
    opts = Options(args)
    items = load_manifest(args.manifest)
    patches = build_training_set(items, _synth_config(opts))
    save_patches(args.output, patches)
    print(f"wrote {len(patches)} labeled patches to {args.output}")
    return EXIT_OK


def cmd_train(args):
    opts = Options(args)
    if (args.manifest is None) == (args.patches is None):
        raise ValueError("exactly one of --manifest or --patches is required")
    if args.manifest:
        patches = build_training_set(load_manifest(args.manifest), _synth_config(opts))
    else:
        patches = load_patches(args.patches)
        if patches.labels is None:
            raise ValueError(f"{args.patches} holds unlabeled patches; cannot train")
    estimator = JointHazeEstimator(
        epochs=opts["epochs"],
        batch_size=opts["batch_size"],
        seed=opts["seed"],
    )
    estimator.fit(patches)
    estimator.save(args.output)
    loss_log = args.loss_log or args.output + ".loss.txt"
    with open(loss_log, "w", encoding="utf-8") as handle:
        for epoch, loss in enumerate(estimator.loss_history_, start=1):
            handle.write(f"{epoch},{loss:.12e}\n")
    print(f"trained on {len(patches)} patches; wrote {args.output} and {loss_log}")
    return EXIT_OK


def cmd_dehaze(args):
    opts = Options(args)
    hazy = read_image(args.hazy)
    estimator = JointHazeEstimator.load(args.model)
    pipeline = Dehazer(
        estimator=estimator,
        patch_size=opts["patch_size"],
        stride=opts["stride"],
        variance_threshold=opts["variance_threshold"],
        lam=opts["lambda"],
        eps_w=opts["eps_w"],
        cg_tol=opts["cg_tol"],
        cg_max_iters=opts["cg_max_iters"],
    )
    result = pipeline.dehaze(hazy)
    write_image(result.radiance, args.output)
    message = f"wrote {args.output}"
    if args.emit_tmap:
        write_gray(result.transmittance, _tmap_path(args.output), bits=16)
        message += f" and {_tmap_path(args.output)}"
    print(message)
    return EXIT_OK


def cmd_eval(args):
    dehazed = read_image(args.dehazed)
    reference = read_image(args.reference)
    psnr_value = psnr(reference, dehazed)
    ssim_value = ssim(reference, dehazed)
    psnr_text = "inf" if math.isinf(psnr_value) else f"{psnr_value:.4f}"
    print(f"PSNR: {psnr_text} dB")
    print(f"SSIM: {ssim_value:.6f}")
    if args.machine:
        print(f"psnr={psnr_value} ssim={ssim_value}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hazenet",
        description="Patch-based single-image dehazing pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a hazy image from a clean image and depth map")
    p.add_argument("clean", help="clean RGB image (PNG or PPM)")
    p.add_argument("depth", help="depth map (PGM or PNG), values scaled to [0, 1]")
    p.add_argument("-o", "--output", required=True, help="hazy image to write")
    p.add_argument("--beta", type=float, required=True, help="scattering coefficient (>= 0)")
    p.add_argument(
        "--airlight",
        type=lambda s: _floats(s, 3, "--airlight"),
        required=True,
        help="airlight color R,G,B with channels in (0, 1]",
    )
    _add_config_flag(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-dataset", help="synthesize labeled training patches")
    p.add_argument("manifest", help="manifest file: image depth [mask] per line")
    p.add_argument("-o", "--output", required=True, help="patch container to write")
    _add_dataset_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train the joint estimator network")
    p.add_argument("--manifest", help="manifest of scenes to synthesize patches from")
    p.add_argument("--patches", help="previously built patch container")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    p.add_argument("--loss-log", help="per-epoch loss log (default: MODEL.loss.txt)")
    p.add_argument("--epochs", type=int, help="training epochs (default 90)")
    p.add_argument("--batch-size", type=int, help="optimizer batch size (default 1000)")
    _add_dataset_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dehaze", help="dehaze an image with a trained model")
    p.add_argument("hazy", help="hazy RGB image")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("-o", "--output", required=True, help="dehazed image to write")
    p.add_argument(
        "--emit-tmap",
        action="store_true",
        help="also write the interpolated transmittance map as 16-bit PNG",
    )
    _add_pipeline_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_dehaze)

    p = sub.add_parser("eval", help="report PSNR and SSIM of a dehazed image")
    p.add_argument("dehazed", help="image to score")
    p.add_argument("reference", help="ground-truth clean image")
    p.add_argument(
        "--machine", action="store_true", help="also print a machine-readable psnr=/ssim= line"
    )
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (FileNotFoundError, ImageIOError, ModelFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
