"""Command-line entry point.

Subcommands: edge-map, loss, grad-check, calibrate, train, eval, resize.
Results are printed as JSON (floats at 17 significant digits) with the
fully resolved configuration echoed for reproducibility. File outputs are
written atomically. Exit codes: 0 success, 2 configuration/input error,
3 numeric failure (divergence or degenerate calibration).
"""

import argparse
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__, config as cfgmod
from .audit import run_gradient_audit
from .edges import extract_edge_map
from .errors import CalibrationError, ConfigError, DivergenceError, SasrError
from .io import atomic_write_bytes, read_image, write_model, write_nt1, write_png
from .losses import total_loss
from .metrics import evaluate_pair
from .nets import FeatureExtractor
from .tensor import bicubic_resize
from .training import calibrate_beta2, make_synthetic_dataset, train_gan

MODE_ALIASES = {
    "esr-plain": "esr_plain",
    "esr-sa": "esr_sa",
    "vsr-plain": "vsr_plain",
    "vsr-sa": "vsr_sa",
}


def _emit(payload):
    sys.stdout.write(cfgmod.dumps_17g(payload) + "\n")


def _load_document(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return doc


def _load_section(path, section):
    """Accept a full config document or a bare section object."""
    doc = _load_document(path)
    if doc and not set(doc) & set(cfgmod.DEFAULTS):
        doc = {section: doc}
    return cfgmod.resolve_config(doc)


def cmd_edge_map(args):
    doc = {"edge": {"method": args.method}}
    if args.window is not None:
        doc["edge"]["window_radius"] = args.window
    if args.delta is not None:
        doc["edge"]["delta"] = args.delta
    if args.sigma is not None:
        doc["edge"]["sigma"] = args.sigma
    if args.low is not None:
        doc["edge"]["low"] = args.low
    if args.high is not None:
        doc["edge"]["high"] = args.high
    resolved = cfgmod.resolve_config(doc)
    img = read_image(args.input)
    weights = extract_edge_map(img, cfgmod.edge_config(resolved))
    write_nt1(weights, args.out)
    if args.png_preview:
        # previews scale weights by 255, matching the usual edge-map rendering
        write_png(weights, args.png_preview)
    _emit({
        "command": "edge-map",
        "config": resolved,
        "input": args.input,
        "out": args.out,
        "shape": list(weights.shape),
        "mean_weight": float(weights.data.mean()),
    })
    return 0


def cmd_loss(args):
    resolved = _load_section(args.edge_cfg, "edge")
    if args.coeffs:
        coeffs_doc = _load_section(args.coeffs, "coeffs")
        resolved["coeffs"] = coeffs_doc["coeffs"]
    mode = MODE_ALIASES[args.mode]
    hr = read_image(args.hr)
    sr = read_image(args.sr)
    coeffs = cfgmod.coefficients(resolved)
    weights = None
    if mode.endswith("_sa"):
        weights = extract_edge_map(hr, cfgmod.edge_config(resolved))
    extractor = FeatureExtractor(hr.channels, seed=args.feature_seed)
    d_fake = [args.d_fake]
    breakdown = total_loss(hr, sr, weights, d_fake, extractor, coeffs, mode)
    _emit({
        "command": "loss",
        "config": resolved,
        "mode": args.mode,
        "d_fake": args.d_fake,
        "feature_seed": args.feature_seed,
        "breakdown": breakdown.as_dict(),
    })
    return 0


def cmd_grad_check(args):
    report = run_gradient_audit(seed=args.seed, instances=args.instances)
    _emit({"command": "grad-check", "report": report})
    return 0 if report["passed"] else 3


def cmd_calibrate(args):
    resolved = cfgmod.load_config(args.config)
    tcfg = cfgmod.train_config(resolved)
    ds = resolved["train"]["dataset"]
    sample = make_synthetic_dataset(
        int(ds["n_calibration"]), int(ds["hr_size"]), tcfg.scale,
        seed=tcfg.seed + 7000, mode=tcfg.mode, channels=int(ds["channels"]),
    )
    beta2 = calibrate_beta2(sample, tcfg)
    _emit({
        "command": "calibrate",
        "config": resolved,
        "beta2": beta2,
        "target_share": 0.15,
        "sample_size": int(ds["n_calibration"]),
    })
    return 0


def cmd_train(args):
    resolved = cfgmod.load_config(args.config)
    tcfg = cfgmod.train_config(resolved)
    ds = resolved["train"]["dataset"]
    train_data = make_synthetic_dataset(
        int(ds["n_train"]), int(ds["hr_size"]), tcfg.scale,
        seed=tcfg.seed + 1000, mode=tcfg.mode, channels=int(ds["channels"]),
    )
    val_data = make_synthetic_dataset(
        int(ds["n_val"]), int(ds["hr_size"]), tcfg.scale,
        seed=tcfg.seed + 2000, mode=tcfg.mode, channels=int(ds["channels"]),
    )
    result = train_gan(train_data, val_data, tcfg)
    meta = dict(result.generator.meta)
    meta.update({"seed": result.generator.seed, "best_iteration": result.best_iteration})
    write_model(result.generator.tensors, args.out, meta=meta)
    history_doc = {
        "command": "train",
        "config": resolved,
        "best_iteration": result.best_iteration,
        "best_val_loss": result.best_val_loss,
        "history": result.history,
    }
    atomic_write_bytes(args.history, (cfgmod.dumps_17g(history_doc) + "\n").encode("utf-8"))
    _emit({
        "command": "train",
        "config": resolved,
        "out": args.out,
        "history": args.history,
        "best_iteration": result.best_iteration,
        "best_val_loss": result.best_val_loss,
    })
    return 0


def cmd_eval(args):
    resolved = _load_section(args.edge_cfg, "edge")
    edge_cfg = cfgmod.edge_config(resolved)
    hr_files = sorted(f for f in os.listdir(args.hr) if f.lower().endswith((".png", ".nt1")))
    sr_files = sorted(f for f in os.listdir(args.sr) if f.lower().endswith((".png", ".nt1")))
    if not hr_files:
        raise ConfigError(f"no images found under {args.hr}")
    if len(hr_files) != len(sr_files):
        raise ConfigError(
            f"directory size mismatch: {len(hr_files)} HR vs {len(sr_files)} SR files"
        )
    rows = []
    for hr_name, sr_name in zip(hr_files, sr_files):
        hr = read_image(os.path.join(args.hr, hr_name))
        sr = read_image(os.path.join(args.sr, sr_name))
        weights = extract_edge_map(hr, edge_cfg)
        report = evaluate_pair(hr, sr, weights, args.tau)
        rows.append({"hr": hr_name, "sr": sr_name, **report.as_dict()})
    means = {
        key: float(np.mean([r[key] for r in rows]))
        for key in ("psnr_db", "ssim", "edge_mae", "flat_mae")
    }
    if args.csv:
        header = "name,psnr_db,ssim,edge_mae,flat_mae"
        lines = [header] + [
            f"{r['hr']},{r['psnr_db']:.17g},{r['ssim']:.17g},"
            f"{r['edge_mae']:.17g},{r['flat_mae']:.17g}"
            for r in rows
        ] + [
            f"mean,{means['psnr_db']:.17g},{means['ssim']:.17g},"
            f"{means['edge_mae']:.17g},{means['flat_mae']:.17g}"
        ]
        atomic_write_bytes(args.csv, ("\n".join(lines) + "\n").encode("utf-8"))
    _emit({
        "command": "eval",
        "config": resolved,
        "tau": args.tau,
        "per_image": rows,
        "mean": means,
    })
    return 0


def cmd_resize(args):
    img = read_image(args.input)
    scale = Fraction(args.scale)
    out = bicubic_resize(img, scale)
    if args.out.lower().endswith(".nt1"):
        write_nt1(out, args.out)
    else:
        write_png(out, args.out)
    _emit({
        "command": "resize",
        "input": args.input,
        "out": args.out,
        "scale": str(scale),
        "shape": list(out.shape),
    })
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sasr",
        description="Edge-weighted (spatially adaptive) losses for super-resolution training.",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"sasr {__version__} (config schema {cfgmod.schema_hash()})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("edge-map", help="extract an edge map from an image")
    p.add_argument("--method", choices=["lv", "canny"], required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="NT1 output path")
    p.add_argument("--window", type=int, help="local-variance window radius")
    p.add_argument("--delta", type=float, help="variance normalization constant")
    p.add_argument("--sigma", type=float, help="Canny Gaussian sigma")
    p.add_argument("--low", type=float, help="Canny low threshold fraction")
    p.add_argument("--high", type=float, help="Canny high threshold fraction")
    p.add_argument("--png-preview", help="also write the map as an 8-bit PNG (x255)")
    p.set_defaults(fn=cmd_edge_map)

    p = sub.add_parser("loss", help="composite loss breakdown for an image pair")
    p.add_argument("--mode", choices=sorted(MODE_ALIASES), required=True)
    p.add_argument("--hr", required=True)
    p.add_argument("--sr", required=True)
    p.add_argument("--edge-cfg", help="JSON config (document or edge section)")
    p.add_argument("--coeffs", help="JSON config (document or coeffs section)")
    p.add_argument("--d-fake", type=float, default=0.5,
                   help="stand-in discriminator probability for the GAN term")
    p.add_argument("--feature-seed", type=int, default=0)
    p.set_defaults(fn=cmd_loss)

    p = sub.add_parser("grad-check", help="finite-difference audit of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(fn=cmd_grad_check)

    p = sub.add_parser("calibrate", help="calibrate the edge-term coefficient")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("train", help="desk-scale adversarial training run")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="model container output path")
    p.add_argument("--history", required=True, help="history JSON output path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="quality metrics over paired directories")
    p.add_argument("--hr", required=True)
    p.add_argument("--sr", required=True)
    p.add_argument("--edge-cfg", help="JSON config (document or edge section)")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--csv", help="also write a per-image CSV table")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("resize", help="bicubic resampling")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", required=True, help="rational scale factor, e.g. 4 or 1/4")
    p.set_defaults(fn=cmd_resize)

    return parser


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DivergenceError, CalibrationError) as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return 3
    except (ConfigError, SasrError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
