#!/usr/bin/env python3
"""Desk-scale single-image GAN training, plain loss versus SA loss.

Trains the toy generator twice from the same seed: once with the plain
composite loss (adversarial + perceptual + uniform pixel) and once with
the edge-weighted pixel term added, its coefficient calibrated so the SA
term carries ~15% of the total loss. Reports PSNR/SSIM and the edge/flat
error split on held-out scenes. Takes a couple of minutes.
"""

import dataclasses
import time

import numpy as np

from sasr import (
    EdgeMapConfig,
    LossCoefficients,
    TrainConfig,
    calibrate_beta2,
    evaluate_pair,
    extract_edge_map,
    generator_forward,
    make_synthetic_dataset,
    train_gan,
)

SCALE = 2
ITERS = 800

train_data = make_synthetic_dataset(16, 48, SCALE, seed=100)
val_data = make_synthetic_dataset(4, 48, SCALE, seed=200)
eval_data = make_synthetic_dataset(6, 48, SCALE, seed=300)

coeffs = LossCoefficients.image_sr_defaults()
base = TrainConfig(
    max_iterations=ITERS, lr=1e-4, lr_halving_points=(ITERS // 2,), batch_size=1,
    validate_every=200, seed=0, mode="single_image", scale=SCALE,
    coeffs=coeffs, warmup_steps=150, sa=False,
)
ecfg = EdgeMapConfig()

for sa in (False, True):
    cfg = dataclasses.replace(base, sa=sa)
    label = "SA loss   " if sa else "plain loss"
    if sa:
        beta2 = calibrate_beta2(train_data, cfg)
        cfg = dataclasses.replace(cfg, coeffs=coeffs.with_beta2(beta2))
        print(f"calibrated beta2 = {beta2:.4f} (targets a 15% SA share)")
    t0 = time.perf_counter()
    result = train_gan(train_data, val_data, cfg)
    reports = []
    for inp, hr in eval_data:
        sr = generator_forward(inp, result.generator, SCALE)
        reports.append(evaluate_pair(hr, sr, extract_edge_map(hr, ecfg), tau=0.5))
    psnr_mean = np.mean([r.psnr_db for r in reports])
    ssim_mean = np.mean([r.ssim for r in reports])
    edge = np.mean([r.edge_mae for r in reports if r.edge_mae >= 0])
    flat = np.mean([r.flat_mae for r in reports if r.flat_mae >= 0])
    print(
        f"{label}: psnr={psnr_mean:.2f} dB ssim={ssim_mean:.4f} "
        f"edge_mae={edge:.5f} flat_mae={flat:.5f} "
        f"(best val {result.best_val_loss:.3f} @ iter {result.best_iteration}, "
        f"{time.perf_counter() - t0:.0f}s)"
    )

print("\nThe SA run concentrates capacity on edge regions; expect its edge_mae")
print("to sit below the plain run's at matched settings.")
