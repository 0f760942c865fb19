#!/usr/bin/env python3
"""One-shot native reference for the parity tests.

Reads a manifest of cases (raw float64 inputs on disk), evaluates each
through direct library calls, and writes the expected raw outputs. The
TypeScript suite diffs these bytes against what the bindings return.
"""

import json
import struct
import sys

import numpy as np

from sasr import (
    ImageTensor,
    build_weight_matrix,
    extract_edge_map,
    grad_weighted_loss,
    sa_pixel_loss,
)
from sasr.config import coefficients, edge_config, resolve_config


def load(path, shape):
    with open(path, "rb") as fh:
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(shape)
    return ImageTensor(data.astype(np.float64))


def dump(path, tensor):
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def main(manifest_path):
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    for case in manifest["cases"]:
        resolved = resolve_config(case.get("cfg", {}))
        if case["op"] == "edge_map":
            img = load(case["inputs"][0], case["shapes"][0])
            out = extract_edge_map(img, edge_config(resolved))
            dump(case["outputs"][0], out)
        elif case["op"] == "build_weight_matrix":
            weights = load(case["inputs"][0], case["shapes"][0])
            out = build_weight_matrix(weights, case["alpha"], case["beta"])
            dump(case["outputs"][0], out)
        elif case["op"] == "sa_loss_grad":
            hr = load(case["inputs"][0], case["shapes"][0])
            sr = load(case["inputs"][1], case["shapes"][1])
            coeffs = coefficients(resolved)
            weights = extract_edge_map(hr, edge_config(resolved))
            loss = sa_pixel_loss(hr, sr, weights, coeffs)
            combined = build_weight_matrix(weights, coeffs.beta1, coeffs.beta2)
            grad = grad_weighted_loss(hr, sr, combined, coeffs)
            dump(case["outputs"][0], grad)
            with open(case["outputs"][1], "wb") as fh:
                fh.write(struct.pack("<d", loss))
        else:
            raise SystemExit(f"unknown op {case['op']}")
    print(f"evaluated {len(manifest['cases'])} cases")


if __name__ == "__main__":
    main(sys.argv[1])
