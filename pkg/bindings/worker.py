#!/usr/bin/env python3
"""Stdio worker bridging the native library to foreign hosts.

Protocol, per request: one UTF-8 JSON line
    {"op": ..., "shapes": [[K,I,J], ...], ...}
followed by the concatenated little-endian float64 payloads of the listed
shapes (channel-major, the NT1 sample layout). Each response is one JSON
line {"ok": true, "shapes": [...], ...} plus its payloads, or
{"ok": false, "kind": ..., "error": ...} with none. Payloads are consumed
even when a request fails, keeping the stream in sync. Tensors cross the
boundary without re-encoding, so results are bit-identical to native
calls.
"""

import json
import sys

import numpy as np

from sasr import (
    ConfigError,
    DimensionError,
    ImageTensor,
    PreconditionError,
    build_weight_matrix,
    extract_edge_map,
    grad_weighted_loss,
    sa_pixel_loss,
)
from sasr.config import coefficients, edge_config, resolve_config


def _read_exact(stream, count):
    chunks = []
    remaining = count
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            raise EOFError("peer closed mid-payload")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _to_tensor(raw, shape):
    k, i, j = (int(d) for d in shape)
    data = np.frombuffer(raw, dtype="<f8").reshape(k, i, j)
    return ImageTensor(data.astype(np.float64))


def _payload(tensor):
    return np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()


def _resolved(request):
    doc = request.get("cfg") or {}
    if doc and not set(doc) & {"edge", "coeffs", "train", "io"}:
        raise ConfigError(f"config must use schema sections, got keys {sorted(doc)}")
    return resolve_config(doc)


def handle(request, raws):
    op = request.get("op")
    shapes = request.get("shapes", [])
    if op == "ping":
        return {"ok": True, "pong": True, "shapes": []}, []
    if op == "edge_map":
        if len(shapes) != 1:
            raise ConfigError("edge_map takes exactly one tensor")
        img = _to_tensor(raws[0], shapes[0])
        cfg = edge_config(_resolved(request))
        out = extract_edge_map(img, cfg)
        return {"ok": True, "shapes": [list(out.shape)]}, [_payload(out)]
    if op == "build_weight_matrix":
        if len(shapes) != 1:
            raise ConfigError("build_weight_matrix takes exactly one tensor")
        weights = _to_tensor(raws[0], shapes[0])
        out = build_weight_matrix(weights, float(request["alpha"]), float(request["beta"]))
        return {"ok": True, "shapes": [list(out.shape)]}, [_payload(out)]
    if op == "sa_loss_grad":
        if len(shapes) != 2:
            raise ConfigError("sa_loss_grad takes an (hr, sr) tensor pair")
        hr = _to_tensor(raws[0], shapes[0])
        sr = _to_tensor(raws[1], shapes[1])
        resolved = _resolved(request)
        coeffs = coefficients(resolved)
        weights = extract_edge_map(hr, edge_config(resolved))
        loss = sa_pixel_loss(hr, sr, weights, coeffs)
        combined = build_weight_matrix(weights, coeffs.beta1, coeffs.beta2)
        grad = grad_weighted_loss(hr, sr, combined, coeffs)
        return (
            {"ok": True, "loss": loss, "shapes": [list(grad.shape)]},
            [_payload(grad)],
        )
    raise ConfigError(f"unknown op {op!r}")


def main():
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    while True:
        line = stdin.readline()
        if not line:
            return
        try:
            request = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            stdout.write(
                json.dumps({"ok": False, "kind": "config", "error": f"bad header: {exc}"}).encode()
                + b"\n"
            )
            stdout.flush()
            continue

        if request.get("op") == "shutdown":
            stdout.write(b'{"ok": true, "shapes": []}\n')
            stdout.flush()
            return

        # validate the declared shapes, then consume every payload before
        # dispatch so downstream errors never desync the stream
        try:
            counts = []
            for shape in request.get("shapes", []):
                k, i, j = (int(d) for d in shape)
                if min(k, i, j) < 1:
                    raise ValueError(f"bad tensor shape {shape}")
                counts.append(8 * k * i * j)
        except (TypeError, ValueError) as exc:
            stdout.write(
                json.dumps({"ok": False, "kind": "config", "error": str(exc)}).encode() + b"\n"
            )
            stdout.flush()
            continue
        try:
            raws = [_read_exact(stdin, count) for count in counts]
        except EOFError:
            return

        try:
            header, payloads = handle(request, raws)
        except ConfigError as exc:
            header, payloads = {"ok": False, "kind": "config", "error": str(exc)}, []
        except DimensionError as exc:
            header, payloads = {"ok": False, "kind": "dimension", "error": str(exc)}, []
        except (PreconditionError, ValueError) as exc:
            header, payloads = {"ok": False, "kind": "precondition", "error": str(exc)}, []
        except Exception as exc:  # keep the worker alive for the next call
            header, payloads = {"ok": False, "kind": "internal", "error": repr(exc)}, []
        stdout.write(json.dumps(header).encode("utf-8") + b"\n")
        for payload in payloads:
            stdout.write(payload)
        stdout.flush()


if __name__ == "__main__":
    main()
