"""JSON run configuration: schema, defaults, validation, echoing.

A RunConfig document has four sections (edge, coeffs, train, io). Unknown
keys are rejected anywhere; missing keys take the documented defaults, and
every command echoes the fully resolved configuration so runs are
reproducible from their own output.
"""

import hashlib
import json

from .edges import EdgeMapConfig, WindowSpec
from .errors import ConfigError
from .losses import LossCoefficients
from .training import TrainConfig

DEFAULTS = {
    "edge": {
        "method": "local_variance",
        "window_radius": 1,
        "delta": 0.01,
        "sigma": 1.0,
        "low": 0.1,
        "high": 0.2,
    },
    "coeffs": {
        "alpha": 0.005,
        "alpha1": 0.001,
        "alpha2": 0.998,
        "beta1": 0.01,
        "beta2": 20.0,
        "epsilon": 0.001,
        "norm": "l1",
    },
    "train": {
        "max_iterations": 500_000,
        "lr": 1e-4,
        "lr_halving_points": [50_000, 100_000, 200_000, 300_000],
        "batch_size": 16,
        "adam_b1": 0.9,
        "adam_b2": 0.999,
        "adam_eps": 1e-8,
        "validate_every": 1000,
        "seed": 0,
        "mode": "single_image",
        "scale": 4,
        "sa": False,
        "warmup_steps": 200,
        "dataset": {
            "n_train": 16,
            "n_val": 4,
            "n_calibration": 32,
            "hr_size": 48,
            "channels": 1,
        },
    },
    "io": {
        "out_dir": ".",
    },
}

_METHOD_ALIASES = {"lv": "local_variance", "local_variance": "local_variance", "canny": "canny"}


def _merge(defaults, given, path):
    if not isinstance(given, dict):
        raise ConfigError(f"section {path or '<root>'} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)} under {path or '<root>'}")
    merged = {}
    for key, default in defaults.items():
        if key in given:
            if isinstance(default, dict):
                merged[key] = _merge(default, given[key], f"{path}.{key}" if path else key)
            else:
                merged[key] = given[key]
        else:
            merged[key] = json.loads(json.dumps(default))  # deep copy
    return merged


def resolve_config(document) -> dict:
    """Validate a (possibly partial) config document against the schema."""
    resolved = _merge(DEFAULTS, document or {}, "")
    # constructing the typed objects performs the domain validation
    edge_config(resolved)
    coefficients(resolved)
    train_config(resolved)
    return resolved


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return resolve_config(document)


def edge_config(resolved) -> EdgeMapConfig:
    e = resolved["edge"]
    method = _METHOD_ALIASES.get(e["method"])
    if method is None:
        raise ConfigError(f"unknown edge method {e['method']!r}")
    return EdgeMapConfig(
        method=method,
        window=WindowSpec(radius=int(e["window_radius"])),
        delta=float(e["delta"]),
        canny_sigma=float(e["sigma"]),
        canny_low=float(e["low"]),
        canny_high=float(e["high"]),
    )


def coefficients(resolved) -> LossCoefficients:
    c = resolved["coeffs"]
    try:
        return LossCoefficients(
            alpha=float(c["alpha"]),
            alpha1=float(c["alpha1"]),
            alpha2=float(c["alpha2"]),
            beta1=float(c["beta1"]),
            beta2=float(c["beta2"]),
            epsilon=float(c["epsilon"]),
            norm=str(c["norm"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def train_config(resolved) -> TrainConfig:
    t = resolved["train"]
    try:
        return TrainConfig(
            max_iterations=int(t["max_iterations"]),
            lr=float(t["lr"]),
            lr_halving_points=tuple(int(p) for p in t["lr_halving_points"]),
            batch_size=int(t["batch_size"]),
            adam_b1=float(t["adam_b1"]),
            adam_b2=float(t["adam_b2"]),
            adam_eps=float(t["adam_eps"]),
            validate_every=int(t["validate_every"]),
            seed=int(t["seed"]),
            mode=str(t["mode"]),
            scale=int(t["scale"]),
            sa=bool(t["sa"]),
            edge_cfg=edge_config(resolved),
            coeffs=coefficients(resolved),
            warmup_steps=int(t["warmup_steps"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def schema_hash() -> str:
    canon = json.dumps(DEFAULTS, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def dumps_17g(obj, indent=2) -> str:
    """JSON text with floats rendered to 17 significant digits."""

    def render(value, depth):
        pad = " " * (indent * depth)
        pad_in = " " * (indent * (depth + 1))
        if isinstance(value, dict):
            if not value:
                return "{}"
            items = ",\n".join(
                f"{pad_in}{json.dumps(str(k))}: {render(v, depth + 1)}" for k, v in value.items()
            )
            return "{\n" + items + "\n" + pad + "}"
        if isinstance(value, (list, tuple)):
            if len(value) == 0:
                return "[]"
            items = ",\n".join(f"{pad_in}{render(v, depth + 1)}" for v in value)
            return "[\n" + items + "\n" + pad + "]"
        if isinstance(value, bool) or value is None:
            return json.dumps(value)
        if isinstance(value, float):
            if value != value or value in (float("inf"), float("-inf")):
                raise ConfigError("non-finite value in JSON output")
            return format(value, ".17g")
        return json.dumps(value)

    return render(obj, 0)
