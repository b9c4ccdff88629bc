"""Namespaced run configuration with defaults, deep-merge and validation.

A config is a nested dict of plain JSON types.  Unknown keys are rejected so
that a resolved ``config.json`` is always sufficient to reproduce a run.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

from .errors import ValidationError

DEFAULTS: dict[str, Any] = {
    "enc": {
        # Sinusoidal feature levels for position / time inputs.
        "pos_levels": 6,
        "time_levels": 4,
        "include_input": True,
    },
    "net": {
        "temp_hidden": [64, 64, 64],
        "head_hidden": [32, 32],
        # Temperature head range = scene temp_range widened by this margin.
        "temp_margin_k": 20.0,
        "e_eps": 1e-6,
        "c_max": 50.0,
        "c_scale": 10.0,
        "h_min": 1000.0,
        "h_scale": 200000.0,
    },
    "thermo": {
        "substeps": 32,
    },
    "raster": {
        "alpha_min": 1.0 / 255.0,
        "transmittance_min": 1e-4,
        # None -> midpoint of the scene temp_range.
        "background_c": None,
        "near_plane": 0.01,
        "guard_band": 1.3,
        "sigma_cutoff": 3.5,
    },
    "loss": {
        "lambda1": 0.8,
        "lambda2": 0.2,
        "lambda3": 10.0,
        # How the two rendered-image terms combine in stage 2: sum | mean.
        "stage2_combine": "sum",
        "explicit_consistency": False,
        "consistency_weight": 1.0,
    },
    "train": {
        "stage1_iters": 20000,
        "stage2_iters": 20000,
        "lr_net": 1e-3,
        "lr_opacity": 1e-2,
        "lr_rotscale": 1e-3,
        "lr_schedule": "cosine",
        "lr_floor_frac": 0.05,
        "seed": 0,
        # Directory produced by the synth command (scene + captures).
        "data": None,
        "threads": None,
    },
    "synth": {
        "rows": 8,
        "cols": 8,
        "pitch": 2.0,
        "jitter_frac": 0.15,
        "scale_xy_frac": 0.55,
        "scale_z": 0.3,
        "opacity": 0.9,
        # checker | split | rows, or an explicit per-cell material index list.
        "pattern": "checker",
        "materials": [
            {
                "name": "asphalt",
                "emissivity": 0.95,
                "convective_coeff": 4.0,
                "heat_capacity": 1.1e6,
                "initial_temp_c": 30.0,
            },
            {
                "name": "roof",
                "emissivity": 0.70,
                "convective_coeff": 16.0,
                "heat_capacity": 6.0e5,
                "initial_temp_c": 24.0,
            },
        ],
        "feature_dim": 8,
        "cameras": {
            "count": 4,
            "altitude": 18.0,
            "radius": 8.0,
            "focal_px": 60.0,
            "width": 64,
            "height": 64,
        },
        "timestamps_train": [0.0, 21600.0],
        "timestamps_test": [7200.0, 14400.0],
        "noise_sigma_c": 0.1,
        "seed": 0,
        "ambient_knots_c": [[0.0, 12.0], [21600.0, 6.0]],
        "temp_range_c": [0.0, 35.0],
    },
    "predict": {
        # Query times in seconds; None -> the capture timestamps.
        "times": None,
        "substeps": None,
        "gaussian_ids": None,
        "run": None,
    },
    "eval": {
        # auto: integral when a stage-2 checkpoint exists, else direct.
        "source": "auto",
        "run": None,
        "write_renders": False,
    },
    "render": {
        "run": None,
        "times": None,
        "views": None,
        "source": "auto",
    },
}


def deep_merge(base: dict, override: dict, path: str = "") -> dict:
    """Merge ``override`` into ``base`` recursively, rejecting unknown keys."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ValidationError(f"unknown config key '{here}'")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = deep_merge(base[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(user: dict | None = None) -> dict:
    """Return DEFAULTS overlaid with ``user``."""
    if user is None:
        return copy.deepcopy(DEFAULTS)
    if not isinstance(user, dict):
        raise ValidationError("config root must be a JSON object")
    return deep_merge(DEFAULTS, user)


def load_config(path: str | Path) -> dict:
    """Load a JSON config file and resolve it against the defaults."""
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        user = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {p} is not valid JSON: {exc}") from exc
    return resolve_config(user)


def save_config(cfg: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def flatten(cfg: dict, prefix: str = "") -> list[tuple[str, Any]]:
    """Flatten a nested config into sorted (dotted-key, value) pairs."""
    items: list[tuple[str, Any]] = []
    for key in sorted(cfg):
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(cfg[key], dict):
            items.extend(flatten(cfg[key], dotted))
        else:
            items.append((dotted, cfg[key]))
    return items
