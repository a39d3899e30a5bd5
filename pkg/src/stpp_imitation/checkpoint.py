"""Versioned JSON checkpoints for generator and baseline parameters."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import BaselineParams
from .events import ScalingTransform
from .generator import GeneratorParams

FORMAT_VERSION = 1


def _weights_to_json(weights: dict[str, np.ndarray]) -> dict:
    return {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in weights.items()}


def _weights_from_json(d: dict) -> dict[str, np.ndarray]:
    return {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in d.items()}


def checkpoint_dict(params: GeneratorParams | BaselineParams, scaling: ScalingTransform | None = None,
                    extra: dict | None = None) -> dict:
    if isinstance(params, GeneratorParams):
        model = "generator"
        dims = {"hidden": params.hidden, "mlp_hidden": params.mlp_hidden, "noise_dim": params.noise_dim,
                "feature_dim": params.feature_dim}
    elif isinstance(params, BaselineParams):
        model = "baseline"
        dims = {"hidden": params.hidden, "feature_dim": params.feature_dim}
    else:
        raise TypeError(f"cannot checkpoint {type(params).__name__}")
    return {
        "format_version": FORMAT_VERSION,
        "version": __version__,
        "model": model,
        "mode": params.mode,
        "dims": dims,
        "feature_schema": list(params.feature_names),
        "scaling": None if scaling is None else scaling.to_dict(),
        "weights": _weights_to_json(params.weights),
        "extra": extra or {},
    }


def save_checkpoint(path: str | Path, params, scaling: ScalingTransform | None = None, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_dict(params, scaling, extra)))


def params_from_dict(d: dict):
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {d.get('format_version')!r}")
    w = _weights_from_json(d["weights"])
    dims, names = d["dims"], tuple(d.get("feature_schema", ()))
    if d["model"] == "generator":
        return GeneratorParams(d["mode"], dims["hidden"], dims["mlp_hidden"], dims["noise_dim"],
                               dims["feature_dim"], w, names)
    if d["model"] == "baseline":
        return BaselineParams(d["mode"], dims["hidden"], dims["feature_dim"], w, names)
    raise ValueError(f"unknown model tag {d['model']!r}")


def load_checkpoint(path: str | Path):
    """Return ``(params, scaling or None, extra)``."""
    d = json.loads(Path(path).read_text())
    scaling = None if d.get("scaling") is None else ScalingTransform.from_dict(d["scaling"])
    return params_from_dict(d), scaling, d.get("extra", {})
