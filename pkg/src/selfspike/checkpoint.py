"""JSON checkpoints: architecture plus every parameter array.

Layout (flat keys):

    version     format version, currently 1
    spec        architecture dict (widths, per-layer neuron settings)
    W.<i>, b.<i>, raw_tau.<i>, raw_tau_p.<i>   per spiking layer i
    W_out, b_out                               readout

Floats are serialized by json's repr path (shortest round-trip decimal), so
save -> load -> save is value-exact. Loading validates version, spec
integrity, and every array shape before returning, and raises
CheckpointError with enough context to locate the problem.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .engine import LayerParams
from .errors import CheckpointError
from .network import LayerSpec, NetworkSpec, ParamSet
from .neurons import NeuronConfig

CHECKPOINT_VERSION = 1

_CFG_FIELDS = ("kind", "raw_tau", "theta", "v_reset", "reset_mode", "surrogate_k",
               "enhanced", "raw_tau_p", "detach_pred_spike", "tau_p_zero")


def spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "input_width": spec.input_width,
        "timesteps": spec.timesteps,
        "n_classes": spec.n_classes,
        "layers": [{"width": layer.width, **asdict(layer.cfg)} for layer in spec.layers],
    }


def spec_from_dict(d: dict) -> NetworkSpec:
    try:
        layers = []
        for entry in d["layers"]:
            cfg = NeuronConfig(**{k: entry[k] for k in _CFG_FIELDS})
            layers.append(LayerSpec(width=int(entry["width"]), cfg=cfg))
        return NetworkSpec(
            input_width=int(d["input_width"]),
            layers=tuple(layers),
            n_classes=int(d["n_classes"]),
            timesteps=int(d["timesteps"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid spec section: {exc!r}") from exc


def save_checkpoint(path: str, spec: NetworkSpec, params: ParamSet) -> None:
    doc: dict = {"version": CHECKPOINT_VERSION, "spec": spec_to_dict(spec)}
    for i, lp in enumerate(params.layers):
        doc[f"W.{i}"] = lp.W.tolist()
        doc[f"b.{i}"] = lp.b.tolist()
        doc[f"raw_tau.{i}"] = float(lp.raw_tau)
        doc[f"raw_tau_p.{i}"] = float(lp.raw_tau_p)
    doc["W_out"] = params.w_out.tolist()
    doc["b_out"] = params.b_out.tolist()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _array(doc: dict, key: str, shape: tuple[int, ...]) -> np.ndarray:
    if key not in doc:
        raise CheckpointError(f"checkpoint is missing key {key!r}")
    try:
        arr = np.asarray(doc[key], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"key {key!r} is not a numeric array: {exc}") from exc
    if arr.shape != shape:
        raise CheckpointError(f"key {key!r} has shape {arr.shape}, expected {shape}")
    return arr


def load_checkpoint(path: str) -> tuple[NetworkSpec, ParamSet]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(
            f"checkpoint {path} is not valid JSON "
            f"(line {exc.lineno}, column {exc.colno}): {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError(f"checkpoint {path} must be a JSON object")
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version!r} "
            f"(this build reads version {CHECKPOINT_VERSION})")
    if "spec" not in doc:
        raise CheckpointError("checkpoint is missing the spec section")
    spec = spec_from_dict(doc["spec"])

    layers = []
    for i, (fan_in, fan_out) in enumerate(spec.layer_widths()):
        W = _array(doc, f"W.{i}", (fan_out, fan_in))
        b = _array(doc, f"b.{i}", (fan_out,))
        for key in (f"raw_tau.{i}", f"raw_tau_p.{i}"):
            if key not in doc:
                raise CheckpointError(f"checkpoint is missing key {key!r}")
            if not isinstance(doc[key], (int, float)):
                raise CheckpointError(f"key {key!r} must be a number")
        layers.append(LayerParams(W=W, b=b, raw_tau=float(doc[f"raw_tau.{i}"]),
                                  raw_tau_p=float(doc[f"raw_tau_p.{i}"])))
    last = spec.layers[-1].width
    w_out = _array(doc, "W_out", (spec.n_classes, last))
    b_out = _array(doc, "b_out", (spec.n_classes,))
    return spec, ParamSet(layers=layers, w_out=w_out, b_out=b_out)
