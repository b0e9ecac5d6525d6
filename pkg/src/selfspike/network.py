"""Whole-network forward, loss, gradients, and parameter bookkeeping.

A network is a stack of spiking layers followed by a non-spiking readout:
logits are the time average of an affine map of the last layer's spikes,

    logits = (1/T) sum_t (W_out s_L[t] + b_out)

so every timestep receives the same readout gradient dlogits W_out / T.
Training loss is batch-mean softmax cross-entropy.

ParamSet doubles as the gradient container (same shapes, same flattening),
which keeps the optimizer and the finite-difference harness on one layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import BackwardFlags, LayerParams, LayerTrace, backward_layer, forward_layer
from .errors import ConfigError
from .linalg import affine_rows, softmax_xent
from .neurons import PLIF, NeuronConfig
from .rng import Rng


@dataclass(frozen=True)
class LayerSpec:
    width: int
    cfg: NeuronConfig


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: input width, spiking layers, readout classes, steps."""

    input_width: int
    layers: tuple[LayerSpec, ...]
    n_classes: int
    timesteps: int

    def __post_init__(self):
        if self.input_width <= 0 or self.n_classes <= 1 or self.timesteps <= 0:
            raise ConfigError(
                f"bad network shape: input_width={self.input_width}, "
                f"n_classes={self.n_classes}, timesteps={self.timesteps}")
        if not self.layers:
            raise ConfigError("network needs at least one spiking layer")
        for i, layer in enumerate(self.layers):
            if layer.width <= 0:
                raise ConfigError(f"layer {i} width must be positive, got {layer.width}")

    def layer_widths(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per spiking layer."""
        widths = []
        fan_in = self.input_width
        for layer in self.layers:
            widths.append((fan_in, layer.width))
            fan_in = layer.width
        return widths


@dataclass
class ParamSet:
    """All trainable values; also used with gradient semantics."""

    layers: list[LayerParams]
    w_out: np.ndarray  # (n_classes, last_width)
    b_out: np.ndarray  # (n_classes,)


def init_params(spec: NetworkSpec, rng: Rng) -> ParamSet:
    """Glorot-uniform weights, zero biases, raw time constants from config."""
    layers = []
    for (fan_in, fan_out), layer in zip(spec.layer_widths(), spec.layers):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform_array(fan_out * fan_in, -bound, bound).reshape(fan_out, fan_in)
        layers.append(LayerParams(
            W=W,
            b=np.zeros(fan_out),
            raw_tau=layer.cfg.raw_tau,
            raw_tau_p=layer.cfg.raw_tau_p,
        ))
    last = spec.layers[-1].width
    bound = np.sqrt(6.0 / (last + spec.n_classes))
    w_out = rng.uniform_array(spec.n_classes * last, -bound, bound).reshape(spec.n_classes, last)
    return ParamSet(layers=layers, w_out=w_out, b_out=np.zeros(spec.n_classes))


def _check_batch(spec: NetworkSpec, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"X must be (batch, timesteps, width), got shape {X.shape}")
    if X.shape[1] != spec.timesteps or X.shape[2] != spec.input_width:
        raise ValueError(
            f"X shape {X.shape[1:]} does not match network "
            f"(timesteps={spec.timesteps}, input_width={spec.input_width})")
    return X


def forward_network(
    spec: NetworkSpec,
    params: ParamSet,
    X: np.ndarray,
    relaxed: bool = False,
) -> tuple[np.ndarray, list[LayerTrace]]:
    """Full forward pass.

    Args:
        X: (batch, timesteps, input_width) frames.

    Returns:
        (logits (batch, n_classes), per-layer traces).
    """
    X = _check_batch(spec, X)
    seq = np.ascontiguousarray(X.transpose(1, 0, 2))  # time-major
    traces = []
    for layer, lp in zip(spec.layers, params.layers):
        flags = BackwardFlags.from_config(layer.cfg, relaxed=relaxed)
        trace = forward_layer(layer.cfg, lp, seq, flags)
        traces.append(trace)
        seq = trace.s
    T, B, n = seq.shape
    acc = np.zeros((B, spec.n_classes))
    for t in range(T):
        acc += affine_rows(seq[t], params.w_out, params.b_out)
    logits = acc / T
    return logits, traces


def predict_logits(spec: NetworkSpec, params: ParamSet, X: np.ndarray) -> np.ndarray:
    logits, _ = forward_network(spec, params, X)
    return logits


def loss_and_grads(
    spec: NetworkSpec,
    params: ParamSet,
    X: np.ndarray,
    y: np.ndarray,
    relaxed: bool = False,
    return_logits: bool = False,
    flag_overrides: list[BackwardFlags] | None = None,
):
    """Batch-mean cross-entropy loss and gradients for every parameter.

    flag_overrides, when given, replaces each layer's backward flags (the
    gradient checker uses this to force a convention); forward always runs
    with the configs' own flags plus the relaxed switch.

    Returns:
        (loss, GradSet) or (loss, GradSet, logits).
    """
    logits, traces = forward_network(spec, params, X, relaxed=relaxed)
    loss, dlogits = softmax_xent(logits, y)

    T = spec.timesteps
    last_s = traces[-1].s
    s_sum = last_s.sum(axis=0)  # (B, n)
    gw_out = dlogits.T @ s_sum / T
    gb_out = dlogits.sum(axis=0)
    ds = np.broadcast_to(dlogits @ params.w_out / T, last_s.shape)

    glayers: list[LayerParams | None] = [None] * len(traces)
    for i in range(len(traces) - 1, -1, -1):
        flags = flag_overrides[i] if flag_overrides is not None else None
        lg = backward_layer(traces[i], ds, flags)
        glayers[i] = LayerParams(W=lg.dW, b=lg.db, raw_tau=lg.d_raw_tau,
                                 raw_tau_p=lg.d_raw_tau_p)
        ds = lg.d_in
    grads = ParamSet(layers=glayers, w_out=gw_out, b_out=gb_out)
    if return_logits:
        return loss, grads, logits
    return loss, grads


def trainable_blocks(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...] | None]]:
    """Names and shapes of trainable blocks, in flattening order.

    Shape None marks a scalar. raw_tau trains only for plif layers;
    raw_tau_p only for enhanced layers whose prediction gain is not pinned.
    """
    blocks: list[tuple[str, tuple[int, ...] | None]] = []
    for i, ((fan_in, fan_out), layer) in enumerate(zip(spec.layer_widths(), spec.layers)):
        blocks.append((f"layers[{i}].W", (fan_out, fan_in)))
        blocks.append((f"layers[{i}].b", (fan_out,)))
        if layer.cfg.kind == PLIF:
            blocks.append((f"layers[{i}].raw_tau", None))
        if layer.cfg.enhanced and not layer.cfg.tau_p_zero:
            blocks.append((f"layers[{i}].raw_tau_p", None))
    last = spec.layers[-1].width
    blocks.append(("w_out", (spec.n_classes, last)))
    blocks.append(("b_out", (spec.n_classes,)))
    return blocks


def _block_value(params: ParamSet, name: str):
    if name == "w_out":
        return params.w_out
    if name == "b_out":
        return params.b_out
    idx = int(name[name.index("[") + 1:name.index("]")])
    attr = name.split(".", 1)[1]
    return getattr(params.layers[idx], attr)


def params_to_vector(spec: NetworkSpec, params: ParamSet) -> np.ndarray:
    """Flatten the trainable blocks into one float64 vector."""
    parts = []
    for name, shape in trainable_blocks(spec):
        val = _block_value(params, name)
        parts.append(np.atleast_1d(np.asarray(val, dtype=np.float64)).ravel())
    return np.concatenate(parts)


def vector_to_params(spec: NetworkSpec, vec: np.ndarray, template: ParamSet) -> ParamSet:
    """Rebuild a ParamSet from a flat vector, copying non-trainables from
    the template (which is never mutated)."""
    vec = np.asarray(vec, dtype=np.float64)
    layers = [LayerParams(W=lp.W, b=lp.b, raw_tau=lp.raw_tau, raw_tau_p=lp.raw_tau_p)
              for lp in template.layers]
    out = ParamSet(layers=layers, w_out=template.w_out, b_out=template.b_out)
    pos = 0
    for name, shape in trainable_blocks(spec):
        size = 1 if shape is None else int(np.prod(shape))
        chunk = vec[pos:pos + size]
        pos += size
        value = float(chunk[0]) if shape is None else chunk.reshape(shape).copy()
        if name == "w_out":
            out.w_out = value
        elif name == "b_out":
            out.b_out = value
        else:
            idx = int(name[name.index("[") + 1:name.index("]")])
            attr = name.split(".", 1)[1]
            setattr(out.layers[idx], attr, value)
    if pos != vec.size:
        raise ValueError(f"vector length {vec.size} does not match spec ({pos} needed)")
    return out
