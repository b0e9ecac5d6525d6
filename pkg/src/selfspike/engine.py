"""Layer-level sequence forward pass and hand-rolled backprop through time.

Tensors are time-major: (T, B, n) for a layer of n neurons over T steps and
batch B. The forward pass caches everything the backward pass needs in a
LayerTrace. The backward pass walks t = T..1 with two running accumulators
per element:

    g_m[t] = dL/dm[t]   (membrane potential)
    g_p[t] = dL/dm_p[t] (prediction current, enhanced mode only)

Gradient conventions (these define the model's backward semantics, and the
finite-difference harness checks them exactly):

  * The binary spike is differentiated through the sigmoid surrogate
    whenever the spike feeds the loss, the next layer, or (in kept mode)
    the prediction error.
  * The spike occurrence inside the reset is a constant: the hard reset
    contributes d v/d m = 1 - s[t], the soft reset d v/d m = 1.
  * The clif reset subtrahend s (theta + sigmoid(m_c)) is a constant as a
    whole, so d v/d m = 1 and the complementary state carries no gradient.
  * detach_pred_spike additionally treats the spike inside the prediction
    error as a constant; kept mode adds the term g_p * (-tau_p * inv_tau)
    to the spike's upstream gradient. This single term is the only
    difference between the two conventions.

Recursion, per step t (from T down to 1), with a = inv_tau:

    g_p[t] = g_m[t+1] * in_scale + g_p[t+1] * (1 - tau_p)
    e[t]   = dL/ds_ext[t] (+ g_p[t] * (-tau_p * a) in kept mode)
    g_m[t] = e[t] * sg[t] + g_m[t+1] * d m[t+1]/d m[t]
    dx[t]  = g_m[t] * in_scale + g_p[t] * tau_p

where in_scale = d m/d I (a for lif/plif, 1 for if/clif), sg is the
surrogate slope, and d m[t+1]/d m[t] = leak * reset_factor. g_p[t] must be
formed before g_m[t]: it consumes g_m[t+1], and g_m[t] consumes g_p[t].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import affine_rows
from .neurons import (
    CLIF,
    HARD,
    IF,
    LIF,
    PLIF,
    NeuronConfig,
    heaviside,
    inv_tau_of,
    relaxed_spike,
    sigmoid,
    surrogate_grad,
    tau_p_of,
)


@dataclass
class LayerParams:
    """Live trainable values for one layer (config holds the initial ones)."""

    W: np.ndarray  # (n, n_in)
    b: np.ndarray  # (n,)
    raw_tau: float = 0.0
    raw_tau_p: float = 0.0


@dataclass(frozen=True)
class BackwardFlags:
    """Mode switches threaded through forward and backward.

    Normally derived from the layer config; the gradient checker overrides
    them to probe a convention independently of the config.
    """

    enhanced: bool = False
    detach_pred_spike: bool = False
    relaxed: bool = False

    @classmethod
    def from_config(cls, cfg: NeuronConfig, relaxed: bool = False) -> "BackwardFlags":
        return cls(enhanced=cfg.enhanced, detach_pred_spike=cfg.detach_pred_spike,
                   relaxed=relaxed)


@dataclass
class LayerTrace:
    """Forward cache for one layer: everything backward needs, time-major."""

    cfg: NeuronConfig
    params: LayerParams
    flags: BackwardFlags
    inputs: np.ndarray  # (T, B, n_in) upstream activity
    x: np.ndarray       # (T, B, n) affine drive W inputs + b
    I: np.ndarray       # drive plus prediction current
    m: np.ndarray       # pre-spike membrane
    s: np.ndarray       # spike (binary, or sigmoid in relaxed mode)
    v: np.ndarray       # post-reset membrane
    m_p: np.ndarray | None = None  # prediction current after its update
    err: np.ndarray | None = None
    m_c: np.ndarray | None = None  # clif complementary state


@dataclass
class LayerGrads:
    """Backward products for one layer."""

    dW: np.ndarray
    db: np.ndarray
    d_raw_tau: float
    d_raw_tau_p: float
    d_in: np.ndarray  # (T, B, n_in) gradient w.r.t. the layer inputs


def forward_layer(
    cfg: NeuronConfig,
    params: LayerParams,
    inputs: np.ndarray,
    flags: BackwardFlags | None = None,
) -> LayerTrace:
    """Run one layer over a full sequence.

    Args:
        cfg: layer structure.
        params: live weights and raw time constants.
        inputs: (T, B, n_in) upstream spikes or input frames.
        flags: mode switches; defaults to the config's own.

    Returns:
        The complete forward trace.
    """
    if flags is None:
        flags = BackwardFlags.from_config(cfg)
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3:
        raise ValueError(f"inputs must be (T, B, n_in), got shape {inputs.shape}")
    T, B, n_in = inputs.shape
    n = params.W.shape[0]
    if params.W.shape != (n, n_in):
        raise ValueError(f"weight shape {params.W.shape} does not match input width {n_in}")

    a = inv_tau_of(cfg.kind, params.raw_tau)
    tau_p = tau_p_of(params.raw_tau_p, cfg.tau_p_zero)

    # one affine map for the whole sequence, with pinned reduction order
    x = affine_rows(inputs.reshape(T * B, n_in), params.W, params.b).reshape(T, B, n)

    I = np.empty((T, B, n))
    m = np.empty((T, B, n))
    s = np.empty((T, B, n))
    v = np.empty((T, B, n))
    m_p = np.empty((T, B, n)) if flags.enhanced else None
    err = np.empty((T, B, n)) if flags.enhanced else None
    m_c = np.empty((T, B, n)) if cfg.kind == CLIF else None

    v_prev = np.zeros((B, n))
    m_p_prev = np.zeros((B, n))
    m_c_prev = np.zeros((B, n))
    for t in range(T):
        cur = x[t] + m_p_prev if flags.enhanced else x[t]
        if cfg.kind == IF:
            m_t = v_prev + cur
        elif cfg.kind == CLIF:
            m_t = (1.0 - a) * v_prev + cur
        else:
            m_t = (1.0 - a) * v_prev + a * cur
        if flags.relaxed:
            s_t = relaxed_spike(m_t, cfg.theta, cfg.surrogate_k)
        else:
            s_t = heaviside(m_t, cfg.theta)
        if cfg.kind == CLIF:
            m_c_t = m_c_prev * sigmoid(a * m_t) + s_t
            v_t = m_t - s_t * (cfg.theta + sigmoid(m_c_t))
            m_c[t] = m_c_t
            m_c_prev = m_c_t
        elif cfg.reset_mode == HARD:
            # fired entries snap exactly to v_reset (see reset_potential)
            v_t = np.where(s_t == 1.0, cfg.v_reset,
                           m_t - s_t * (m_t - cfg.v_reset))
        else:
            v_t = m_t - cfg.theta * s_t
        if flags.enhanced:
            err_t = x[t] - s_t * a
            m_p_t = (1.0 - tau_p) * m_p_prev + tau_p * err_t
            err[t] = err_t
            m_p[t] = m_p_t
            m_p_prev = m_p_t
        I[t], m[t], s[t], v[t] = cur, m_t, s_t, v_t
        v_prev = v_t

    return LayerTrace(cfg=cfg, params=params, flags=flags, inputs=inputs,
                      x=x, I=I, m=m, s=s, v=v, m_p=m_p, err=err, m_c=m_c)


def _shifted_prev(arr: np.ndarray) -> np.ndarray:
    """arr[t-1] along axis 0, with a zero row for t = 0 (zero initial state)."""
    prev = np.empty_like(arr)
    prev[0] = 0.0
    prev[1:] = arr[:-1]
    return prev


def backward_layer(
    trace: LayerTrace,
    dL_ds_ext: np.ndarray,
    flags: BackwardFlags | None = None,
) -> LayerGrads:
    """Backprop through time for one layer.

    Args:
        trace: forward cache from ``forward_layer``.
        dL_ds_ext: (T, B, n) loss gradient w.r.t. this layer's emitted
            spikes, from the readout and/or the downstream layer.
        flags: override of the trace's flags (used by the gradient checker
            to force a backward convention); forward-relevant fields must
            match the trace.

    Returns:
        Parameter gradients and the gradient w.r.t. the layer inputs.
    """
    if flags is None:
        flags = trace.flags
    cfg = trace.cfg
    params = trace.params
    T, B, n = trace.m.shape

    a = inv_tau_of(cfg.kind, params.raw_tau)
    tau_p = tau_p_of(params.raw_tau_p, cfg.tau_p_zero)
    in_scale = a if cfg.kind in (LIF, PLIF) else 1.0
    leak = 1.0 if cfg.kind == IF else 1.0 - a
    # with tau_p pinned to zero every prediction pathway is an exact zero,
    # so drop it and reproduce the plain neuron's gradients bit for bit
    enh = flags.enhanced and tau_p != 0.0

    sg = surrogate_grad(trace.m, cfg.theta, cfg.surrogate_k)
    if cfg.kind == CLIF or cfg.reset_mode != HARD:
        mm = np.broadcast_to(np.float64(leak), (T, B, n))
    else:
        mm = leak * (1.0 - trace.s)

    dx = np.empty((T, B, n))
    g_m_next = np.zeros((B, n))
    g_p_next = np.zeros((B, n))
    d_a_acc = 0.0
    d_tau_p_acc = 0.0
    v_prev = _shifted_prev(trace.v) if cfg.kind == PLIF else None
    m_p_prev = _shifted_prev(trace.m_p) if enh else None

    for t in range(T - 1, -1, -1):
        if enh:
            g_p = g_m_next * in_scale + g_p_next * (1.0 - tau_p)
            e = dL_ds_ext[t]
            if not flags.detach_pred_spike:
                e = e + g_p * (-tau_p * a)
        else:
            g_p = None
            e = dL_ds_ext[t]
        g_m = e * sg[t] + g_m_next * mm[t]
        dx_t = g_m * in_scale
        if enh:
            dx_t = dx_t + g_p * tau_p
        dx[t] = dx_t
        if cfg.kind == PLIF:
            d_a_acc += float((g_m * (trace.I[t] - v_prev[t])).sum())
            if enh:
                d_a_acc += float((g_p * (-tau_p * trace.s[t])).sum())
        if enh:
            d_tau_p_acc += float((g_p * (trace.err[t] - m_p_prev[t])).sum())
            g_p_next = g_p
        g_m_next = g_m

    n_in = trace.inputs.shape[2]
    dW = dx.reshape(T * B, n).T @ trace.inputs.reshape(T * B, n_in)
    db = dx.sum(axis=(0, 1))
    d_in = (dx.reshape(T * B, n) @ params.W).reshape(T, B, n_in)

    if cfg.kind == PLIF:
        d_raw_tau = d_a_acc * a * (1.0 - a)  # chain through 1/tau = sigmoid(raw_tau)
    else:
        d_raw_tau = 0.0
    if enh and not cfg.tau_p_zero:
        d_raw_tau_p = d_tau_p_acc * tau_p * (1.0 - tau_p)
    else:
        d_raw_tau_p = 0.0

    return LayerGrads(dW=dW, db=db, d_raw_tau=d_raw_tau,
                      d_raw_tau_p=d_raw_tau_p, d_in=d_in)
