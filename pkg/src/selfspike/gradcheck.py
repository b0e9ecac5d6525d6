"""Finite-difference validation of the backward pass.

Central differences can only certify the gradient of a function that is
actually differentiable and whose detached occurrences do not move under
perturbation. Both conditions are arranged explicitly:

  * the network runs in relaxed mode (sigmoid spikes), and
  * a twin of the relaxed forward is evaluated with the base run's spike
    values substituted as constants exactly where the backward pass
    detaches them: the spike inside every reset, the whole clif reset
    subtrahend, and (under detach_pred_spike) the spike inside the
    prediction error.

The twin is a deliberately independent straight-line reimplementation of
the forward pass (per-step affine maps, its own loss), and it runs in
extended precision: with float64 arithmetic the difference quotient's
cancellation noise (~1e-11 absolute at h = 1e-5) would swamp gradient
components near the 1e-8 relative-error floor, flagging a correct backward
pass. At the base point the twin must agree with the production loss to
~1e-11; its central differences are then compared against the analytic
gradients component by component with
rel_err = |a - b| / max(|a|, |b|, 1e-8).

The report grid covers every neuron kind x reset mode x
{baseline, enhanced-kept, enhanced-detached}; requested configurations are
dealt round-robin over the 24 cells, each with freshly randomized shapes,
parameters, and data.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import BackwardFlags
from .neurons import CLIF, HARD, IF, LIF, NEURON_KINDS, PLIF, SOFT, NeuronConfig
from .network import (
    LayerSpec,
    NetworkSpec,
    init_params,
    loss_and_grads,
    params_to_vector,
    vector_to_params,
)
from .rng import Rng

FD_STEP = 1e-5
REL_FLOOR = 1e-8
CONSISTENCY_TOL = 1e-11

# wide accumulation dtype for the twin: 80-bit on x86, falls back gracefully
_WIDE = np.longdouble


def rel_err(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_FLOOR)


def _sig(x):
    """Stable logistic that preserves the input dtype (unlike the production
    sigmoid, which pins float64)."""
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def finite_diff(f, vec: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    The quotient uses the actually realized step up[i] - down[i] (equal to
    2h up to representation) and inherits the dtype of f's return value, so
    an extended-precision loss yields an extended-precision quotient.
    """
    vec = np.asarray(vec, dtype=np.float64)
    grad = np.empty_like(vec)
    for i in range(vec.size):
        up = vec.copy()
        up[i] += h
        down = vec.copy()
        down[i] -= h
        grad[i] = (f(up) - f(down)) / _WIDE(up[i] - down[i])
    return grad


def _twin_loss(
    spec: NetworkSpec,
    params,
    X: np.ndarray,
    y: np.ndarray,
    detach_pred_spike: bool,
    frozen: list[dict] | None,
    record: list[dict] | None = None,
):
    """Relaxed forward + loss, straight-line, with optional frozen spikes.

    With frozen=None the run is fully live; pass a list to ``record`` to
    capture the per-layer spike values (and clif reset subtrahends) that a
    later frozen run substitutes. All arithmetic is extended precision so
    the central-difference numerator stays meaningful for tiny gradients.
    """
    B, T, _ = X.shape
    one = _WIDE(1.0)
    seq = [X[:, t, :].astype(_WIDE) for t in range(T)]
    for li, (layer, lp) in enumerate(zip(spec.layers, params.layers)):
        cfg = layer.cfg
        a = one if cfg.kind == IF else _sig(_WIDE(lp.raw_tau))
        tau_p = _WIDE(0.0) if cfg.tau_p_zero else _sig(_WIDE(lp.raw_tau_p))
        k = _WIDE(cfg.surrogate_k)
        theta = _WIDE(cfg.theta)
        v_reset = _WIDE(cfg.v_reset)
        W = lp.W.astype(_WIDE)
        b = lp.b.astype(_WIDE)
        n = layer.width
        v = np.zeros((B, n), dtype=_WIDE)
        m_p = np.zeros((B, n), dtype=_WIDE)
        m_c = np.zeros((B, n), dtype=_WIDE)
        lf = frozen[li] if frozen is not None else None
        rec = {"s": [], "R": []} if record is not None else None
        out = []
        for t in range(T):
            x_t = seq[t] @ W.T + b
            cur = x_t + m_p if cfg.enhanced else x_t
            if cfg.kind == IF:
                m = v + cur
            elif cfg.kind == CLIF:
                m = (one - a) * v + cur
            else:
                m = (one - a) * v + a * cur
            s_live = _sig(k * (m - theta))
            s_reset = lf["s"][t] if lf is not None else s_live
            if cfg.kind == CLIF:
                if lf is not None:
                    v = m - lf["R"][t]
                else:
                    m_c = m_c * _sig(a * m) + s_live
                    R = s_live * (theta + _sig(m_c))
                    v = m - R
                    if rec is not None:
                        rec["R"].append(R)
            elif cfg.reset_mode == HARD:
                v = m - s_reset * (m - v_reset)
            else:
                v = m - theta * s_reset
            if cfg.enhanced:
                s_err = s_reset if detach_pred_spike else s_live
                err = x_t - s_err * a
                m_p = (one - tau_p) * m_p + tau_p * err
            if rec is not None:
                rec["s"].append(s_live)
            out.append(s_live)
        if record is not None:
            record.append(rec)
        seq = out

    acc = np.zeros((B, spec.n_classes), dtype=_WIDE)
    w_out = params.w_out.astype(_WIDE)
    b_out = params.b_out.astype(_WIDE)
    for t in range(T):
        acc = acc + (seq[t] @ w_out.T + b_out)
    logits = acc / _WIDE(T)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(B), y]
    return (lse - picked).mean()


_VARIANTS = ("baseline", "kept", "detached")
GRID = tuple(
    (kind, reset, variant)
    for kind in NEURON_KINDS
    for reset in (HARD, SOFT)
    for variant in _VARIANTS
)


@dataclass
class GradcheckRow:
    kind: str
    reset_mode: str
    enhanced: bool
    detached: bool
    n_configs: int
    max_rel_err: float
    passed: bool

    def format(self) -> str:
        return (f"{self.kind},{self.reset_mode},{int(self.enhanced)},"
                f"{int(self.detached)},{self.max_rel_err:.3e},"
                f"{'pass' if self.passed else 'FAIL'}")


@dataclass
class GradcheckReport:
    rows: list[GradcheckRow]
    n_configs: int
    tolerance: float

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)


def worker_count() -> int:
    """Thread cap from SELFSPIKE_THREADS (default 1, never numerics-level)."""
    raw = os.environ.get("SELFSPIKE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _random_config(rng: Rng, kind: str, reset: str, variant: str):
    enhanced = variant != "baseline"
    cfg = NeuronConfig(
        kind=kind,
        reset_mode=reset,
        theta=1.0,
        v_reset=rng.uniform(-0.3, 0.3) if reset == HARD else 0.0,
        surrogate_k=rng.uniform(2.0, 6.0),
        enhanced=enhanced,
        detach_pred_spike=(variant == "detached"),
    )
    input_width = 3 + rng.below(6)
    n_layers = 1 + rng.below(2)
    widths = [3 + rng.below(6) for _ in range(n_layers)]
    n_classes = 2 + rng.below(3)
    T = 2 + rng.below(5)
    B = 2
    spec = NetworkSpec(
        input_width=input_width,
        layers=tuple(LayerSpec(width=w, cfg=cfg) for w in widths),
        n_classes=n_classes,
        timesteps=T,
    )
    params = init_params(spec, rng)
    for lp in params.layers:
        lp.b = rng.uniform_array(lp.b.size, -0.5, 0.5)
        lp.raw_tau = rng.uniform(-1.0, 1.0)
        lp.raw_tau_p = rng.uniform(-1.0, 1.0)
    X = rng.uniform_array(B * T * input_width, -1.0, 1.5).reshape(B, T, input_width)
    y = np.array([rng.below(n_classes) for _ in range(B)], dtype=np.int64)
    return spec, params, X, y


def check_one(
    seed: int,
    kind: str,
    reset: str,
    variant: str,
    mutate_drop_kept_term: bool = False,
) -> float:
    """Max relative error between analytic and finite-difference gradients
    for one randomized configuration. Raises on base-point disagreement
    between the production loss and the twin."""
    rng = Rng(seed)
    spec, params, X, y = _random_config(rng, kind, reset, variant)
    detach = variant == "detached"

    overrides = None
    if mutate_drop_kept_term and variant == "kept":
        # force the backward convention that lacks the prediction-spike term
        overrides = [BackwardFlags(enhanced=True, detach_pred_spike=True, relaxed=True)
                     for _ in spec.layers]
    loss, grads = loss_and_grads(spec, params, X, y, relaxed=True,
                                 flag_overrides=overrides)
    analytic = params_to_vector(spec, grads)

    record: list[dict] = []
    base_twin = float(_twin_loss(spec, params, X, y, detach, frozen=None, record=record))
    scale = max(1.0, abs(loss))
    if abs(loss - base_twin) > CONSISTENCY_TOL * scale:
        raise AssertionError(
            f"forward/twin disagree at base point: {loss!r} vs {base_twin!r} "
            f"({kind},{reset},{variant},seed={seed})")

    base_vec = params_to_vector(spec, params)

    def frozen_loss(vec: np.ndarray) -> float:
        p = vector_to_params(spec, vec, params)
        return _twin_loss(spec, p, X, y, detach, frozen=record)

    fd = finite_diff(frozen_loss, base_vec)
    return float(rel_err(analytic, fd).max())


def gradcheck_report(
    n_configs: int = 100,
    tolerance: float = 1e-4,
    seed: int = 0,
    threads: int | None = None,
    mutate_drop_kept_term: bool = False,
) -> GradcheckReport:
    """Round-robin randomized gradient checks over the full mode grid."""
    if n_configs < len(GRID):
        raise ValueError(
            f"need at least {len(GRID)} configurations to cover the grid, got {n_configs}")
    jobs = []
    for i in range(n_configs):
        kind, reset, variant = GRID[i % len(GRID)]
        jobs.append((Rng(seed).derive(1000 + i).next_u64(), kind, reset, variant))

    def run(job):
        s, kind, reset, variant = job
        return check_one(s, kind, reset, variant, mutate_drop_kept_term)

    workers = worker_count() if threads is None else max(1, threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            errs = list(pool.map(run, jobs))
    else:
        errs = [run(job) for job in jobs]

    rows = []
    for gi, (kind, reset, variant) in enumerate(GRID):
        cell_errs = [errs[i] for i in range(gi, n_configs, len(GRID))]
        worst = max(cell_errs)
        rows.append(GradcheckRow(
            kind=kind,
            reset_mode=reset,
            enhanced=variant != "baseline",
            detached=variant == "detached",
            n_configs=len(cell_errs),
            max_rel_err=worst,
            passed=worst <= tolerance,
        ))
    return GradcheckReport(rows=rows, n_configs=n_configs, tolerance=tolerance)
