"""Single-timestep spiking neuron dynamics.

Four integrate-and-fire variants share one step skeleton: charge the membrane
from the previous potential and the input current, fire on threshold
crossing, reset, then (in enhanced mode) update a per-neuron prediction
current that is injected into the next step's input.

Step order within one timestep is fixed: charge -> fire -> reset -> predict.
The prediction state written at step t is consumed at step t+1.

Kinds:
    if:   m = v_prev + I                       (no leak, time constant 1)
    lif:  m = (1 - 1/tau) v_prev + (1/tau) I
    plif: same as lif; 1/tau = sigmoid(raw_tau) is a trainable scalar
    clif: m = (1 - 1/tau) v_prev + I, with a complementary accumulator m_c
          driving an adaptive reset depth; clif always uses its own reset
          rule regardless of reset_mode.

Firing is >= (a membrane exactly at threshold fires). The enhanced-mode
prediction error is err = x - s * (1/tau) (1/tau taken as 1 for the if kind),
low-passed into m_p with gain tau_p = sigmoid(raw_tau_p).

In relaxed mode the binary spike is replaced by its sigmoid surrogate
sigma(k (m - theta)) everywhere downstream, which makes the whole step
differentiable; ``surrogate_grad`` is the exact derivative of that relaxed
spike, so finite differences of a relaxed run validate the backward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

IF = "if"
LIF = "lif"
PLIF = "plif"
CLIF = "clif"
NEURON_KINDS = (IF, LIF, PLIF, CLIF)

HARD = "hard"
SOFT = "soft"
RESET_MODES = (HARD, SOFT)


def sigmoid(x: np.ndarray | float) -> np.ndarray:
    """Numerically stable logistic function (array in, array out)."""
    x = np.asarray(x, dtype=np.float64)
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def logit(p: float) -> float:
    """Inverse of sigmoid for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"logit argument must be in (0, 1), got {p}")
    return math.log(p / (1.0 - p))


def heaviside(m: np.ndarray, theta: float) -> np.ndarray:
    """Binary spike: 1.0 where m >= theta, else 0.0."""
    return (np.asarray(m, dtype=np.float64) >= theta).astype(np.float64)


def relaxed_spike(m: np.ndarray, theta: float, k: float) -> np.ndarray:
    """Sigmoid surrogate of the spike, sigma(k (m - theta))."""
    return sigmoid(k * (np.asarray(m, dtype=np.float64) - theta))


def surrogate_grad(m: np.ndarray, theta: float, k: float) -> np.ndarray:
    """d/dm of the relaxed spike: k sigma(k u)(1 - sigma(k u)), u = m - theta.

    Peaks at k/4 on the threshold and decays symmetrically; used in place of
    the Heaviside's zero-a.e. derivative during backprop.
    """
    sig = relaxed_spike(m, theta, k)
    return k * sig * (1.0 - sig)


def inv_tau_of(kind: str, raw_tau: float) -> float:
    """Leak-free integration weight 1/tau; pinned to 1 for the if kind."""
    if kind == IF:
        return 1.0
    return float(sigmoid(raw_tau))


def tau_p_of(raw_tau_p: float, tau_p_zero: bool = False) -> float:
    """Prediction low-pass gain in (0, 1), or exactly 0 in degenerate mode."""
    if tau_p_zero:
        return 0.0
    return float(sigmoid(raw_tau_p))


@dataclass(frozen=True)
class NeuronConfig:
    """Structural description of one neuron layer.

    raw_tau and raw_tau_p are the *initial* unconstrained parameters; during
    training the live values travel with the layer parameters, and this
    config keeps everything that does not change (kind, threshold, reset
    rule, surrogate sharpness, mode flags).

    enhanced turns on the self-prediction current. detach_pred_spike chooses
    the backward convention for the spike inside the prediction error: when
    True that occurrence is treated as a constant, when False its surrogate
    gradient is kept. tau_p_zero pins the prediction gain to exactly zero,
    which makes an enhanced neuron reproduce the plain one bit for bit.
    """

    kind: str = LIF
    raw_tau: float = 0.0
    theta: float = 1.0
    v_reset: float = 0.0
    reset_mode: str = HARD
    surrogate_k: float = 4.0
    enhanced: bool = False
    raw_tau_p: float = 0.0
    detach_pred_spike: bool = False
    tau_p_zero: bool = False

    def __post_init__(self):
        if self.kind not in NEURON_KINDS:
            raise ValueError(f"unknown neuron kind {self.kind!r}, expected one of {NEURON_KINDS}")
        if self.reset_mode not in RESET_MODES:
            raise ValueError(f"unknown reset mode {self.reset_mode!r}, expected one of {RESET_MODES}")
        if not self.surrogate_k > 0.0:
            raise ValueError(f"surrogate_k must be positive, got {self.surrogate_k}")

    @property
    def inv_tau(self) -> float:
        return inv_tau_of(self.kind, self.raw_tau)

    @property
    def tau_p(self) -> float:
        return tau_p_of(self.raw_tau_p, self.tau_p_zero)


@dataclass
class NeuronState:
    """Carry-over state between timesteps. All-zero at sequence start."""

    v: np.ndarray
    m_p: np.ndarray
    m_c: np.ndarray

    @classmethod
    def zeros(cls, shape: int | tuple[int, ...]) -> "NeuronState":
        if isinstance(shape, int):
            shape = (shape,)
        return cls(
            v=np.zeros(shape, dtype=np.float64),
            m_p=np.zeros(shape, dtype=np.float64),
            m_c=np.zeros(shape, dtype=np.float64),
        )


@dataclass
class StepOutput:
    """Everything one step computed, for tracing and caching."""

    I: np.ndarray
    m: np.ndarray
    s: np.ndarray
    v: np.ndarray
    m_p: np.ndarray
    err: np.ndarray | None = None
    m_c: np.ndarray | None = None


def charge(kind: str, v_prev: np.ndarray, current: np.ndarray, inv_tau: float) -> np.ndarray:
    """Pre-spike membrane potential from previous potential and input current."""
    if kind == IF:
        return v_prev + current
    if kind == CLIF:
        # clif leaks the carried potential but takes the input unscaled
        return (1.0 - inv_tau) * v_prev + current
    return (1.0 - inv_tau) * v_prev + inv_tau * current


def reset_potential(
    m: np.ndarray, s: np.ndarray, reset_mode: str, theta: float, v_reset: float
) -> np.ndarray:
    """Post-spike potential for the hard and soft rules.

    Both are written as m minus a spike-gated subtraction so the relaxed mode
    (fractional s) stays meaningful. Fired entries of the hard rule are then
    snapped to v_reset: algebraically m - 1*(m - v_reset) is v_reset already,
    but the floating-point rounding of (m - v_reset) would leave the clamp
    one ulp off target when v_reset is nonzero.
    """
    if reset_mode == HARD:
        v = m - s * (m - v_reset)
        return np.where(s == 1.0, v_reset, v)
    return m - theta * s


def clif_reset(
    m: np.ndarray, s: np.ndarray, m_c_prev: np.ndarray, inv_tau: float, theta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Complementary-state update and the adaptive reset built on it.

    The accumulator decays by a gate on the current membrane and grows with
    each spike; the reset depth theta + sigmoid(m_c) then deepens with the
    recent firing history. The updated accumulator is used in the same
    step's reset.
    """
    m_c = m_c_prev * sigmoid(inv_tau * m) + s
    v = m - s * (theta + sigmoid(m_c))
    return v, m_c


def prediction_error(x: np.ndarray, s: np.ndarray, inv_tau: float) -> np.ndarray:
    """Input-minus-explained-output residual driving the prediction current."""
    return x - s * inv_tau


def update_prediction(m_p_prev: np.ndarray, err: np.ndarray, tau_p: float) -> np.ndarray:
    """Exponential low-pass of the prediction error with gain tau_p."""
    return (1.0 - tau_p) * m_p_prev + tau_p * err


def neuron_step(
    cfg: NeuronConfig, state: NeuronState, x: np.ndarray, relaxed: bool = False
) -> tuple[StepOutput, NeuronState]:
    """Advance one layer of neurons by a single timestep.

    Args:
        cfg: layer description (kind, thresholds, mode flags).
        state: previous-step state; not modified.
        x: external drive for this step (same shape as the state arrays).
        relaxed: replace the binary spike with its sigmoid surrogate.

    Returns:
        (outputs of this step, state to feed the next step).
    """
    x = np.asarray(x, dtype=np.float64)
    inv_tau = cfg.inv_tau
    current = x + state.m_p if cfg.enhanced else x
    m = charge(cfg.kind, state.v, current, inv_tau)
    if relaxed:
        s = relaxed_spike(m, cfg.theta, cfg.surrogate_k)
    else:
        s = heaviside(m, cfg.theta)
    if cfg.kind == CLIF:
        v, m_c = clif_reset(m, s, state.m_c, inv_tau, cfg.theta)
    else:
        v = reset_potential(m, s, cfg.reset_mode, cfg.theta, cfg.v_reset)
        m_c = state.m_c
    if cfg.enhanced:
        err = prediction_error(x, s, inv_tau)
        m_p = update_prediction(state.m_p, err, cfg.tau_p)
    else:
        err = None
        m_p = state.m_p
    out = StepOutput(I=current, m=m, s=s, v=v, m_p=m_p, err=err,
                     m_c=m_c if cfg.kind == CLIF else None)
    return out, NeuronState(v=v, m_p=m_p, m_c=m_c)
