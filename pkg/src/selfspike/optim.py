"""Plain SGD and Adam over the flattened trainable parameters.

Updates run on the flat vector produced by ``params_to_vector``; the moment
buffers therefore share its layout, and a checkpointed run can rebuild the
optimizer from the same spec. Non-finite gradients abort with the offending
block named, before anything is mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .network import NetworkSpec, ParamSet, _block_value, params_to_vector, trainable_blocks, vector_to_params

SGD = "sgd"
ADAM = "adam"
OPTIMIZERS = (SGD, ADAM)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimState:
    algorithm: str
    lr: float
    step: int = 0
    m: np.ndarray | None = None  # first-moment buffer (adam)
    v: np.ndarray | None = None  # second-moment buffer (adam)


def make_optimizer(algorithm: str, lr: float, spec: NetworkSpec) -> OptimState:
    if algorithm not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {algorithm!r}, expected one of {OPTIMIZERS}")
    if not lr > 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    size = sum(1 if shape is None else int(np.prod(shape))
               for _, shape in trainable_blocks(spec))
    state = OptimState(algorithm=algorithm, lr=lr)
    if algorithm == ADAM:
        state.m = np.zeros(size)
        state.v = np.zeros(size)
    return state


def _check_finite(spec: NetworkSpec, grads: ParamSet) -> None:
    for name, _ in trainable_blocks(spec):
        val = np.asarray(_block_value(grads, name), dtype=np.float64)
        if not np.isfinite(val).all():
            raise NumericsError(f"non-finite gradient in {name}")


def optimizer_step(
    state: OptimState, spec: NetworkSpec, params: ParamSet, grads: ParamSet
) -> ParamSet:
    """One update; returns new parameters, mutates only the optimizer state."""
    _check_finite(spec, grads)
    p = params_to_vector(spec, params)
    g = params_to_vector(spec, grads)
    # overflow here is handled by the explicit check below, so numpy's own
    # warning would only be noise
    with np.errstate(over="ignore", invalid="ignore"):
        if state.algorithm == SGD:
            p = p - state.lr * g
        else:
            state.step += 1
            state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * g
            state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * g * g
            m_hat = state.m / (1.0 - ADAM_BETA1 ** state.step)
            v_hat = state.v / (1.0 - ADAM_BETA2 ** state.step)
            p = p - state.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    if not np.isfinite(p).all():
        raise NumericsError("non-finite parameter after optimizer update")
    return vector_to_params(spec, p, params)
