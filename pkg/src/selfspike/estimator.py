"""scikit-learn style estimator facade over the functional training core."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .linalg import softmax
from .network import LayerSpec, NetworkSpec, forward_network, init_params
from .neurons import IF, NEURON_KINDS, RESET_MODES, NeuronConfig, logit
from .optim import make_optimizer
from .rng import Rng
from .training import train

_INIT_STREAM = 202
_SHUFFLE_STREAM = 303


def check_sequence_array(X, timesteps: int | None = None, width: int | None = None):
    """Validate a (n_samples, timesteps, width) float array.

    Returns the validated float64 array; when expected dimensions are given
    (predict-time), mismatches raise ValueError.
    """
    X = check_array(X, allow_nd=True, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(
            f"X must have shape (n_samples, timesteps, width), got {X.shape}")
    if timesteps is not None and (X.shape[1] != timesteps or X.shape[2] != width):
        raise ValueError(
            f"X has per-sample shape {X.shape[1:]}, expected ({timesteps}, {width})")
    return X


class SpikingSequenceClassifier(ClassifierMixin, BaseEstimator):
    """Spiking network classifier for fixed-length frame sequences.

    Samples are (timesteps, width) frame sequences; a stack of spiking
    layers processes them step by step and a time-averaged linear readout
    produces class scores. Training is minibatch backprop through time
    with surrogate spike gradients.

    Parameters
    ----------
    hidden : tuple of int, layer widths.
    kind : "if" | "lif" | "plif" | "clif".
    enhanced : enable the self-prediction input current.
    detach_pred_spike : backward convention for the prediction error's
        spike (ignored unless enhanced).
    reset_mode : "hard" | "soft" (clif uses its own reset).
    theta, v_reset, surrogate_k : neuron constants.
    tau : membrane time constant (> 1; ignored for "if").
    tau_p : initial prediction gain in (0, 1).
    epochs, batch_size, optimizer, lr : training settings.
    random_state : seed for init, data order, everything.

    Attributes
    ----------
    classes_ : sorted class labels seen in fit.
    spec_ : the trained architecture.
    params_ : trained parameter set.
    history_ : per-epoch training metrics rows.
    """

    def __init__(self, hidden=(32,), kind="lif", enhanced=True,
                 detach_pred_spike=False, reset_mode="hard", theta=1.0,
                 v_reset=0.0, surrogate_k=4.0, tau=2.0, tau_p=0.5,
                 tau_p_zero=False, epochs=10, batch_size=32, optimizer="adam",
                 lr=1e-3, random_state=0):
        self.hidden = hidden
        self.kind = kind
        self.enhanced = enhanced
        self.detach_pred_spike = detach_pred_spike
        self.reset_mode = reset_mode
        self.theta = theta
        self.v_reset = v_reset
        self.surrogate_k = surrogate_k
        self.tau = tau
        self.tau_p = tau_p
        self.tau_p_zero = tau_p_zero
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.lr = lr
        self.random_state = random_state

    def _neuron_config(self) -> NeuronConfig:
        if self.kind not in NEURON_KINDS:
            raise ValueError(f"kind must be one of {NEURON_KINDS}, got {self.kind!r}")
        if self.reset_mode not in RESET_MODES:
            raise ValueError(f"reset_mode must be one of {RESET_MODES}, got {self.reset_mode!r}")
        if self.kind != IF and not self.tau > 1.0:
            raise ValueError(f"tau must be > 1, got {self.tau}")
        if not 0.0 < self.tau_p < 1.0:
            raise ValueError(f"tau_p must be in (0, 1), got {self.tau_p}")
        return NeuronConfig(
            kind=self.kind,
            raw_tau=0.0 if self.kind == IF else logit(1.0 / self.tau),
            theta=self.theta,
            v_reset=self.v_reset,
            reset_mode=self.reset_mode,
            surrogate_k=self.surrogate_k,
            enhanced=self.enhanced,
            raw_tau_p=logit(self.tau_p),
            detach_pred_spike=self.detach_pred_spike,
            tau_p_zero=self.tau_p_zero,
        )

    def fit(self, X, y):
        """Train on sequences X (n_samples, timesteps, width), labels y."""
        from .data import Dataset

        X = check_sequence_array(X)
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(f"y shape {y.shape} does not match {X.shape[0]} samples")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("fit needs at least two distinct classes")
        ncfg = self._neuron_config()
        widths = tuple(int(w) for w in self.hidden)
        spec = NetworkSpec(
            input_width=X.shape[2],
            layers=tuple(LayerSpec(width=w, cfg=ncfg) for w in widths),
            n_classes=int(self.classes_.shape[0]),
            timesteps=X.shape[1],
        )
        ds = Dataset(frames=X, labels=encoded.astype(np.int64),
                     n_classes=spec.n_classes)
        root = Rng(self.random_state)
        params = init_params(spec, root.derive(_INIT_STREAM))
        opt = make_optimizer(self.optimizer, self.lr, spec)
        result = train(spec, params, ds, opt, self.epochs, self.batch_size,
                       shuffle_rng=root.derive(_SHUFFLE_STREAM))
        self.spec_ = spec
        self.params_ = result.params
        self.history_ = result.rows
        self.n_features_in_ = X.shape[2]
        self.n_timesteps_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "this SpikingSequenceClassifier is not fitted; call fit first")

    def decision_function(self, X):
        self._check_fitted()
        X = check_sequence_array(X, self.n_timesteps_, self.n_features_in_)
        logits, _ = forward_network(self.spec_, self.params_, X)
        return logits

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]
