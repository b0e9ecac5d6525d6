"""Self-prediction enhanced spiking neuron layers with hand-rolled BPTT.

Spiking layers (if / lif / plif / clif kinds) optionally feed a per-neuron
low-passed prediction of their own input back into the next step's drive.
Everything is plain numpy with an explicit backward pass, validated by a
finite-difference harness built around the detachment conventions.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, frame_rows, load_idx, synth_pattern
from .engine import BackwardFlags, LayerParams, backward_layer, forward_layer
from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    NumericsError,
    SelfspikeError,
)
from .estimator import SpikingSequenceClassifier, check_sequence_array
from .gradcheck import finite_diff, gradcheck_report
from .network import (
    LayerSpec,
    NetworkSpec,
    ParamSet,
    forward_network,
    init_params,
    loss_and_grads,
)
from .neurons import (
    CLIF,
    IF,
    LIF,
    PLIF,
    NeuronConfig,
    NeuronState,
    neuron_step,
)
from .optim import OptimState, make_optimizer, optimizer_step
from .rng import Rng
from .training import evaluate, train

__version__ = "0.1.0"

__all__ = [
    "BackwardFlags",
    "CheckpointError",
    "ConfigError",
    "CLIF",
    "DataFormatError",
    "Dataset",
    "IF",
    "LIF",
    "LayerParams",
    "LayerSpec",
    "NetworkSpec",
    "NeuronConfig",
    "NeuronState",
    "NumericsError",
    "OptimState",
    "PLIF",
    "ParamSet",
    "Rng",
    "SelfspikeError",
    "SpikingSequenceClassifier",
    "backward_layer",
    "check_sequence_array",
    "evaluate",
    "finite_diff",
    "forward_layer",
    "forward_network",
    "frame_rows",
    "gradcheck_report",
    "init_params",
    "load_checkpoint",
    "load_idx",
    "loss_and_grads",
    "make_optimizer",
    "neuron_step",
    "optimizer_step",
    "save_checkpoint",
    "synth_pattern",
    "train",
    "__version__",
]
