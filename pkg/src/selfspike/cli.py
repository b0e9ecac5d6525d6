"""Command-line interface.

Subcommands:
    train     train from a config file; writes metrics.csv, timing.csv,
              config_resolved.txt, and the best checkpoint
    eval      evaluate a checkpoint on an IDX image/label pair
    gradcheck randomized finite-difference validation over the mode grid
    trace     single-neuron time trace to CSV (bundled scenarios case1..4)
    ablate    baseline vs enhanced-detached vs enhanced-kept, shared seeds

Config files are flat ``key = value`` lines with ``#`` comments; every key
has a default except the IDX paths needed by dataset = mnist-seq.

Exit codes: 0 success, 2 bad input or config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from importlib.resources import files as package_files
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, frame_rows, load_idx, synth_pattern
from .errors import CheckpointError, ConfigError, DataFormatError, NumericsError, SelfspikeError
from .gradcheck import gradcheck_report, worker_count
from .network import LayerSpec, NetworkSpec, init_params
from .neurons import (
    IF,
    NEURON_KINDS,
    RESET_MODES,
    NeuronConfig,
    NeuronState,
    logit,
    neuron_step,
)
from .optim import OPTIMIZERS, make_optimizer
from .rng import Rng
from .training import TrainResult, evaluate, train

SYNTH = "synth"
MNIST_SEQ = "mnist-seq"
DATASETS = (SYNTH, MNIST_SEQ)
MNIST_CLASSES = 10

# rng stream tags: one sub-stream per concern, all derived from the run seed
_DATA_STREAM = 101
_INIT_STREAM = 202
_SHUFFLE_STREAM = 303


@dataclass
class RunConfig:
    """One training run, fully determined by these values."""

    dataset: str = SYNTH
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_limit: int = 0
    test_limit: int = 0
    timesteps: int = 32
    width: int = 16
    classes: int = 4
    train_samples: int = 2000
    test_samples: int = 500
    late_flip: float = 0.1
    early_flip: float = 0.5
    hidden: str = "32"
    neuron: str = "lif"
    enhanced: bool = True
    detach_pred_spike: bool = False
    tau_p_zero: bool = False
    reset: str = "hard"
    theta: float = 1.0
    v_reset: float = 0.0
    surrogate_k: float = 4.0
    tau: float = 2.0
    tau_p: float = 0.5
    epochs: int = 10
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    seed: int = 0
    out: str = "runs/out"


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    # ValueError so the caller wraps it with file and line context
    raise ValueError(f"expected a boolean, got {raw!r}")


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse flat key = value lines into a RunConfig (defaults fill gaps)."""
    cfg = RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {rawline!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        kind = type(getattr(cfg, key))
        try:
            if kind is bool:
                parsed = _parse_bool(value)
            elif kind is int:
                parsed = int(value)
            elif kind is float:
                parsed = float(value)
            else:
                parsed = value
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: key {key!r}: {exc}") from exc
        setattr(cfg, key, parsed)
    _validate_config(cfg, source)
    return cfg


def _validate_config(cfg: RunConfig, source: str) -> None:
    if cfg.dataset not in DATASETS:
        raise ConfigError(f"{source}: dataset must be one of {DATASETS}, got {cfg.dataset!r}")
    if cfg.neuron not in NEURON_KINDS:
        raise ConfigError(f"{source}: neuron must be one of {NEURON_KINDS}, got {cfg.neuron!r}")
    if cfg.reset not in RESET_MODES:
        raise ConfigError(f"{source}: reset must be one of {RESET_MODES}, got {cfg.reset!r}")
    if cfg.optimizer not in OPTIMIZERS:
        raise ConfigError(f"{source}: optimizer must be one of {OPTIMIZERS}, got {cfg.optimizer!r}")
    if cfg.neuron != IF and not cfg.tau > 1.0:
        raise ConfigError(f"{source}: tau must be > 1, got {cfg.tau}")
    if not 0.0 < cfg.tau_p < 1.0:
        raise ConfigError(f"{source}: tau_p must be in (0, 1), got {cfg.tau_p}")
    if cfg.epochs <= 0 or cfg.batch_size <= 0:
        raise ConfigError(f"{source}: epochs and batch_size must be positive")
    if cfg.dataset == MNIST_SEQ:
        missing = [k for k in ("train_images", "train_labels", "test_images", "test_labels")
                   if not getattr(cfg, k)]
        if missing:
            raise ConfigError(f"{source}: dataset {MNIST_SEQ} needs keys {missing}")
    try:
        _hidden_widths(cfg)
    except ValueError as exc:
        raise ConfigError(f"{source}: hidden: {exc}") from exc


def load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=path)


def _hidden_widths(cfg: RunConfig) -> list[int]:
    widths = []
    for part in cfg.hidden.split(","):
        part = part.strip()
        if not part:
            continue
        w = int(part)
        if w <= 0:
            raise ValueError(f"layer width must be positive, got {w}")
        widths.append(w)
    if not widths:
        raise ValueError(f"no layer widths in {cfg.hidden!r}")
    return widths


def neuron_config_from(cfg: RunConfig) -> NeuronConfig:
    raw_tau = 0.0 if cfg.neuron == IF else logit(1.0 / cfg.tau)
    return NeuronConfig(
        kind=cfg.neuron,
        raw_tau=raw_tau,
        theta=cfg.theta,
        v_reset=cfg.v_reset,
        reset_mode=cfg.reset,
        surrogate_k=cfg.surrogate_k,
        enhanced=cfg.enhanced,
        raw_tau_p=logit(cfg.tau_p),
        detach_pred_spike=cfg.detach_pred_spike,
        tau_p_zero=cfg.tau_p_zero,
    )


def _subset(ds: Dataset, limit: int) -> Dataset:
    if limit > 0 and limit < len(ds):
        return Dataset(frames=ds.frames[:limit], labels=ds.labels[:limit],
                       n_classes=ds.n_classes)
    return ds


def build_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Deterministic train/test pair for a config (data depends only on the
    seed and the data keys, never on model settings, so ablation variants
    share their data exactly)."""
    if cfg.dataset == SYNTH:
        rng = Rng(cfg.seed).derive(_DATA_STREAM)
        total = cfg.train_samples + cfg.test_samples
        full = synth_pattern(rng, total, cfg.timesteps, cfg.width, cfg.classes,
                             late_flip=cfg.late_flip, early_flip=cfg.early_flip)
        train_ds = Dataset(frames=full.frames[:cfg.train_samples],
                           labels=full.labels[:cfg.train_samples],
                           n_classes=cfg.classes)
        test_ds = Dataset(frames=full.frames[cfg.train_samples:],
                          labels=full.labels[cfg.train_samples:],
                          n_classes=cfg.classes)
        return train_ds, test_ds
    images, labels = load_idx(cfg.train_images, cfg.train_labels)
    train_ds = _subset(frame_rows(images, labels, MNIST_CLASSES), cfg.train_limit)
    images, labels = load_idx(cfg.test_images, cfg.test_labels)
    test_ds = _subset(frame_rows(images, labels, MNIST_CLASSES), cfg.test_limit)
    if train_ds.timesteps != test_ds.timesteps or train_ds.input_width != test_ds.input_width:
        raise DataFormatError("train and test image dimensions differ")
    return train_ds, test_ds


def build_netspec(cfg: RunConfig, ds: Dataset) -> NetworkSpec:
    ncfg = neuron_config_from(cfg)
    layers = tuple(LayerSpec(width=w, cfg=ncfg) for w in _hidden_widths(cfg))
    return NetworkSpec(input_width=ds.input_width, layers=layers,
                       n_classes=ds.n_classes, timesteps=ds.timesteps)


def resolved_config_text(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


def run_training(cfg: RunConfig, out_dir: str | Path) -> TrainResult:
    """Train per config and write metrics.csv / timing.csv / checkpoint.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = build_datasets(cfg)
    spec = build_netspec(cfg, train_ds)
    root = Rng(cfg.seed)
    params = init_params(spec, root.derive(_INIT_STREAM))
    opt = make_optimizer(cfg.optimizer, cfg.lr, spec)
    result = train(spec, params, train_ds, opt, cfg.epochs, cfg.batch_size,
                   shuffle_rng=root.derive(_SHUFFLE_STREAM), test_ds=test_ds)

    (out / "config_resolved.txt").write_text(resolved_config_text(cfg), encoding="utf-8")
    metrics = ["epoch,split,loss,accuracy"]
    metrics += [f"{r.epoch},{r.split},{r.loss!r},{r.accuracy!r}" for r in result.rows]
    (out / "metrics.csv").write_text("\n".join(metrics) + "\n", encoding="utf-8")
    timing = ["epoch,wall_seconds"]
    timing += [f"{i},{sec!r}" for i, sec in enumerate(result.epoch_seconds, start=1)]
    (out / "timing.csv").write_text("\n".join(timing) + "\n", encoding="utf-8")
    save_checkpoint(str(out / "checkpoint.json"), spec, result.best_params)
    return result


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    result = run_training(cfg, cfg.out)
    print(f"best_test_accuracy={result.best_test_accuracy}")
    print(f"final_train_accuracy={result.final_train_accuracy}")
    print(f"checkpoint={Path(cfg.out) / 'checkpoint.json'}")
    return 0


def cmd_eval(args) -> int:
    spec, params = load_checkpoint(args.checkpoint)
    images, labels = load_idx(args.images, args.labels)
    ds = frame_rows(images, labels, n_classes=spec.n_classes)
    if ds.timesteps != spec.timesteps or ds.input_width != spec.input_width:
        raise DataFormatError(
            f"data frames are ({ds.timesteps}, {ds.input_width}) but the checkpoint "
            f"expects ({spec.timesteps}, {spec.input_width})")
    _, acc = evaluate(spec, params, ds)
    print(f"accuracy={acc}")
    return 0


def cmd_gradcheck(args) -> int:
    report = gradcheck_report(n_configs=args.seeds, tolerance=args.tol)
    print("kind,reset,enhanced,detached,max_rel_err,pass")
    for row in report.rows:
        print(row.format())
    # a completed report with failures is a negative verdict, not a crash:
    # exit 1, keeping 2 for input errors and 3 for non-finite numerics
    return 0 if report.all_passed else 1


def _scenario_path(name: str):
    return package_files("selfspike").joinpath("scenarios", f"{name}.csv")


def _read_trace_input(spec: str) -> list[float]:
    if spec in ("case1", "case2", "case3", "case4"):
        text = _scenario_path(spec).read_text(encoding="utf-8")
        source = f"scenario {spec}"
    else:
        try:
            text = Path(spec).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataFormatError(f"cannot read trace input {spec}: {exc}") from exc
        source = spec
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError as exc:
            raise DataFormatError(f"{source}:{lineno}: not a number: {line!r}") from exc
    if not values:
        raise DataFormatError(f"{source}: no input values")
    return values


def cmd_trace(args) -> int:
    if args.kind != IF and not args.tau > 1.0:
        raise ConfigError(f"tau must be > 1, got {args.tau}")
    if not 0.0 < args.tau_p < 1.0:
        raise ConfigError(f"tau-p must be in (0, 1), got {args.tau_p}")
    cfg = NeuronConfig(
        kind=args.kind,
        raw_tau=0.0 if args.kind == IF else logit(1.0 / args.tau),
        theta=args.theta,
        v_reset=args.v_reset,
        reset_mode=args.reset,
        surrogate_k=args.k,
        enhanced=args.enhanced,
        raw_tau_p=logit(args.tau_p),
        detach_pred_spike=args.detach,
    )
    xs = _read_trace_input(args.input)
    state = NeuronState.zeros(1)
    lines = ["t,x,I,m,s,v,m_p,err"]
    for t, x in enumerate(xs, start=1):
        out, state = neuron_step(cfg, state, np.array([x]))
        err = 0.0 if out.err is None else float(out.err[0])
        lines.append(f"{t},{x!r},{float(out.I[0])!r},{float(out.m[0])!r},"
                     f"{float(out.s[0])!r},{float(out.v[0])!r},"
                     f"{float(out.m_p[0])!r},{err!r}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


ABLATE_VARIANTS = (
    ("baseline", False, False),
    ("enhanced-detached", True, True),
    ("enhanced-kept", True, False),
)


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out if args.out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    def run_variant(entry):
        name, enhanced, detach = entry
        vcfg = replace(cfg, enhanced=enhanced, detach_pred_spike=detach,
                       out=str(out / name))
        return name, run_training(vcfg, out / name)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(ABLATE_VARIANTS))) as pool:
            results = list(pool.map(run_variant, ABLATE_VARIANTS))
    else:
        results = [run_variant(entry) for entry in ABLATE_VARIANTS]

    lines = ["variant,best_test_acc,final_train_acc"]
    for name, res in results:
        lines.append(f"{name},{res.best_test_accuracy!r},{res.final_train_accuracy!r}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="selfspike",
        description="Train and inspect self-prediction enhanced spiking networks.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a network from a config file")
    t.add_argument("--config", required=True, help="flat key = value config file")
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.add_argument("--out", default=None, help="override the output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on IDX data")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--images", required=True, help="IDX images file")
    e.add_argument("--labels", required=True, help="IDX labels file")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    g.add_argument("--seeds", type=int, default=100,
                   help="number of random configurations (round-robin over the grid)")
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)

    tr = sub.add_parser("trace", help="single-neuron trace to CSV")
    tr.add_argument("--kind", default="lif", choices=NEURON_KINDS)
    tr.add_argument("--enhanced", action="store_true")
    tr.add_argument("--detach", action="store_true",
                    help="detach the prediction-error spike in backward")
    tr.add_argument("--reset", default="hard", choices=RESET_MODES)
    tr.add_argument("--theta", type=float, default=1.0)
    tr.add_argument("--v-reset", type=float, default=0.0)
    tr.add_argument("--tau", type=float, default=2.0)
    tr.add_argument("--tau-p", type=float, default=0.5)
    tr.add_argument("--k", type=float, default=4.0, help="surrogate sharpness")
    tr.add_argument("--input", required=True,
                    help="input file (one value per line) or case1..case4")
    tr.add_argument("--out", required=True, help="output CSV path")
    tr.set_defaults(func=cmd_trace)

    a = sub.add_parser("ablate", help="baseline vs detached vs kept, shared seed")
    a.add_argument("--config", required=True)
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SelfspikeError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
