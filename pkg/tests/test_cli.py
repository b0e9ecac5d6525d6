"""End-to-end command-line behavior: config parsing, training artifacts,
evaluation round trips, gradcheck exit codes, traces, and ablation."""

import re
from pathlib import Path

import numpy as np
import pytest

from selfspike.checkpoint import save_checkpoint
from selfspike.cli import (
    ABLATE_VARIANTS,
    RunConfig,
    build_datasets,
    build_netspec,
    main,
    parse_config_text,
    resolved_config_text,
)
from selfspike.data import dataset_to_uint8, write_idx_images, write_idx_labels
from selfspike.errors import ConfigError
from selfspike.network import init_params
from selfspike.rng import Rng
from selfspike.training import evaluate

ROW_RE = re.compile(
    r"^(if|lif|plif|clif),(hard|soft),[01],[01],\d\.\d{3}e[+-]\d{2,3},(pass|FAIL)$")


def write_config(path, **overrides):
    base = dict(dataset="synth", timesteps=6, width=5, classes=2,
                train_samples=80, test_samples=40, hidden="8",
                epochs=2, batch_size=16, lr=0.01, seed=3)
    base.update(overrides)
    text = "\n".join(f"{k} = {v}" for k, v in base.items())
    Path(path).write_text(text + "\n", encoding="utf-8")
    return str(path)


def test_config_parse_reports_file_and_line():
    with pytest.raises(ConfigError, match=r"cfg:2"):
        parse_config_text("epochs = 3\nnot a line\n", "cfg")
    with pytest.raises(ConfigError, match=r"cfg:1.*mystery"):
        parse_config_text("mystery = 4\n", "cfg")
    with pytest.raises(ConfigError, match=r"cfg:1.*epochs"):
        parse_config_text("epochs = three\n", "cfg")
    with pytest.raises(ConfigError, match=r"cfg:2.*enhanced"):
        parse_config_text("epochs = 3\nenhanced = maybe\n", "cfg")


def test_config_comments_defaults_and_types():
    cfg = parse_config_text("# comment only\n\nepochs = 5  # tail comment\n"
                            "enhanced = false\nlr = 2e-3\nhidden = 16, 8\n")
    assert cfg.epochs == 5
    assert cfg.enhanced is False
    assert cfg.lr == 2e-3
    assert cfg.hidden == "16, 8"
    assert cfg.dataset == "synth"  # untouched default


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="dataset"):
        parse_config_text("dataset = cifar\n")
    with pytest.raises(ConfigError, match="neuron"):
        parse_config_text("neuron = alif\n")
    with pytest.raises(ConfigError, match="tau must be > 1"):
        parse_config_text("tau = 1.0\n")
    with pytest.raises(ConfigError, match="tau_p"):
        parse_config_text("tau_p = 0.0\n")
    with pytest.raises(ConfigError, match="hidden"):
        parse_config_text("hidden = 8, -2\n")
    with pytest.raises(ConfigError, match="needs keys"):
        parse_config_text("dataset = mnist-seq\n")


def test_nan_learning_rate_exits_2(tmp_path, capsys):
    # nan parses as a float; the optimizer constructor rejects it and the
    # CLI reports it as a configuration problem
    cfgp = write_config(tmp_path / "run.cfg", lr="nan", epochs=1)
    assert main(["train", "--config", cfgp, "--out", str(tmp_path / "o")]) == 2
    assert "learning rate" in capsys.readouterr().err


def test_resolved_config_round_trips():
    cfg = parse_config_text("epochs = 7\nneuron = plif\nhidden = 12,6\n"
                            "enhanced = true\nlate_flip = 0.2\n")
    again = parse_config_text(resolved_config_text(cfg))
    assert again == cfg


def test_train_writes_artifacts_and_rerun_is_byte_identical(tmp_path, capsys):
    cfgp = write_config(tmp_path / "run.cfg")
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    assert main(["train", "--config", cfgp, "--out", str(out1)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("best_test_accuracy=")
    assert lines[1].startswith("final_train_accuracy=")
    assert lines[2].startswith("checkpoint=")
    for name in ("metrics.csv", "timing.csv", "config_resolved.txt",
                 "checkpoint.json"):
        assert (out1 / name).exists(), name

    metrics = (out1 / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "epoch,split,loss,accuracy"
    assert len(metrics) == 1 + 2 * 2  # train and test rows per epoch
    assert metrics[1].startswith("1,train,")
    assert metrics[2].startswith("1,test,")
    timing = (out1 / "timing.csv").read_text().splitlines()
    assert timing[0] == "epoch,wall_seconds"
    assert len(timing) == 3

    assert main(["train", "--config", cfgp, "--out", str(out2)]) == 0
    capsys.readouterr()
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
    assert (out1 / "checkpoint.json").read_bytes() == (out2 / "checkpoint.json").read_bytes()
    # resolved configs agree except for the differing output paths
    r1 = (out1 / "config_resolved.txt").read_text().splitlines()
    r2 = (out2 / "config_resolved.txt").read_text().splitlines()
    assert [l for l in r1 if not l.startswith("out ")] == \
        [l for l in r2 if not l.startswith("out ")]


def test_seed_override_lands_in_resolved_config(tmp_path, capsys):
    cfgp = write_config(tmp_path / "run.cfg", epochs=1)
    out = tmp_path / "o"
    assert main(["train", "--config", cfgp, "--seed", "11", "--out", str(out)]) == 0
    capsys.readouterr()
    resolved = (out / "config_resolved.txt").read_text()
    assert "seed = 11" in resolved
    assert f"out = {out}" in resolved


def test_train_then_eval_round_trip_exact(tmp_path, capsys):
    cfgp = write_config(tmp_path / "run.cfg")
    out = tmp_path / "o"
    assert main(["train", "--config", cfgp, "--out", str(out)]) == 0
    train_out = capsys.readouterr().out
    best = float(train_out.splitlines()[0].split("=", 1)[1])

    cfg = parse_config_text(Path(cfgp).read_text(), cfgp)
    _, test_ds = build_datasets(cfg)
    images, labels = dataset_to_uint8(test_ds)
    ip, lp = str(tmp_path / "ti"), str(tmp_path / "tl")
    write_idx_images(ip, images)
    write_idx_labels(lp, labels)
    assert main(["eval", "--checkpoint", str(out / "checkpoint.json"),
                 "--images", ip, "--labels", lp]) == 0
    eval_out = capsys.readouterr().out.strip()
    assert eval_out.startswith("accuracy=")
    # the checkpoint holds the best-epoch parameters and the frames are
    # binary, so the uint8 detour loses nothing
    assert float(eval_out.split("=", 1)[1]) == best


def test_eval_dimension_mismatch_exits_2(tmp_path, capsys):
    cfgp = write_config(tmp_path / "run.cfg", epochs=1)
    out = tmp_path / "o"
    assert main(["train", "--config", cfgp, "--out", str(out)]) == 0
    cfg = parse_config_text(Path(cfgp).read_text(), cfgp)
    _, test_ds = build_datasets(cfg)
    images, labels = dataset_to_uint8(test_ds)
    ip, lp = str(tmp_path / "ti"), str(tmp_path / "tl")
    write_idx_images(ip, images[:, :, :4])  # wrong width
    write_idx_labels(lp, labels)
    code = main(["eval", "--checkpoint", str(out / "checkpoint.json"),
                 "--images", ip, "--labels", lp])
    capsys.readouterr()
    assert code == 2


def test_missing_data_files_exit_2(tmp_path, capsys):
    cfgp = write_config(tmp_path / "run.cfg", dataset="mnist-seq",
                        train_images=str(tmp_path / "absent-i"),
                        train_labels=str(tmp_path / "absent-l"),
                        test_images=str(tmp_path / "absent-ti"),
                        test_labels=str(tmp_path / "absent-tl"))
    assert main(["train", "--config", cfgp, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "error:" in err


def test_train_on_idx_files_with_limits(tmp_path, capsys):
    rng = Rng(1)
    images = (rng.uniform_array(20 * 6 * 5, 0.0, 256.0) % 256).astype(np.uint8)
    images = images.reshape(20, 6, 5)
    labels = (rng.uniform_array(20) < 0.5).astype(np.uint8)
    paths = {}
    for name, arr, writer in (("ti", images, write_idx_images),
                              ("tl", labels, write_idx_labels),
                              ("vi", images[:8], write_idx_images),
                              ("vl", labels[:8], write_idx_labels)):
        paths[name] = str(tmp_path / name)
        writer(paths[name], arr)
    cfgp = write_config(tmp_path / "run.cfg", dataset="mnist-seq",
                        train_images=paths["ti"], train_labels=paths["tl"],
                        test_images=paths["vi"], test_labels=paths["vl"],
                        train_limit=10, epochs=1, hidden="4", batch_size=5)
    out = tmp_path / "o"
    assert main(["train", "--config", cfgp, "--out", str(out)]) == 0
    capsys.readouterr()
    assert (out / "metrics.csv").exists()


def test_mismatched_idx_dimensions_exit_2(tmp_path, capsys):
    rng = Rng(2)
    imgs = (rng.uniform_array(6 * 6 * 5, 0.0, 256.0) % 256).astype(np.uint8).reshape(6, 6, 5)
    labs = np.zeros(6, dtype=np.uint8)
    p = {}
    for name, arr, writer in (("ti", imgs, write_idx_images),
                              ("tl", labs, write_idx_labels),
                              ("vi", imgs[:, :, :4], write_idx_images),
                              ("vl", labs, write_idx_labels)):
        p[name] = str(tmp_path / name)
        writer(p[name], arr)
    cfgp = write_config(tmp_path / "run.cfg", dataset="mnist-seq",
                        train_images=p["ti"], train_labels=p["tl"],
                        test_images=p["vi"], test_labels=p["vl"], epochs=1)
    assert main(["train", "--config", cfgp, "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()


def test_infinite_learning_rate_exits_3(tmp_path, capsys):
    cfgp = write_config(tmp_path / "run.cfg", lr="inf", optimizer="sgd",
                        epochs=1)
    code = main(["train", "--config", cfgp, "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code == 3
    assert "error:" in err and "epoch 1, batch 1" in err


def test_gradcheck_cli_pass_fail_and_bad_args(tmp_path, capsys):
    assert main(["gradcheck", "--seeds", "24"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0] == "kind,reset,enhanced,detached,max_rel_err,pass"
    assert len(out) == 25
    assert all(ROW_RE.match(line) for line in out[1:])

    assert main(["gradcheck", "--seeds", "24", "--tol", "1e-14"]) == 1
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 25
    assert all(ROW_RE.match(line) for line in out[1:])
    assert any(line.endswith("FAIL") for line in out[1:])

    assert main(["gradcheck", "--seeds", "23"]) == 2
    capsys.readouterr()


def test_trace_three_constant_steps(tmp_path):
    inp = tmp_path / "in.txt"
    inp.write_text("1.0\n1.0\n1.0\n")
    outp = tmp_path / "trace.csv"
    assert main(["trace", "--enhanced", "--input", str(inp),
                 "--out", str(outp)]) == 0
    lines = outp.read_text().splitlines()
    assert lines[0] == "t,x,I,m,s,v,m_p,err"
    assert lines[1] == "1,1.0,1.0,0.5,0.0,0.5,0.5,1.0"
    assert lines[2] == "2,1.0,1.5,1.0,1.0,0.0,0.5,0.5"
    assert lines[3] == "3,1.0,1.5,0.75,0.0,0.75,0.75,1.0"


def test_trace_baseline_keeps_prediction_at_zero(tmp_path):
    outp = tmp_path / "trace.csv"
    assert main(["trace", "--input", "case1", "--out", str(outp)]) == 0
    lines = outp.read_text().splitlines()
    assert len(lines) == 13  # header + 12 steps
    for line in lines[1:]:
        parts = line.split(",")
        assert parts[6] == "0.0"  # m_p
        assert parts[7] == "0.0"  # err placeholder


def test_trace_bundled_scenarios_resolve(tmp_path):
    for case in ("case1", "case2", "case3", "case4"):
        outp = tmp_path / f"{case}.csv"
        assert main(["trace", "--enhanced", "--input", case,
                     "--out", str(outp)]) == 0
        assert outp.read_text().splitlines()[0] == "t,x,I,m,s,v,m_p,err"
    # spot check: the spike-then-reset step of the impulse scenario
    lines = (tmp_path / "case4.csv").read_text().splitlines()
    assert lines[2] == "2,0.2,1.195,1.095,1.0,0.0,0.34750000000000003,-0.3"


def test_trace_input_and_argument_errors(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1.0\nabc\n")
    outp = tmp_path / "t.csv"
    assert main(["trace", "--input", str(bad), "--out", str(outp)]) == 2
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    assert main(["trace", "--input", str(empty), "--out", str(outp)]) == 2
    assert main(["trace", "--input", "case1", "--out", str(outp),
                 "--tau", "1.0"]) == 2
    assert main(["trace", "--input", "case1", "--out", str(outp),
                 "--tau-p", "1.0"]) == 2
    assert main(["trace", "--input", str(tmp_path / "missing.txt"),
                 "--out", str(outp)]) == 2
    capsys.readouterr()


def test_ablate_three_variants_share_data(tmp_path, capsys):
    cfgp = write_config(tmp_path / "run.cfg", epochs=1)
    out = tmp_path / "ab"
    assert main(["ablate", "--config", cfgp, "--out", str(out)]) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    summary = (out / "summary.csv").read_text().splitlines()
    assert printed == summary
    assert summary[0] == "variant,best_test_acc,final_train_acc"
    names = [line.split(",")[0] for line in summary[1:]]
    assert names == ["baseline", "enhanced-detached", "enhanced-kept"]
    for name, _, _ in ABLATE_VARIANTS:
        assert (out / name / "metrics.csv").exists()
        assert (out / name / "checkpoint.json").exists()
    # all three variants trained on identical data with identical init
    resolved = [(out / n / "config_resolved.txt").read_text() for n in names]
    for text in resolved:
        assert "seed = 3" in text


def test_ablate_with_pinned_gain_gives_identical_rows(tmp_path, capsys):
    # tau_p_zero erases the enhancement exactly, so all variants must
    # produce the same numbers down to the last bit
    cfgp = write_config(tmp_path / "run.cfg", epochs=2, tau_p_zero=True)
    out = tmp_path / "ab"
    assert main(["ablate", "--config", cfgp, "--out", str(out)]) == 0
    capsys.readouterr()
    summary = (out / "summary.csv").read_text().splitlines()
    values = {tuple(line.split(",")[1:]) for line in summary[1:]}
    assert len(values) == 1
    m = [(out / n / "metrics.csv").read_bytes()
         for n in ("baseline", "enhanced-detached", "enhanced-kept")]
    assert m[0] == m[1] == m[2]


def test_random_init_evaluates_at_chance(tmp_path, capsys):
    # untrained networks must sit in a chance band on label-independent
    # data (with informative frames an untrained readout can align with a
    # class template by luck, so both windows run at flip 0.5 here); one
    # of the ten goes through the CLI eval path
    cfg = RunConfig()
    cfg.late_flip = 0.5
    _, test_ds = build_datasets(cfg)
    spec = build_netspec(cfg, test_ds)
    accs = []
    for seed in range(10):
        params = init_params(spec, Rng(seed))
        _, acc = evaluate(spec, params, test_ds)
        accs.append(acc)
    assert all(0.15 <= a <= 0.35 for a in accs), accs

    params = init_params(spec, Rng(0))
    ck = str(tmp_path / "ck.json")
    save_checkpoint(ck, spec, params)
    images, labels = dataset_to_uint8(test_ds)
    ip, lp = str(tmp_path / "i"), str(tmp_path / "l")
    write_idx_images(ip, images)
    write_idx_labels(lp, labels)
    assert main(["eval", "--checkpoint", ck, "--images", ip, "--labels", lp]) == 0
    out = capsys.readouterr().out.strip()
    assert float(out.split("=", 1)[1]) == accs[0]
