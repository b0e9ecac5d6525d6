"""Checkpoint serialization: exact round trips, stable bytes, and precise
failure reporting for damaged files."""

import json

import numpy as np
import pytest

from selfspike.checkpoint import (
    CHECKPOINT_VERSION,
    load_checkpoint,
    save_checkpoint,
    spec_from_dict,
    spec_to_dict,
)
from selfspike.errors import CheckpointError
from selfspike.network import LayerSpec, NetworkSpec, init_params
from selfspike.neurons import CLIF, IF, LIF, PLIF, NeuronConfig
from selfspike.rng import Rng


def sample_state(seed=0):
    cfg0 = NeuronConfig(kind=PLIF, enhanced=True, raw_tau=0.3, raw_tau_p=-0.2)
    cfg1 = NeuronConfig(kind=LIF, reset_mode="soft", surrogate_k=3.5)
    spec = NetworkSpec(input_width=5,
                       layers=(LayerSpec(6, cfg0), LayerSpec(4, cfg1)),
                       n_classes=3, timesteps=7)
    params = init_params(spec, Rng(seed))
    params.layers[0].raw_tau = 0.917
    params.layers[0].raw_tau_p = -1.204
    return spec, params


def test_round_trip_is_bit_identical(tmp_path):
    spec, params = sample_state()
    path = str(tmp_path / "ck.json")
    save_checkpoint(path, spec, params)
    spec2, params2 = load_checkpoint(path)
    assert spec2 == spec
    for lp, lp2 in zip(params.layers, params2.layers):
        assert np.array_equal(lp.W, lp2.W)
        assert np.array_equal(lp.b, lp2.b)
        assert lp.raw_tau == lp2.raw_tau
        assert lp.raw_tau_p == lp2.raw_tau_p
    assert np.array_equal(params.w_out, params2.w_out)
    assert np.array_equal(params.b_out, params2.b_out)


def test_double_save_is_byte_identical(tmp_path):
    spec, params = sample_state()
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    save_checkpoint(str(p1), spec, params)
    save_checkpoint(str(p2), spec, params)
    assert p1.read_bytes() == p2.read_bytes()


def test_spec_dict_round_trip_all_kinds():
    for kind in (IF, LIF, PLIF, CLIF):
        for enhanced in (False, True):
            cfg = NeuronConfig(kind=kind, enhanced=enhanced,
                               detach_pred_spike=enhanced, tau_p_zero=enhanced,
                               v_reset=-0.15, surrogate_k=5.0, theta=0.9)
            spec = NetworkSpec(input_width=3, layers=(LayerSpec(2, cfg),),
                               n_classes=2, timesteps=3)
            assert spec_from_dict(spec_to_dict(spec)) == spec


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"version": 1, "spec": }\n')
    with pytest.raises(CheckpointError, match=r"line \d+, column \d+"):
        load_checkpoint(str(path))


def test_truncated_file_fails_cleanly(tmp_path):
    spec, params = sample_state()
    path = tmp_path / "ck.json"
    save_checkpoint(str(path), spec, params)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_version_mismatch(tmp_path):
    spec, params = sample_state()
    path = tmp_path / "ck.json"
    save_checkpoint(str(path), spec, params)
    doc = json.loads(path.read_text())
    doc["version"] = CHECKPOINT_VERSION + 1
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(str(path))


def test_missing_key(tmp_path):
    spec, params = sample_state()
    path = tmp_path / "ck.json"
    save_checkpoint(str(path), spec, params)
    doc = json.loads(path.read_text())
    del doc["b_out"]
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="b_out"):
        load_checkpoint(str(path))


def test_wrong_shape_weight(tmp_path):
    spec, params = sample_state()
    path = tmp_path / "ck.json"
    save_checkpoint(str(path), spec, params)
    doc = json.loads(path.read_text())
    doc["W.0"] = [[1.0, 2.0], [3.0, 4.0]]
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match=r"W\.0"):
        load_checkpoint(str(path))
