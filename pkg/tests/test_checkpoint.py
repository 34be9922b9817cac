"""Checkpoint round-trips and rejection of mismatched files."""

import numpy as np
import pytest

from spike_diffuser.archive import write_archive
from spike_diffuser.checkpoint import load_checkpoint, save_checkpoint
from spike_diffuser.data import generate_dataset
from spike_diffuser.errors import FormatError
from spike_diffuser.policy import TrainConfig, train
from spike_diffuser.transformer import ModelConfig

TINY = ModelConfig(variant="stmdp", d_model=16, n_heads=2, n_enc_layers=1,
                   n_dec_layers=1, d_ff=32, t_steps=2, horizon=8)


@pytest.fixture(scope="module")
def state():
    ds = generate_dataset(2, seed=3)
    res = train(ds, TINY, TrainConfig(epochs=1, batch_size=16, t_diff=10,
                                      checkpoint_every=1, keep_last=1))
    return res.checkpoints[-1].state


def test_roundtrip_bitwise(state, tmp_path):
    path = tmp_path / "ck.sdck"
    save_checkpoint(path, state, epoch=7, rng_digest="ab" * 8,
                    extra_meta={"note": "x"})
    loaded, meta = load_checkpoint(path)
    assert meta["epoch"] == 7
    assert meta["rng_digest"] == "ab" * 8
    assert meta["note"] == "x"
    assert loaded.config == state.config
    for name, p in state.weights.params.items():
        assert np.array_equal(loaded.weights.params[name].data, p.data)
        assert loaded.weights.params[name].requires_grad
    assert np.array_equal(loaded.sched.betas, state.sched.betas)
    assert np.array_equal(loaded.sched.alpha_bars, state.sched.alpha_bars)
    for k, v in state.normalizer.state_arrays().items():
        assert np.array_equal(loaded.normalizer.state_arrays()[k], v)


def test_saved_twice_identical_bytes(state, tmp_path):
    a, b = tmp_path / "a.sdck", tmp_path / "b.sdck"
    save_checkpoint(a, state, epoch=1)
    save_checkpoint(b, state, epoch=1)
    assert a.read_bytes() == b.read_bytes()


def test_kind_mismatch_rejected(state, tmp_path):
    path = tmp_path / "ds.sdds"
    write_archive(path, "dataset", {}, [("x", np.zeros(3))])
    with pytest.raises(FormatError, match="kind"):
        load_checkpoint(path)


def test_reserved_meta_key_rejected(state, tmp_path):
    with pytest.raises(FormatError):
        save_checkpoint(tmp_path / "c.sdck", state, epoch=1,
                        extra_meta={"epoch": 9})


def test_config_blob_mismatch_rejected(state, tmp_path):
    # doctor the echoed config so the stored blobs no longer fit it
    path = tmp_path / "ck.sdck"
    save_checkpoint(path, state, epoch=1)
    raw = path.read_bytes()
    patched = raw.replace(b'"d_ff":32', b'"d_ff":64', 1)
    assert patched != raw
    path.write_bytes(patched)
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_missing_parameter_rejected(state, tmp_path):
    import spike_diffuser.checkpoint as ck

    path = tmp_path / "ck.sdck"
    meta = {"model_config": __import__("dataclasses").asdict(state.config),
            "epoch": 1, "rng_digest": ""}
    blobs = [("sched.betas", state.sched.betas)]
    for name, arr in sorted(state.normalizer.state_arrays().items()):
        blobs.append((ck._NORM + name, arr))
    items = sorted(state.weights.params)[:-1]  # drop one parameter
    for name in items:
        blobs.append((ck._PARAM + name, state.weights.params[name].data))
    write_archive(path, "checkpoint", meta, blobs)
    with pytest.raises(FormatError, match="missing"):
        load_checkpoint(path)
