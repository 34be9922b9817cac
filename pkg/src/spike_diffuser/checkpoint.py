"""Checkpoint persistence: model weights, normalizer, schedule, metadata.

Checkpoints reuse the shared archive container (see archive.py). The
header echoes the full model configuration; on load the parameter set is
rebuilt from that echo and every stored blob must match its expected
shape, so a file can never silently reinterpret weights.
"""

import dataclasses

import numpy as np

from . import archive
from .diffusion import schedule_from_betas
from .errors import FormatError
from .ndgrad import Tensor
from .policy import Normalizer, PolicyState
from .snn import LifParams
from .transformer import ModelConfig, ModelWeights, build_variant

_PARAM = "param."
_NORM = "norm."


def save_checkpoint(path, state: PolicyState, epoch: int,
                    rng_digest: str = "", extra_meta: dict | None = None) -> None:
    cfg_dict = dataclasses.asdict(state.config)
    meta = {
        "model_config": cfg_dict,
        "epoch": int(epoch),
        "rng_digest": rng_digest,
    }
    if extra_meta:
        overlap = meta.keys() & extra_meta.keys()
        if overlap:
            raise FormatError(f"extra_meta collides with reserved keys {overlap}")
        meta.update(extra_meta)
    blobs: list[tuple[str, np.ndarray]] = [("sched.betas", state.sched.betas)]
    for name, arr in sorted(state.normalizer.state_arrays().items()):
        blobs.append((_NORM + name, arr))
    for name in sorted(state.weights.params):
        blobs.append((_PARAM + name, state.weights.params[name].data))
    archive.write_archive(path, "checkpoint", meta, blobs)


def load_checkpoint(path) -> tuple[PolicyState, dict]:
    """Rebuild a PolicyState; returns (state, meta with epoch/rng_digest)."""
    meta, arrays = archive.read_archive(path, "checkpoint")
    cfg_dict = dict(meta["model_config"])
    lif = LifParams(**cfg_dict.pop("lif"))
    config = ModelConfig(lif=lif, **cfg_dict)

    reference = build_variant(config, seed=0)
    params: dict[str, Tensor] = {}
    expected = set(_PARAM + name for name in reference.params)
    stored = set(k for k in arrays if k.startswith(_PARAM))
    if stored != expected:
        missing = sorted(expected - stored)[:3]
        surplus = sorted(stored - expected)[:3]
        raise FormatError(
            f"{path}: parameter set does not match the echoed config "
            f"(missing {missing}, surplus {surplus})")
    for name, ref in reference.params.items():
        arr = arrays[_PARAM + name]
        if arr.shape != ref.data.shape:
            raise FormatError(
                f"{path}: {name} has shape {arr.shape}, "
                f"config implies {ref.data.shape}")
        params[name] = Tensor(arr, requires_grad=True)

    norm = Normalizer(
        arrays[_NORM + "obs_center"], arrays[_NORM + "obs_half"],
        arrays[_NORM + "act_center"], arrays[_NORM + "act_half"])
    sched = schedule_from_betas(arrays["sched.betas"])
    state = PolicyState(ModelWeights(config, params), norm, sched)
    return state, meta
