"""Expert demonstration datasets: generation, storage, and windowing."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import archive
from .env import ACTION_BOUND, ENV_VERSION, EXPERT_VERSION, OBS_DIM, rollout_expert
from .ndgrad import ContractError

# reset seeds are derived from the generation seed by this affine step so a
# dataset is reproducible from its header alone
_SEED_STRIDE = 1_000_003


@dataclass(frozen=True)
class Episode:
    """One expert rollout: L actions bracketed by L+1 observations."""

    observations: np.ndarray
    actions: np.ndarray
    success: bool
    reset_seed: int

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=np.float64)
        acts = np.asarray(self.actions, dtype=np.float64)
        if obs.ndim != 2 or obs.shape[1] != OBS_DIM:
            raise ContractError(f"observations must be [L+1, {OBS_DIM}], got {obs.shape}")
        if acts.ndim != 2 or acts.shape[1] != 2:
            raise ContractError(f"actions must be [L, 2], got {acts.shape}")
        if obs.shape[0] != acts.shape[0] + 1:
            raise ContractError(
                f"{obs.shape[0]} observations do not bracket {acts.shape[0]} actions"
            )
        if acts.size and np.max(np.abs(acts)) > ACTION_BOUND + 1e-12:
            raise ContractError("actions exceed the environment bound")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "actions", acts)

    def __len__(self) -> int:
        return self.actions.shape[0]


@dataclass(frozen=True)
class Dataset:
    episodes: tuple[Episode, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "episodes", tuple(self.episodes))
        if not all(ep.success for ep in self.episodes):
            raise ContractError("datasets hold successful episodes only")

    def __len__(self) -> int:
        return len(self.episodes)


def generate_dataset(n_episodes: int, seed: int) -> Dataset:
    """Roll out the scripted expert from seeded resets.

    Deterministic per ``seed``; failed rollouts are dropped with a warning
    and replaced, so the result always holds ``n_episodes`` successes.
    """
    if n_episodes < 1:
        raise ContractError("n_episodes must be >= 1")
    episodes = []
    offset = 0
    while len(episodes) < n_episodes:
        reset_seed = seed * _SEED_STRIDE + offset
        offset += 1
        obs, acts, success = rollout_expert(reset_seed)
        if not success:
            warnings.warn(f"expert failed from reset seed {reset_seed}; episode dropped")
            continue
        episodes.append(Episode(obs, acts, True, reset_seed))
    meta = {
        "generation_seed": int(seed),
        "env_version": ENV_VERSION,
        "expert_version": EXPERT_VERSION,
    }
    return Dataset(tuple(episodes), meta)


def save_dataset(dataset: Dataset, path) -> None:
    if not dataset.episodes:
        raise ContractError("refusing to write an empty dataset")
    meta = dict(dataset.meta)
    meta["episodes"] = [
        {"reset_seed": ep.reset_seed, "length": len(ep)} for ep in dataset.episodes
    ]
    blobs = []
    for i, ep in enumerate(dataset.episodes):
        blobs.append((f"ep{i}.obs", ep.observations))
        blobs.append((f"ep{i}.act", ep.actions))
    archive.write_archive(path, "dataset", meta, blobs)


def load_dataset(path) -> Dataset:
    meta, arrays = archive.read_archive(path, "dataset")
    records = meta.pop("episodes")
    episodes = []
    for i, rec in enumerate(records):
        episodes.append(
            Episode(
                arrays[f"ep{i}.obs"],
                arrays[f"ep{i}.act"],
                True,
                int(rec["reset_seed"]),
            )
        )
    return Dataset(tuple(episodes), meta)


# ---------------------------------------------------------------------------
# training windows
#
# A window anchored at step t pairs the n_obs most recent observations
# (o_{t-n_obs+1} .. o_t, clamped at the episode start) with the next
# horizon actions (a_t .. a_{t+horizon-1}, zero-filled past the episode
# end: the task is station-keeping once the block is placed).


def window_index(dataset: Dataset, stride: int = 1) -> np.ndarray:
    """All (episode, anchor step) pairs, anchors spaced ``stride`` apart."""
    if stride < 1:
        raise ContractError("stride must be >= 1")
    pairs = [
        (i, t) for i, ep in enumerate(dataset.episodes) for t in range(0, len(ep), stride)
    ]
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def extract_window(
    episode: Episode, t: int, n_obs: int, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """Observation window [n_obs, obs_dim] and action window [horizon, 2]."""
    length = len(episode)
    if not 0 <= t < length:
        raise ContractError(f"anchor {t} outside episode of length {length}")
    obs_idx = np.clip(np.arange(t - n_obs + 1, t + 1), 0, length)
    obs_win = episode.observations[obs_idx]
    act_win = np.zeros((horizon, 2), dtype=np.float64)
    avail = min(horizon, length - t)
    act_win[:avail] = episode.actions[t : t + avail]
    return obs_win, act_win
