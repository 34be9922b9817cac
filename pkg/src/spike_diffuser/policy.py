"""Training loop and receding-horizon control binding the model to the task."""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import ndgrad as ng
from .data import Dataset, extract_window, window_index
from .diffusion import NoiseSchedule, SamplerConfig, make_schedule, sample, training_loss
from .env import ACTION_BOUND, env_reset, env_step, observe
from .errors import ConfigError
from .ndgrad import ContractError, NumericalError, Tensor
from .transformer import ModelConfig, ModelWeights, build_variant, make_model_fn


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    batch_size: int = 64
    learning_rate: float = 1e-3
    checkpoint_every: int = 25
    keep_last: int = 5
    seed: int = 0
    window_stride: int = 1
    t_diff: int = 100
    schedule: str = "cosine"
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        for name in ("epochs", "batch_size", "checkpoint_every", "keep_last",
                     "window_stride", "t_diff"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("betas must lie in [0, 1)")


class Normalizer:
    """Per-dimension affine map onto [-1, 1] fit from dataset min/max."""

    def __init__(self, obs_center, obs_half, act_center, act_half):
        self.obs_center = np.asarray(obs_center, dtype=np.float64)
        self.obs_half = np.asarray(obs_half, dtype=np.float64)
        self.act_center = np.asarray(act_center, dtype=np.float64)
        self.act_half = np.asarray(act_half, dtype=np.float64)
        if np.any(self.obs_half <= 0) or np.any(self.act_half <= 0):
            raise ContractError("normalizer scales must be positive")

    @classmethod
    def fit(cls, dataset: Dataset) -> "Normalizer":
        obs = np.concatenate([ep.observations for ep in dataset.episodes])
        acts = np.concatenate([ep.actions for ep in dataset.episodes])
        return cls(*_center_half(obs), *_center_half(acts))

    def normalize_obs(self, obs):
        return (np.asarray(obs, dtype=np.float64) - self.obs_center) / self.obs_half

    def normalize_act(self, acts):
        return (np.asarray(acts, dtype=np.float64) - self.act_center) / self.act_half

    def denormalize_act(self, acts):
        return np.asarray(acts, dtype=np.float64) * self.act_half + self.act_center

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "obs_center": self.obs_center,
            "obs_half": self.obs_half,
            "act_center": self.act_center,
            "act_half": self.act_half,
        }


def _center_half(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    center = (hi + lo) / 2.0
    # constant dimensions map to 0 with unit scale instead of dividing by 0
    half = np.where(hi > lo, (hi - lo) / 2.0, 1.0)
    return center, half


@dataclass(frozen=True)
class PolicyState:
    weights: ModelWeights
    normalizer: Normalizer
    sched: NoiseSchedule

    @property
    def config(self) -> ModelConfig:
        return self.weights.config


class Adam:
    """Adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


@dataclass(frozen=True)
class CheckpointRecord:
    epoch: int
    state: PolicyState
    rng_digest: str


@dataclass(frozen=True)
class TrainResult:
    losses: np.ndarray
    checkpoints: tuple[CheckpointRecord, ...]


def _assemble_windows(dataset: Dataset, cfg: ModelConfig, stride: int,
                      norm: Normalizer) -> tuple[np.ndarray, np.ndarray]:
    idx = window_index(dataset, stride)
    obs_w = np.empty((len(idx), cfg.n_obs, cfg.obs_dim))
    act_w = np.empty((len(idx), cfg.horizon, cfg.action_dim))
    for row, (ep_i, t) in enumerate(idx):
        ow, aw = extract_window(dataset.episodes[ep_i], int(t), cfg.n_obs, cfg.horizon)
        obs_w[row] = norm.normalize_obs(ow)
        act_w[row] = norm.normalize_act(aw)
    return obs_w, act_w


def _snapshot(weights: ModelWeights, norm: Normalizer,
              sched: NoiseSchedule) -> PolicyState:
    frozen = {k: Tensor(p.data.copy()) for k, p in weights.params.items()}
    return PolicyState(ModelWeights(weights.config, frozen), norm, sched)


def train(dataset: Dataset, model_cfg: ModelConfig,
          train_cfg: TrainConfig) -> TrainResult:
    """Fit the noise predictor on expert windows.

    Deterministic per train_cfg.seed: weight init, shuffling, diffusion
    step draws, and noise draws all come from streams derived from it.
    A NaN anywhere aborts with epoch context rather than training on.
    """
    if not dataset.episodes:
        raise ContractError("cannot train on an empty dataset")
    norm = Normalizer.fit(dataset)
    sched = make_schedule(train_cfg.t_diff, train_cfg.schedule)
    obs_w, act_w = _assemble_windows(dataset, model_cfg, train_cfg.window_stride, norm)
    weights = build_variant(model_cfg, seed=train_cfg.seed)
    opt = Adam(weights.params, train_cfg.learning_rate,
               train_cfg.beta1, train_cfg.beta2)
    rng = np.random.default_rng(train_cfg.seed)

    n = obs_w.shape[0]
    losses = np.empty(train_cfg.epochs)
    checkpoints: list[CheckpointRecord] = []
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, train_cfg.batch_size):
            chunk = order[start:start + train_cfg.batch_size]
            obs_t = Tensor(obs_w[chunk])
            x0 = Tensor(act_w[chunk])
            model = make_model_fn(weights, obs_t)
            try:
                loss = training_loss(model, x0, None, sched, rng)
                opt.zero_grad()
                ng.backward(loss)
            except NumericalError as exc:
                raise NumericalError(
                    f"training aborted at epoch {epoch}: {exc}") from exc
            opt.step()
            batch_losses.append(float(loss.data))
        losses[epoch - 1] = float(np.mean(batch_losses))
        if epoch % train_cfg.checkpoint_every == 0:
            digest = _rng_digest(rng)
            checkpoints.append(
                CheckpointRecord(epoch, _snapshot(weights, norm, sched), digest))
            del checkpoints[:-train_cfg.keep_last]
    return TrainResult(losses, tuple(checkpoints))


def _rng_digest(rng: np.random.Generator) -> str:
    state = json.dumps(rng.bit_generator.state, sort_keys=True, default=str)
    return hashlib.sha256(state.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# planning interfaces


def generate_actions(obs_window: np.ndarray, state: PolicyState,
                     sampler: SamplerConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """Denoise one action trajectory for a single observation window."""
    out = generate_actions_batch(obs_window[None], state, sampler, rng)
    return out[0]


def generate_actions_batch(obs_windows: np.ndarray, state: PolicyState,
                           sampler: SamplerConfig,
                           rng: np.random.Generator) -> np.ndarray:
    """Batched denoising: [B, n_obs, obs_dim] -> [B, horizon, action_dim].

    Output is denormalized and clipped to the environment's action bound.
    """
    cfg = state.config
    obs_windows = np.asarray(obs_windows, dtype=np.float64)
    if obs_windows.ndim != 3 or obs_windows.shape[1:] != (cfg.n_obs, cfg.obs_dim):
        raise ContractError(
            f"obs windows must be [B, {cfg.n_obs}, {cfg.obs_dim}], "
            f"got {obs_windows.shape}")
    obs_t = Tensor(state.normalizer.normalize_obs(obs_windows))
    model = make_model_fn(state.weights, obs_t)
    shape = (obs_windows.shape[0], cfg.horizon, cfg.action_dim)
    x0 = sample(model, None, sampler, state.sched, shape, rng)
    acts = state.normalizer.denormalize_act(x0.data)
    return np.clip(acts, -ACTION_BOUND, ACTION_BOUND)


class DiffusionPlanner:
    """Plans action chunks with the trained denoiser."""

    def __init__(self, state: PolicyState, sampler: SamplerConfig):
        self.state = state
        self.sampler = sampler
        self.n_obs = state.config.n_obs
        self.horizon = state.config.horizon

    def plan(self, obs_windows: np.ndarray,
             rng: np.random.Generator) -> np.ndarray:
        return generate_actions_batch(obs_windows, self.state, self.sampler, rng)


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    steps: int
    observations: np.ndarray
    actions: np.ndarray


def rollout(planner, exec_steps: int, max_steps: int, seed: int) -> EpisodeResult:
    """Receding-horizon episode: plan a chunk, execute its head, re-observe.

    The planner sees the planner.n_obs most recent observations (repeated
    at episode start) and must return planner.horizon actions; only the
    first exec_steps are executed before replanning.
    """
    if exec_steps < 1 or exec_steps > planner.horizon:
        raise ContractError("exec_steps must lie in [1, horizon]")
    state = env_reset(seed)
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    observations = [observe(state)]
    actions: list[np.ndarray] = []
    success = False
    done = False
    steps = 0
    while steps < max_steps and not done:
        window = _obs_window(observations, planner.n_obs)
        chunk = planner.plan(window[None], noise_rng)[0]
        for act in chunk[:exec_steps]:
            state, done, success, _ = env_step(state, act)
            observations.append(observe(state))
            actions.append(np.asarray(act, dtype=np.float64))
            steps += 1
            if done or steps >= max_steps:
                break
    acts = np.asarray(actions) if actions else np.zeros((0, 2))
    return EpisodeResult(bool(success), steps, np.asarray(observations), acts)


def _obs_window(history: list[np.ndarray], n_obs: int) -> np.ndarray:
    take = history[-n_obs:]
    pad = [history[0]] * (n_obs - len(take))
    return np.asarray(pad + take)
