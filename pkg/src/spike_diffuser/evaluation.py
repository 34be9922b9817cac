"""Batched policy evaluation over seeded environment resets.

Episodes advance in lockstep: each round gathers the observation windows
of the still-running episodes, asks the planner for one batched plan, and
executes a chunk per episode. Finished episodes leave the batch, so the
network sees shrinking batches rather than padded ones. Results are a
deterministic function of (planner, n_inits, seed); per-episode outcomes
are retained for reporting.
"""

from dataclasses import dataclass

import numpy as np

from .env import ACTION_BOUND, OBS_DIM, STEP_BUDGET, EnvState, env_reset, env_step, observe, scripted_expert
from .ndgrad import ContractError


@dataclass(frozen=True)
class EpisodeRecord:
    reset_seed: int
    success: bool
    steps: int


@dataclass(frozen=True)
class EvalResult:
    episodes: tuple[EpisodeRecord, ...]

    @property
    def success_rate(self) -> float:
        return float(np.mean([ep.success for ep in self.episodes]))


class _Slot:
    __slots__ = ("state", "history", "steps", "success", "done")

    def __init__(self, state: EnvState):
        self.state = state
        self.history = [observe(state)]
        self.steps = 0
        self.success = False
        self.done = False

    def window(self, n_obs: int) -> np.ndarray:
        take = self.history[-n_obs:]
        pad = [self.history[0]] * (n_obs - len(take))
        return np.asarray(pad + take)


def evaluate(planner, n_inits: int, seed: int, exec_steps: int,
             max_steps: int = STEP_BUDGET) -> EvalResult:
    """Fraction of successes over resets seed, seed+1, ..., seed+n_inits-1."""
    if n_inits < 1:
        raise ContractError("n_inits must be >= 1")
    if exec_steps < 1 or exec_steps > planner.horizon:
        raise ContractError("exec_steps must lie in [1, horizon]")
    slots = [_Slot(env_reset(seed + i)) for i in range(n_inits)]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    active = [i for i in range(n_inits) if max_steps > 0]
    while active:
        windows = np.stack([slots[i].window(planner.n_obs) for i in active])
        plans = planner.plan(windows, rng)
        still = []
        for row, i in enumerate(active):
            slot = slots[i]
            for act in plans[row][:exec_steps]:
                state, done, success, _ = env_step(slot.state, act)
                slot.state = state
                slot.history.append(observe(state))
                slot.steps += 1
                if done or slot.steps >= max_steps:
                    slot.success = bool(success)
                    slot.done = True
                    break
            if not slot.done:
                still.append(i)
        active = still
    records = tuple(
        EpisodeRecord(seed + i, slots[i].success, slots[i].steps)
        for i in range(n_inits)
    )
    return EvalResult(records)


# ---------------------------------------------------------------------------
# baseline planners


def _state_from_obs(obs: np.ndarray) -> EnvState:
    return EnvState(
        agent_pos=obs[0:2].copy(),
        block_pos=obs[2:4].copy(),
        block_angle=float(obs[4]),
        goal_pos=obs[5:7].copy(),
        goal_angle=0.0,
        steps_elapsed=0,
    )


class ExpertPlanner:
    """Scripted controller behind the planner interface (replan each step)."""

    n_obs = 1
    horizon = 1

    def plan(self, obs_windows: np.ndarray, rng) -> np.ndarray:
        if obs_windows.shape[1:] != (1, OBS_DIM):
            raise ContractError(f"expert expects [B, 1, {OBS_DIM}] windows")
        acts = [scripted_expert(_state_from_obs(w[-1])) for w in obs_windows]
        return np.asarray(acts)[:, None, :]


class RandomPlanner:
    """Uniform noise in the action box; the task's floor baseline."""

    n_obs = 1

    def __init__(self, horizon: int = 8):
        self.horizon = horizon

    def plan(self, obs_windows: np.ndarray, rng) -> np.ndarray:
        b = obs_windows.shape[0]
        return rng.uniform(-ACTION_BOUND, ACTION_BOUND, (b, self.horizon, 2))
