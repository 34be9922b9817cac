"""Kinematic 2D push task: drive a point agent to shove a disc block onto a
goal pose without spinning it out of tolerance.

The arena is the unit square.  Per step the agent moves by a per-axis
bounded displacement; if it ends up inside the block's contact disc, the
block is pushed out along the agent-to-block direction (never farther than
the agent itself moved) and rotates in proportion to the tangential
component of the agent's motion.  Success requires the block within 0.05 of
the goal position and its angle within 0.2 rad of the goal angle.

Resets draw poses with pairwise separation, and the goal angle starts
within tolerance of the block angle, so the angle criterion is a
keep-constraint: sloppy pushing that spins the block forfeits it.

Everything is a pure function of explicit state; no hidden globals.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

ACTION_BOUND = 0.05
CONTACT_RADIUS = 0.06
POS_TOL = 0.05
ANGLE_TOL = 0.2
STEP_BUDGET = 300
# rotation per unit of tangential push; high values make glancing contact
# spin the block outside the angle tolerance faster than a slightly noisy
# policy can correct, so the task stops discriminating policy quality
C_ROT = 0.25

RESET_MARGIN = 0.1
MIN_SEPARATION = 0.15
GOAL_ANGLE_SPREAD = 0.1

OBS_DIM = 7  # agent(2) + block(2) + block_angle(1) + goal_pos(2)

# bumped when the dynamics or the controller change behavior; stamped into
# dataset headers so stale demonstrations are detectable
ENV_VERSION = 2
EXPERT_VERSION = 1


@dataclass(frozen=True)
class EnvState:
    agent_pos: np.ndarray
    block_pos: np.ndarray
    block_angle: float
    goal_pos: np.ndarray
    goal_angle: float
    steps_elapsed: int = 0


def wrap_angle(theta: float) -> float:
    """Map any angle into [-pi, pi)."""
    return float((theta + np.pi) % (2.0 * np.pi) - np.pi)


def observe(state: EnvState) -> np.ndarray:
    """Observation vector: agent, block, block angle, goal position.

    The goal angle is intentionally absent: it starts within tolerance of
    the block angle, so policies only need to avoid rotating the block.
    """
    return np.concatenate([
        state.agent_pos, state.block_pos, [state.block_angle], state.goal_pos,
    ])


def env_reset(seed: int) -> EnvState:
    """Seeded reset with pairwise pose separation of MIN_SEPARATION."""
    rng = np.random.default_rng(seed)
    lo, hi = RESET_MARGIN, 1.0 - RESET_MARGIN
    while True:
        pts = rng.uniform(lo, hi, size=(3, 2))
        d01 = np.linalg.norm(pts[0] - pts[1])
        d02 = np.linalg.norm(pts[0] - pts[2])
        d12 = np.linalg.norm(pts[1] - pts[2])
        if min(d01, d02, d12) >= MIN_SEPARATION:
            break
    block_angle = wrap_angle(rng.uniform(-np.pi, np.pi))
    goal_angle = wrap_angle(
        block_angle + rng.uniform(-GOAL_ANGLE_SPREAD, GOAL_ANGLE_SPREAD))
    return EnvState(agent_pos=pts[0], block_pos=pts[1], block_angle=block_angle,
                    goal_pos=pts[2], goal_angle=goal_angle, steps_elapsed=0)


def _is_success(block_pos: np.ndarray, block_angle: float,
                state: EnvState) -> bool:
    pos_ok = np.linalg.norm(block_pos - state.goal_pos) < POS_TOL
    ang_ok = abs(wrap_angle(block_angle - state.goal_angle)) < ANGLE_TOL
    return bool(pos_ok and ang_ok)


def env_step(state: EnvState, action: np.ndarray):
    """Advance one step; returns (state, done, success, info).

    Out-of-bounds actions are clipped rather than rejected; info records
    whether clipping happened and whether the block was touched.
    """
    action = np.asarray(action, dtype=np.float64)
    clipped = np.clip(action, -ACTION_BOUND, ACTION_BOUND)
    was_clipped = bool(np.any(clipped != action))

    agent_new = np.clip(state.agent_pos + clipped, 0.0, 1.0)
    delta = agent_new - state.agent_pos

    block_new = state.block_pos
    angle_new = state.block_angle
    to_block = state.block_pos - agent_new
    dist = float(np.linalg.norm(to_block))
    contact = dist < CONTACT_RADIUS
    if contact:
        u = to_block / max(dist, 1e-9)
        # push the block back to the disc boundary, but never farther than
        # the agent itself traveled this step
        mag = min(CONTACT_RADIUS - dist, float(np.linalg.norm(delta)))
        block_new = np.clip(state.block_pos + u * mag, 0.0, 1.0)
        tangent = np.array([-u[1], u[0]])
        angle_new = wrap_angle(state.block_angle
                               + C_ROT * float(np.dot(delta, tangent)))

    success = _is_success(block_new, angle_new, state)
    steps = state.steps_elapsed + 1
    done = success or steps >= STEP_BUDGET
    new_state = EnvState(agent_pos=agent_new, block_pos=block_new,
                         block_angle=angle_new, goal_pos=state.goal_pos,
                         goal_angle=state.goal_angle, steps_elapsed=steps)
    return new_state, done, success, {"action_clipped": was_clipped,
                                      "contact": contact}


# ---------------------------------------------------------------------------
# scripted expert

PUSH_STANDOFF = CONTACT_RADIUS + 0.02
_ALIGN_TOL = 0.02
_CLEAR_RADIUS = CONTACT_RADIUS + 0.01  # strictly below PUSH_STANDOFF
_ORBIT_RADIUS = 0.12


def _bounded(v: np.ndarray) -> np.ndarray:
    """Scale v into the per-axis action box without bending its direction."""
    peak = float(np.max(np.abs(v)))
    return v if peak <= ACTION_BOUND else v * (ACTION_BOUND / peak)


def _segment_hits_disc(p: np.ndarray, q: np.ndarray, center: np.ndarray,
                       radius: float) -> bool:
    pq = q - p
    denom = float(np.dot(pq, pq))
    t = 0.0 if denom == 0.0 else float(np.clip(np.dot(center - p, pq) / denom,
                                               0.0, 1.0))
    return float(np.linalg.norm(p + t * pq - center)) < radius


def scripted_expert(state: EnvState) -> np.ndarray:
    """Approach a point behind the block, then push through its center.

    A proportional controller with a tangential orbit for getting around
    the block without touching it.  Pushing through the center keeps the
    tangential contact component (and hence rotation) near zero.
    """
    a, b, g = state.agent_pos, state.block_pos, state.goal_pos
    to_goal = g - b
    dist_goal = float(np.linalg.norm(to_goal))
    if dist_goal < POS_TOL / 2:
        return np.zeros(2)
    u = to_goal / dist_goal
    rel = a - b
    along = float(np.dot(rel, u))
    lateral = float(np.linalg.norm(rel - along * u))

    if along < 0.0 and lateral < 0.03 and -along < PUSH_STANDOFF + 0.03:
        # in position: track a point on the goal-line just inside the disc,
        # so lateral drift is corrected while the block is driven forward
        target = b - u * (CONTACT_RADIUS - 0.035)
        return _bounded(target - a)

    behind = b - u * PUSH_STANDOFF
    if not _segment_hits_disc(a, behind, b, _CLEAR_RADIUS):
        # straight shot; unit gain converges without overshoot and
        # _bounded keeps each step on the tested segment
        return _bounded(behind - a)

    # orbit the block toward its far side, holding a safe radius
    dist_b = float(np.linalg.norm(rel))
    rel_hat = rel / max(dist_b, 1e-9)
    ang_agent = np.arctan2(rel[1], rel[0])
    ang_behind = np.arctan2(-u[1], -u[0])
    sgn = 1.0 if wrap_angle(ang_behind - ang_agent) >= 0.0 else -1.0
    tangent = sgn * np.array([-rel_hat[1], rel_hat[0]])
    radial = (_ORBIT_RADIUS - dist_b) * rel_hat
    return _bounded(tangent * ACTION_BOUND + radial)


def rollout_expert(seed: int):
    """Run the expert to termination; returns (observations, actions, success).

    observations has one more row than actions (the terminal observation).
    """
    state = env_reset(seed)
    obs = [observe(state)]
    acts = []
    success = False
    for _ in range(STEP_BUDGET):
        action = scripted_expert(state)
        state, done, success, _ = env_step(state, action)
        acts.append(action)
        obs.append(observe(state))
        if done:
            break
    return np.array(obs), np.array(acts), success
