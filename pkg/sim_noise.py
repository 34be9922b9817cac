"""Temporary: tolerance of the receding-horizon loop to chunk noise."""
import numpy as np

import spike_diffuser.env as envmod
from spike_diffuser.env import env_reset, env_step, scripted_expert, observe

N_SEEDS = 20


def episode(seed: int, sigma: float, rng) -> tuple[bool, int, float]:
    state = env_reset(seed)
    steps = 0
    max_angle = 0.0
    while steps < 300:
        # plan: roll the expert forward in sim to get an 8-action chunk
        plan = []
        sim = state
        for _ in range(8):
            a = scripted_expert(sim)
            plan.append(a)
            sim, d, _, _ = env_step(sim, a)
            if d:
                break
        done = False
        for a in plan:
            noisy = np.clip(a + rng.normal(0.0, sigma, 2), -0.05, 0.05)
            state, done, success, _ = env_step(state, noisy)
            steps += 1
            o = observe(state)
            max_angle = max(max_angle, abs(o[4]))
            if done or steps >= 300:
                break
        if done:
            return success, steps, max_angle
    return False, steps, max_angle


for c_rot in (None, 0.5, 0.25):
    if c_rot is not None:
        envmod.C_ROT = c_rot
    label = envmod.C_ROT
    for sigma in (0.0, 0.0025, 0.005, 0.0075, 0.01):
        rng = np.random.default_rng(0)
        res = [episode(s, sigma, rng) for s in range(N_SEEDS)]
        rate = np.mean([r[0] for r in res])
        steps = np.mean([r[1] for r in res])
        ang = np.max([r[2] for r in res])
        print(f"c_rot {label:4} sigma {sigma:.4f}: success {rate:.2f} "
              f"mean_steps {steps:5.1f} worst_angle {ang:.2f}", flush=True)
