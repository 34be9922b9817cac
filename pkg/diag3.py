"""Temporary: stride-1 calibration with saved checkpoint and rollout forensics."""
import time

import numpy as np

from spike_diffuser.checkpoint import save_checkpoint
from spike_diffuser.data import extract_window, generate_dataset
from spike_diffuser.diffusion import SamplerConfig
from spike_diffuser.env import env_reset, env_step, observe
from spike_diffuser.evaluation import evaluate
from spike_diffuser.policy import (
    DiffusionPlanner,
    TrainConfig,
    train,
    generate_actions_batch,
)
from spike_diffuser.transformer import ModelConfig

t0 = time.time()
ds = generate_dataset(64, seed=7)
mc = ModelConfig()
tc = TrainConfig(window_stride=1, batch_size=64)
res = train(ds, mc, tc)
print(f"train done {(time.time()-t0)/60:.1f} min", flush=True)
print("loss tail:", res.losses[-10:].round(4), flush=True)
print("final loss:", res.losses[-1], flush=True)

for rec in res.checkpoints:
    save_checkpoint(f"/root/notes/calib3_ep{rec.epoch}.sdck", rec.state,
                    rec.epoch, rec.rng_digest)
last = res.checkpoints[-1]
norm = last.state.normalizer

# fidelity at several anchors: first action and executed 8-step prefix
sampler = SamplerConfig(kind="ddpm", n_inference_steps=100, eta=1.0, seed=0)
rng = np.random.default_rng(5)
for anchor in (0, 4, 8, 16, 24, 32):
    raw_obs, raw_act = [], []
    for ep in ds.episodes:
        if anchor < len(ep):
            ow, aw = extract_window(ep, anchor, mc.n_obs, mc.horizon)
            raw_obs.append(ow)
            raw_act.append(aw)
        if len(raw_obs) == 16:
            break
    gen = generate_actions_batch(np.stack(raw_obs), last.state, sampler, rng)
    g = norm.normalize_act(gen)
    e = norm.normalize_act(np.stack(raw_act))
    e1 = np.linalg.norm(g[:, 0] - e[:, 0], axis=1)
    e8 = np.linalg.norm(g[:, :8] - e[:, :8], axis=2).mean(axis=1)
    print(f"anchor {anchor:2d}: first median {np.median(e1):.3f} "
          f"max {e1.max():.3f}  prefix8 median {np.median(e8):.3f}",
          flush=True)

# newest checkpoint, full eval
te = time.time()
r = evaluate(DiffusionPlanner(last.state, sampler), 50, seed=0, exec_steps=8)
steps = [e.steps for e in r.episodes]
print(f"ckpt {last.epoch}: success {r.success_rate:.2f} "
      f"mean_steps {np.mean(steps):.0f} eval {time.time()-te:.0f}s", flush=True)

if r.success_rate > 0:
    rates = [r.success_rate]
    for rec in reversed(res.checkpoints[:-1]):
        ev = evaluate(DiffusionPlanner(rec.state, sampler), 50, seed=0,
                      exec_steps=8)
        rates.append(ev.success_rate)
        print(f"ckpt {rec.epoch}: success {ev.success_rate:.2f}", flush=True)
    print(f"MEAN SUCCESS {np.mean(rates):.3f}", flush=True)

# cheap comparisons regardless
ddim = SamplerConfig(kind="ddim", n_inference_steps=50, eta=0.0, seed=0)
r2 = evaluate(DiffusionPlanner(last.state, ddim), 10, seed=0, exec_steps=8)
print(f"ddim50 exec8 over 10: {r2.success_rate:.2f}", flush=True)
r3 = evaluate(DiffusionPlanner(last.state, sampler), 10, seed=0, exec_steps=4)
print(f"ddpm exec4 over 10: {r3.success_rate:.2f}", flush=True)

# verbose rollout: where does it stall
planner = DiffusionPlanner(last.state, sampler)
for seed in (0, 3):
    state = env_reset(seed)
    hist = [observe(state)]
    nrng = np.random.default_rng(999)
    print(f"--- rollout seed {seed}", flush=True)
    for rnd in range(14):
        take = hist[-2:] if len(hist) >= 2 else [hist[0], hist[0]]
        window = np.asarray([hist[0]] * (2 - len(take)) + take)
        plan = planner.plan(window[None], nrng)[0]
        for act in plan[:8]:
            state, done, success, _ = env_step(state, act)
            hist.append(observe(state))
            if done:
                break
        o = hist[-1]
        bg = np.linalg.norm(o[2:4] - o[5:7])
        ab = np.linalg.norm(o[0:2] - o[2:4])
        print(f"round {rnd:2d} block->goal {bg:.3f} agent->block {ab:.3f} "
              f"angle {o[4]:+.2f} done {done}", flush=True)
        if done:
            print(f"success={success}", flush=True)
            break
print(f"TOTAL {(time.time()-t0)/60:.1f} min", flush=True)
