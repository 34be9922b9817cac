import sys
import time

import numpy as np

from spike_diffuser.data import generate_dataset
from spike_diffuser.diffusion import SamplerConfig
from spike_diffuser.evaluation import evaluate
from spike_diffuser.policy import DiffusionPlanner, TrainConfig, train, generate_actions_batch, _assemble_windows
from spike_diffuser.transformer import ModelConfig

stride = int(sys.argv[1]) if len(sys.argv) > 1 else 2
batch = int(sys.argv[2]) if len(sys.argv) > 2 else 64

t0 = time.time()
ds = generate_dataset(64, seed=7)
mc = ModelConfig()
tc = TrainConfig(window_stride=stride, batch_size=batch)
print(f"stride={stride} batch={batch}", flush=True)
res = train(ds, mc, tc)
t_train = time.time() - t0
print(f"train done {t_train/60:.1f} min", flush=True)
print("loss head:", res.losses[:5].round(4), flush=True)
print("loss tail:", res.losses[-10:].round(4), flush=True)
print("final loss:", res.losses[-1], flush=True)

# quick fidelity probe on the last checkpoint before any slow eval
from spike_diffuser.data import extract_window

last = res.checkpoints[-1]
norm = last.state.normalizer
raw_obs, raw_act = [], []
for ep in ds.episodes[:16]:
    ow, aw = extract_window(ep, 0, mc.n_obs, mc.horizon)
    raw_obs.append(ow)
    raw_act.append(aw)
sampler = SamplerConfig(kind="ddpm", n_inference_steps=100, eta=1.0, seed=0)
rng = np.random.default_rng(5)
gen = generate_actions_batch(np.stack(raw_obs), last.state, sampler, rng)
gen_n = norm.normalize_act(gen)
exp_n = norm.normalize_act(np.stack(raw_act))
err = np.linalg.norm(gen_n[:, 0] - exp_n[:, 0], axis=1)
print(f"first-action err median {np.median(err):.3f} max {err.max():.3f}",
      flush=True)

rates = []
for rec in reversed(res.checkpoints):
    te = time.time()
    r = evaluate(DiffusionPlanner(rec.state, sampler), 50, seed=0, exec_steps=8)
    rates.append(r.success_rate)
    steps = [e.steps for e in r.episodes]
    print(f"ckpt {rec.epoch}: success {r.success_rate:.2f} "
          f"mean_steps {np.mean(steps):.0f} eval {time.time()-te:.0f}s",
          flush=True)
    if rec is res.checkpoints[-1] and r.success_rate == 0.0:
        print("newest checkpoint at zero, stopping early", flush=True)
        break
print(f"MEAN SUCCESS {np.mean(rates):.3f}", flush=True)
print(f"TOTAL {(time.time()-t0)/60:.1f} min", flush=True)
