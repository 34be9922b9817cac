"""End-to-end acceptance gate.

One test per release criterion, in order: gradient fidelity, spiking
invariants, identity-at-init, schedule marginals, oracle sampler
inversion, sampler determinism and step budget, the full overfit
experiment, the ablation harness, and persistence.  Each test prints a
single summary line with its measured numbers.

The overfit experiment trains the full desk model for 250 epochs and
evaluates five checkpoints on 50 environments each; expect the better
part of an hour for the whole file on one core.
"""

import time

import numpy as np
import pytest

import spike_diffuser.cli as cli
from spike_diffuser import ndgrad as ng
from spike_diffuser import snn
from spike_diffuser.checkpoint import load_checkpoint, save_checkpoint
from spike_diffuser.data import generate_dataset, load_dataset, save_dataset
from spike_diffuser.diffusion import (
    SamplerConfig,
    ddim_grid,
    ddim_step,
    ddpm_step,
    make_schedule,
    q_sample_batch,
    sample,
)
from spike_diffuser.env import env_reset, env_step, observe
from spike_diffuser.evaluation import ExpertPlanner, RandomPlanner, evaluate
from spike_diffuser.kernels import lif_forward
from spike_diffuser.ndgrad import Tensor
from spike_diffuser.policy import DiffusionPlanner, TrainConfig, train
from spike_diffuser.snn import LifParams, lif_unroll, surrogate_grad
from spike_diffuser.transformer import (
    ModelConfig,
    build_variant,
    make_model_fn,
    predict_noise,
)

# frozen by the calibration run; see the training-loss and success
# thresholds asserted in test_c7_end_to_end_overfit
OVERFIT_SEED = 7
OVERFIT_TRAIN = dict(window_stride=2, batch_size=64)


def _line(tag: str, ok: bool, detail: str) -> None:
    print(f"[{tag}] {'PASS' if ok else 'FAIL'} ({detail})")


def _clone(weights):
    from spike_diffuser.transformer import ModelWeights

    params = {k: Tensor(v.data.copy(), requires_grad=v.requires_grad)
              for k, v in weights.params.items()}
    return ModelWeights(weights.config, params)


# ---------------------------------------------------------------------------
# 1. gradient fidelity


def test_c1_gradient_fidelity():
    t0 = time.perf_counter()
    cfg = ModelConfig(variant="stmdp", d_model=16, n_heads=2, n_enc_layers=2,
                      n_dec_layers=2, d_ff=32, t_steps=4, horizon=8)
    weights = build_variant(cfg, seed=0)
    rng = np.random.default_rng(0)
    b = 2
    obs = Tensor(rng.uniform(-1.0, 1.0, (b, cfg.n_obs, cfg.obs_dim)))
    sched = make_schedule(50, "cosine")
    x0 = Tensor(rng.uniform(-1.0, 1.0, (b, cfg.horizon, cfg.action_dim)))
    ts = rng.integers(1, 51, size=b)
    eps = rng.standard_normal((b, cfg.horizon, cfg.action_dim))
    x_t = Tensor(q_sample_batch(x0, ts, Tensor(eps), sched).data)

    def loss_value() -> float:
        with ng.no_grad():
            pred = predict_noise(weights, obs, ts, x_t, smooth=True)
            return float(np.mean((pred.data - eps) ** 2))

    pred = predict_noise(weights, obs, ts, x_t, smooth=True)
    loss = ng.mse_loss(pred, Tensor(eps))
    ng.backward(loss)

    names = sorted(weights.params)
    picks = rng.choice(len(names), size=24, replace=False)
    h = 1e-5
    worst = 0.0
    checked = 0
    for pi in picks:
        name = names[pi]
        p = weights.params[name]
        flat = p.data.reshape(-1)
        idx = int(rng.integers(flat.size))
        analytic = float(p.grad.reshape(-1)[idx]) if p.grad is not None else 0.0
        keep = flat[idx]
        flat[idx] = keep + h
        up = loss_value()
        flat[idx] = keep - h
        down = loss_value()
        flat[idx] = keep
        numeric = (up - down) / (2.0 * h)
        if abs(analytic) > 1e-8 or abs(numeric) > 1e-8:
            rel = abs(analytic - numeric) / (abs(analytic) + abs(numeric))
            worst = max(worst, rel)
            assert rel < 1e-3, f"{name}[{idx}]: {analytic} vs {numeric}"
        checked += 1
    elapsed = time.perf_counter() - t0
    ok = checked >= 20 and elapsed < 60.0
    _line("criterion 1", ok,
          f"{checked} params, worst rel err {worst:.2e}, {elapsed:.1f}s")
    assert checked >= 20
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 2. spiking invariants


def test_c2_spiking_invariants():
    rng = np.random.default_rng(1)
    params = LifParams()
    x = rng.normal(0.0, 2.0, size=(params.t_steps, 1000))

    spikes = lif_unroll(Tensor(x), params)
    binary = bool(np.isin(spikes.data, (0.0, 1.0)).all())

    spikes2, u_pre = lif_forward(np.ascontiguousarray(x), params.k, params.v_th)
    fired = spikes2[:-1] == 1.0
    carry_zero = bool(np.array_equal(u_pre[1:][fired], x[1:][fired]))
    n_fired = int(fired.sum())

    edge = 1.0 / params.epsilon
    probe = np.concatenate([rng.uniform(-1.0, 1.0, 1000), [-edge, edge, 0.0]])
    g = surrogate_grad(Tensor(probe), params.epsilon).data
    inside = np.abs(probe) < edge
    surrogate_ok = bool(np.all(g[inside] == params.epsilon / 2.0)
                        and np.all(g[~inside] == 0.0))

    ok = binary and carry_zero and surrogate_ok and n_fired > 100
    _line("criterion 2", ok,
          f"binary={binary}, zero carryover across {n_fired} spikes, "
          f"surrogate exact on {probe.size} points")
    assert binary
    assert n_fired > 100
    assert carry_zero
    assert surrogate_ok


# ---------------------------------------------------------------------------
# 3. identity at initialization


def test_c3_identity_at_init():
    rng = np.random.default_rng(2)
    checked = []
    for label in ("sdit", "stmdp", "stmdp-i"):
        variant = "stmdp" if label == "stmdp-i" else label
        cfg = ModelConfig(variant=variant, d_model=16, n_heads=2,
                          n_enc_layers=2, n_dec_layers=2, d_ff=32,
                          t_steps=2, horizon=8)
        weights = build_variant(cfg, seed=3)
        b = 2
        obs = Tensor(rng.uniform(-1.0, 1.0, (b, cfg.n_obs, cfg.obs_dim)))
        x = Tensor(rng.standard_normal((b, cfg.horizon, cfg.action_dim)))
        ts = np.array([5, 17])
        base = predict_noise(weights, obs, ts, x).data

        # every gated path is dead at init: large perturbations to the
        # weights it hides must not move the output by a single bit
        dead = _clone(weights)
        if variant == "sdit":
            dead.params["enc.0.ssa.wq"].data += 7.0
            dead.params["enc.1.ffn.w1"].data += 7.0
            dead.params["obs_proj.w"].data += 7.0
        else:
            dead.params["dec.0.xattn.wq"].data += 7.0
            dead.params["dec.1.ffn.w1"].data += 7.0
            dead.params["enc.0.ssa.wq"].data += 7.0
            dead.params["obs_proj.w"].data += 7.0
        perturbed = predict_noise(dead, obs, ts, x).data
        assert perturbed.tobytes() == base.tobytes(), label

        # and the test has teeth: an ungated path does move the output
        live = _clone(weights)
        live_name = "act_embed.w" if variant == "sdit" else "dec.0.ssa.wq"
        live.params[live_name].data += 7.0
        moved = predict_noise(live, obs, ts, x).data
        assert moved.tobytes() != base.tobytes(), label
        checked.append(label)
    _line("criterion 3", True,
          f"gated paths bitwise inert at init for {', '.join(checked)}")


# ---------------------------------------------------------------------------
# 4. schedule and marginal checks


def test_c4_schedule_marginals():
    for kind in ("cosine", "linear"):
        sched = make_schedule(100, kind)
        assert np.all(np.diff(sched.alpha_bars) < 0.0), kind

    sched = make_schedule(100, "cosine")
    rng = np.random.default_rng(4)
    n = 10_000
    x0 = Tensor(np.full((n, 1, 1), 0.7))
    worst = 0.0
    for t in (1, 5, 25, 60, 100):
        eps = rng.standard_normal((n, 1, 1))
        x_t = q_sample_batch(x0, np.full(n, t), Tensor(eps), sched)
        var = float(np.var(x_t.data))
        want = 1.0 - sched.alpha_bar(t)
        rel = abs(var - want) / want
        worst = max(worst, rel)
        assert rel < 0.05, f"t={t}: var {var} vs {want}"
    _line("criterion 4", True,
          f"alpha-bar monotone (both schedules), {n}-sample variance "
          f"within {worst:.1%} at 5 step values")


# ---------------------------------------------------------------------------
# 5. oracle sampler inversion


def test_c5_oracle_inversion():
    t0 = time.perf_counter()
    sched = make_schedule(100, "cosine")
    rng = np.random.default_rng(5)
    shape = (4, 8, 2)
    x0 = rng.standard_normal(shape)
    eps_star = rng.standard_normal(shape)

    ab_T = sched.alpha_bar(100)
    worst_ddim = 0.0
    with ng.no_grad():
        for n_steps in (10, 50, 100):
            x = Tensor(np.sqrt(ab_T) * x0 + np.sqrt(1.0 - ab_T) * eps_star)
            grid = ddim_grid(100, n_steps)
            for t, t_prev in zip(grid, grid[1:]):
                x = ddim_step(x, t, t_prev, Tensor(eps_star), sched, 0.0)
            mse = float(np.mean((x.data - x0) ** 2))
            worst_ddim = max(worst_ddim, mse)
            assert mse < 1e-6, f"ddim {n_steps} steps: mse {mse}"

        x = Tensor(rng.standard_normal(shape))
        for t in range(100, 0, -1):
            ab = sched.alpha_bar(t)
            eps_hat = (x.data - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)
            noise = Tensor(rng.standard_normal(shape)) if t > 1 else None
            x = ddpm_step(x, t, Tensor(eps_hat), sched, noise)
        ddpm_mse = float(np.mean((x.data - x0) ** 2))
    elapsed = time.perf_counter() - t0
    _line("criterion 5", ddpm_mse < 0.05,
          f"ddim worst mse {worst_ddim:.2e}, ddpm mse {ddpm_mse:.4f}, "
          f"{elapsed:.1f}s")
    assert ddpm_mse < 0.05
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 6. sampler determinism and step budget


def test_c6_ddim_determinism_and_budget():
    cfg = ModelConfig(variant="stmdp", d_model=16, n_heads=2, n_enc_layers=1,
                      n_dec_layers=1, d_ff=32, t_steps=2, horizon=8)
    weights = build_variant(cfg, seed=6)
    rng = np.random.default_rng(6)
    obs = Tensor(rng.uniform(-1.0, 1.0, (2, cfg.n_obs, cfg.obs_dim)))
    base = make_model_fn(weights, obs)
    sched = make_schedule(100, "cosine")
    shape = (2, cfg.horizon, cfg.action_dim)

    calls = {"n": 0}

    def counting(x, ts, cond):
        calls["n"] += 1
        return base(x, ts, cond)

    calls["n"] = 0
    sample(counting, None, SamplerConfig("ddpm", 100, eta=1.0, seed=0),
           sched, shape, np.random.default_rng(0))
    ddpm_calls = calls["n"]

    calls["n"] = 0
    first = sample(counting, None, SamplerConfig("ddim", 50, eta=0.0, seed=0),
                   sched, shape, np.random.default_rng(0))
    ddim_calls = calls["n"]
    second = sample(counting, None, SamplerConfig("ddim", 50, eta=0.0, seed=0),
                    sched, shape, np.random.default_rng(0))

    bitwise = first.data.tobytes() == second.data.tobytes()
    ok = bitwise and ddpm_calls == 100 and ddim_calls == 50
    _line("criterion 6", ok,
          f"eta=0 repeat bitwise={bitwise}, model evals ddpm={ddpm_calls} "
          f"ddim={ddim_calls}")
    assert bitwise
    assert ddpm_calls == 100
    assert ddim_calls == 50
    assert 2 * ddim_calls == ddpm_calls


# ---------------------------------------------------------------------------
# 7. end-to-end overfit


def test_c7_end_to_end_overfit():
    t0 = time.perf_counter()
    ds = generate_dataset(64, seed=OVERFIT_SEED)

    expert = evaluate(ExpertPlanner(), 50, seed=0, exec_steps=1)
    rand = evaluate(RandomPlanner(horizon=16), 50, seed=0, exec_steps=8)
    assert expert.success_rate == 1.0
    assert rand.success_rate < 0.1

    res = train(ds, ModelConfig(), TrainConfig(**OVERFIT_TRAIN))
    final_loss = float(res.losses[-1])

    sampler = SamplerConfig(kind="ddpm", n_inference_steps=100, eta=1.0, seed=0)
    rates = []
    for rec in res.checkpoints:
        r = evaluate(DiffusionPlanner(rec.state, sampler), 50, seed=0,
                     exec_steps=8)
        rates.append(r.success_rate)
    mean_rate = float(np.mean(rates))
    minutes = (time.perf_counter() - t0) / 60.0

    ok = final_loss < 0.05 and mean_rate >= 0.80
    _line("criterion 7", ok,
          f"train loss {final_loss:.4f} (< 0.05), success {mean_rate:.2f} "
          f"over last {len(rates)} checkpoints x 50 inits (>= 0.80), "
          f"expert {expert.success_rate:.2f}, random {rand.success_rate:.2f}, "
          f"{minutes:.1f} min (target 30)")
    assert final_loss < 0.05
    assert mean_rate >= 0.80


# ---------------------------------------------------------------------------
# 8. ablation harness


ABLATE_INI = """\
[model]
d_model = 8
n_heads = 2
n_enc_layers = 1
n_dec_layers = 1
d_ff = 16
horizon = 8
t_steps = 2

[train]
epochs = 2
batch_size = 16
checkpoint_every = 1
keep_last = 2
t_diff = 5
window_stride = 4

[run]
n_episodes = 2
n_inits = 2
exec_steps = 4
max_steps = 40
"""


def test_c8_ablation_harness(tmp_path, capsys):
    ini = tmp_path / "micro.ini"
    ini.write_text(ABLATE_INI)
    out = str(tmp_path / "run")
    rc = cli.main(["gen-data", "--config", str(ini), "--out", out])
    assert rc == 0
    rc = cli.main(["ablate", "--config", str(ini), "--out", out])
    capsys.readouterr()
    assert rc == 0, "a variant failed to train to completion"

    rows = [ln.split(",") for ln in
            (tmp_path / "run" / "ablation.csv").read_text().splitlines()
            if ln and not ln.startswith(("#", "variant"))]
    got = [(r[0], r[1], r[2], r[3]) for r in rows]
    assert got == [("sdpt", "yes", "no", "ddpm"),
                   ("sdit", "yes", "yes", "ddpm"),
                   ("stmdp", "yes", "yes", "ddpm"),
                   ("stmdp-i", "yes", "yes", "ddim")]
    for r in rows:
        assert 0.0 <= float(r[7]) <= 1.0  # mean success, no ordering claimed
    _line("criterion 8", True,
          "4 rows, ST/M-Block flags exact, all variants completed")


# ---------------------------------------------------------------------------
# 9. persistence


def test_c9_persistence(tmp_path):
    ds = generate_dataset(4, seed=9)
    p = tmp_path / "episodes.sdds"
    save_dataset(ds, p)
    back = load_dataset(p)
    for a, b in zip(ds.episodes, back.episodes):
        assert a.observations.tobytes() == b.observations.tobytes()
        assert a.actions.tobytes() == b.actions.tobytes()
        assert (a.success, a.reset_seed) == (b.success, b.reset_seed)
    save_dataset(back, tmp_path / "again.sdds")
    assert (tmp_path / "again.sdds").read_bytes() == p.read_bytes()

    cfg = ModelConfig(variant="stmdp", d_model=16, n_heads=2, n_enc_layers=1,
                      n_dec_layers=1, d_ff=32, t_steps=2, horizon=8)
    res = train(ds, cfg, TrainConfig(epochs=1, batch_size=16,
                                     checkpoint_every=1, keep_last=1,
                                     t_diff=10))
    rec = res.checkpoints[-1]
    cp = tmp_path / "model.sdck"
    save_checkpoint(cp, rec.state, rec.epoch, rec.rng_digest)
    state, meta = load_checkpoint(cp)
    for name, p0 in rec.state.weights.params.items():
        assert state.weights.params[name].data.tobytes() == p0.data.tobytes()
    assert np.array_equal(state.sched.betas, rec.state.sched.betas)

    replayed = 0
    for ep in ds.episodes[:3]:
        env = env_reset(ep.reset_seed)
        assert observe(env).tobytes() == ep.observations[0].tobytes()
        for i, act in enumerate(ep.actions):
            env, _, _, _ = env_step(env, act)
            assert observe(env).tobytes() == ep.observations[i + 1].tobytes()
            replayed += 1
    _line("criterion 9", True,
          f"dataset and checkpoint round-trips bitwise, {replayed} env "
          f"steps replayed bitwise")
