"""Command line: dataset generation, training, evaluation, ablation, sampling.

Exit codes: 0 success, 2 bad configuration or arguments, 3 I/O or file
format trouble, 4 numerical abort during training. Every file written
embeds the seed and the effective-config digest that produced it, and
identical inputs produce byte-identical outputs (wall-clock timings go
to stdout, never into files).
"""

import argparse
import glob as globmod
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_digest, load_config, write_effective_config
from .data import generate_dataset, load_dataset, save_dataset
from .diffusion import SamplerConfig
from .errors import ConfigError, FormatError
from .evaluation import ExpertPlanner, evaluate
from .ndgrad import ContractError, NumericalError
from .policy import DiffusionPlanner, rollout, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

_VARIANT_CHOICES = ("sdpt", "sdit", "stmdp", "stmdp-i")

# ablation rows in table order: (label, variant, m_block, sampler)
# ddpm rows denoise the full t_diff; the ddim row uses half that budget
_ABLATION_ROWS = (
    ("sdpt", "sdpt", False, "ddpm"),
    ("sdit", "sdit", True, "ddpm"),
    ("stmdp", "stmdp", True, "ddpm"),
    ("stmdp-i", "stmdp", True, "ddim"),
)


def _threads() -> int:
    raw = os.environ.get("SPIKE_DIFFUSER_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SPIKE_DIFFUSER_THREADS={raw!r} is not an integer")
    if n < 1:
        raise ConfigError("SPIKE_DIFFUSER_THREADS must be >= 1")
    return n


def _overrides_from_args(args) -> dict:
    ov: dict = {}
    variant = getattr(args, "variant", None)
    if variant:
        if variant == "stmdp-i":
            ov.update({
                "model.variant": "stmdp", "model.sampler": "ddim",
                "sampler.kind": "ddim", "sampler.n_inference_steps": 50,
                "sampler.eta": 0.0,
            })
        else:
            ov.update({
                "model.variant": variant, "model.sampler": "ddpm",
                "sampler.kind": "ddpm", "sampler.n_inference_steps": 100,
                "sampler.eta": 1.0,
            })
    # explicit sampler flags win over what the variant implies
    if getattr(args, "sampler", None):
        ov["sampler.kind"] = args.sampler
    if getattr(args, "steps", None) is not None:
        ov["sampler.n_inference_steps"] = args.steps
    if getattr(args, "eta", None) is not None:
        ov["sampler.eta"] = args.eta
    if getattr(args, "seed", None) is not None:
        ov["run.seed"] = args.seed
        ov["train.seed"] = args.seed
        ov["sampler.seed"] = args.seed
    if getattr(args, "out", None):
        ov["run.out"] = args.out
    return ov


def _prepare_out(cfg: RunConfig) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    write_effective_config(cfg, os.path.join(cfg.out, "effective.ini"))
    return config_digest(cfg)


def _dataset_path(cfg: RunConfig) -> str:
    # relative dataset names live in the run's output directory
    if os.path.isabs(cfg.dataset):
        return cfg.dataset
    return os.path.join(cfg.out, cfg.dataset)


def _stamp(seed: int, digest: str) -> str:
    return f"# seed={seed}\n# config_digest={digest}\n"


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg: RunConfig, args) -> int:
    dataset = generate_dataset(cfg.n_episodes, cfg.seed)
    dataset.meta["config_digest"] = config_digest(cfg)
    path = _dataset_path(cfg)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_dataset(dataset, path)
    print(f"wrote {len(dataset)} episodes to {path} (seed={cfg.seed})")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    dataset = load_dataset(_dataset_path(cfg))
    digest = _prepare_out(cfg)
    t0 = time.time()
    result = train(dataset, cfg.model, cfg.train)
    extra = {"seed": cfg.train.seed, "config_digest": digest}
    for rec in result.checkpoints:
        name = os.path.join(cfg.out, f"ckpt_ep{rec.epoch:04d}.sdck")
        save_checkpoint(name, rec.state, rec.epoch, rec.rng_digest, extra)
    loss_path = os.path.join(cfg.out, "loss.csv")
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write(_stamp(cfg.train.seed, digest))
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(result.losses, start=1):
            fh.write(f"{epoch},{float(loss)!r}\n")
    print(f"trained {cfg.model.variant} for {cfg.train.epochs} epochs "
          f"in {time.time() - t0:.0f}s")
    print(f"final loss {result.losses[-1]:.4f}; "
          f"{len(result.checkpoints)} checkpoints in {cfg.out}")
    return EXIT_OK


def _eval_one(path: str, cfg: RunConfig):
    state, meta = load_checkpoint(path)
    planner = DiffusionPlanner(state, cfg.sampler)
    t0 = time.time()
    result = evaluate(planner, cfg.n_inits, cfg.seed, cfg.exec_steps,
                      cfg.max_steps)
    wall = time.time() - t0
    label = os.path.splitext(os.path.basename(path))[0]
    mcfg = state.config
    return (label, mcfg.variant, cfg.sampler.kind,
            cfg.sampler.n_inference_steps, result, wall)


def cmd_eval(cfg: RunConfig, args) -> int:
    paths = sorted(globmod.glob(args.checkpoints))
    if not paths:
        raise FileNotFoundError(f"no checkpoint matches {args.checkpoints!r}")
    digest = _prepare_out(cfg)
    t0 = time.time()
    expert = evaluate(ExpertPlanner(), cfg.n_inits, cfg.seed, exec_steps=1,
                      max_steps=cfg.max_steps)
    expert_wall = time.time() - t0
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda p: _eval_one(p, cfg), paths))
    else:
        rows = [_eval_one(p, cfg) for p in paths]

    def steps_of(res):
        return float(np.mean([ep.steps for ep in res.episodes]))

    csv_path = os.path.join(cfg.out, "eval.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(_stamp(cfg.seed, digest))
        fh.write("label,variant,sampler,inference_steps,"
                 "success_rate,n_episodes,mean_steps\n")
        fh.write(f"expert,expert,scripted,0,{expert.success_rate!r},"
                 f"{cfg.n_inits},{steps_of(expert)!r}\n")
        for label, variant, kind, steps, result, _ in rows:
            fh.write(f"{label},{variant},{kind},{steps},"
                     f"{result.success_rate!r},{cfg.n_inits},"
                     f"{steps_of(result)!r}\n")
        mean_rate = float(np.mean([r[4].success_rate for r in rows]))
        fh.write(f"mean,,,,{mean_rate!r},{cfg.n_inits * len(rows)},\n")

    print(f"expert    success {expert.success_rate:.2f}  "
          f"({expert_wall:.0f}s)")
    for label, variant, kind, steps, result, wall in rows:
        print(f"{label}  success {result.success_rate:.2f}  "
              f"mean_steps {steps_of(result):.0f}  ({wall:.0f}s)")
    print(f"mean over {len(rows)} checkpoints: {mean_rate:.3f}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    dataset = load_dataset(_dataset_path(cfg))
    digest = _prepare_out(cfg)
    table = []
    for label, variant, m_block, kind in _ABLATION_ROWS:
        steps = cfg.train.t_diff if kind == "ddpm" else max(1, cfg.train.t_diff // 2)
        model_cfg = replace(cfg.model, variant=variant, sampler=kind)
        sampler = SamplerConfig(kind=kind, n_inference_steps=steps,
                                eta=0.0 if kind == "ddim" else 1.0,
                                seed=cfg.sampler.seed)
        t0 = time.time()
        result = train(dataset, model_cfg, cfg.train)
        rates = []
        for rec in result.checkpoints:
            ev = evaluate(DiffusionPlanner(rec.state, sampler), cfg.n_inits,
                          cfg.seed, cfg.exec_steps, cfg.max_steps)
            rates.append(ev.success_rate)
        wall = time.time() - t0
        table.append((label, m_block, kind, steps,
                      float(result.losses[-1]), rates))
        print(f"{label}: st=yes m_block={'yes' if m_block else 'no'} "
              f"final_loss {result.losses[-1]:.4f} "
              f"mean_success {np.mean(rates):.2f} ({wall:.0f}s)")

    csv_path = os.path.join(cfg.out, "ablation.csv")
    k = cfg.train.keep_last
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(_stamp(cfg.seed, digest))
        rate_cols = ",".join(f"rate_{i + 1}" for i in range(k))
        fh.write("variant,st,m_block,sampler,inference_steps,"
                 f"final_loss,n_episodes,success_rate_mean,{rate_cols}\n")
        for label, m_block, kind, steps, loss, rates in table:
            padded = rates + [float("nan")] * (k - len(rates))
            cols = ",".join(repr(r) for r in padded)
            fh.write(f"{label},yes,{'yes' if m_block else 'no'},{kind},{steps},"
                     f"{loss!r},{cfg.n_inits},{float(np.mean(rates))!r},{cols}\n")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_sample(cfg: RunConfig, args) -> int:
    state, _ = load_checkpoint(args.checkpoint)
    digest = _prepare_out(cfg)
    planner = DiffusionPlanner(state, cfg.sampler)
    result = rollout(planner, cfg.exec_steps, cfg.max_steps, cfg.seed)
    csv_path = os.path.join(cfg.out, "trajectory.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(_stamp(cfg.seed, digest))
        fh.write("step,action_x,action_y,agent_x,agent_y,block_x,block_y\n")
        for i, act in enumerate(result.actions):
            after = result.observations[i + 1]
            fh.write(f"{i},{float(act[0])!r},{float(act[1])!r},"
                     f"{float(after[0])!r},{float(after[1])!r},"
                     f"{float(after[2])!r},{float(after[3])!r}\n")
    print(f"rollout: success={result.success} steps={result.steps}")
    print(f"wrote {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


def _add_common(sub):
    sub.add_argument("--config", default=None, help="INI config file")
    sub.add_argument("--seed", type=int, default=None,
                     help="master seed (run, train, and sampler)")
    sub.add_argument("--out", default=None, help="output directory")


def _add_model_flags(sub):
    sub.add_argument("--variant", choices=_VARIANT_CHOICES, default=None)
    sub.add_argument("--sampler", choices=("ddpm", "ddim"), default=None)
    sub.add_argument("--steps", type=int, default=None,
                     help="inference steps for the sampler")
    sub.add_argument("--eta", type=float, default=None,
                     help="ddim stochasticity (0 = deterministic)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spike-diffuser",
        description="Spiking-transformer diffusion policy on a 2D push task")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-data", help="roll out the scripted expert")
    _add_common(p)
    p.set_defaults(handler=cmd_gen_data)

    p = subs.add_parser("train", help="train a variant on a dataset")
    _add_common(p)
    _add_model_flags(p)
    p.set_defaults(handler=cmd_train)

    p = subs.add_parser("eval", help="evaluate checkpoints over seeded resets")
    p.add_argument("checkpoints", help="checkpoint path glob")
    _add_common(p)
    _add_model_flags(p)
    p.set_defaults(handler=cmd_eval)

    p = subs.add_parser("ablate", help="train and evaluate all four variants")
    _add_common(p)
    p.set_defaults(handler=cmd_ablate)

    p = subs.add_parser("sample", help="generate one rollout from a checkpoint")
    p.add_argument("checkpoint", help="checkpoint file")
    _add_common(p)
    _add_model_flags(p)
    p.set_defaults(handler=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
        return args.handler(cfg, args)
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
