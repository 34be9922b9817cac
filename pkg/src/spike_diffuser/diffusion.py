"""Noise schedules, the forward process, and DDPM/DDIM reverse sampling.

Diffusion timesteps are 1-indexed: t runs over [1, t_diff], with t=0 the
clean-data endpoint (alpha_bar(0) == 1 by convention).  Internally the
schedule arrays are 0-indexed, so betas[i] belongs to step t = i + 1.

A "model" here is any callable (x_t, t, cond) -> eps_pred where x_t is a
[B, horizon, action_dim] tensor and t an integer array of shape [B].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as ng
from .errors import ConfigError
from .ndgrad import ContractError, Tensor


@dataclass(frozen=True)
class NoiseSchedule:
    t_diff: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def alpha_bar(self, t: int) -> float:
        """Cumulative alpha at step t, with alpha_bar(0) defined as 1."""
        if not 0 <= t <= self.t_diff:
            raise ContractError(f"alpha_bar: t={t} outside [0, {self.t_diff}]")
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])


@dataclass(frozen=True)
class SamplerConfig:
    kind: str  # "ddpm" or "ddim"
    n_inference_steps: int
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("ddpm", "ddim"):
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if self.n_inference_steps < 1:
            raise ConfigError("n_inference_steps must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must be in [0, 1], got {self.eta}")


def make_schedule(t_diff: int, kind: str = "linear",
                  beta_min: float = 1e-4, beta_max: float = 2e-2) -> NoiseSchedule:
    """Build a beta schedule and its derived alpha products.

    linear: betas evenly spaced from beta_min to beta_max.
    cosine: betas from the squared-cosine alpha_bar curve (offset 0.008),
    clipped to 0.999 so every beta stays below 1; beta_min/beta_max are
    validated but do not shape this curve.
    """
    if t_diff < 1:
        raise ConfigError(f"t_diff must be >= 1, got {t_diff}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ConfigError(f"need 0 < beta_min <= beta_max < 1, got "
                          f"[{beta_min}, {beta_max}]")
    if kind == "linear":
        betas = np.linspace(beta_min, beta_max, t_diff)
    elif kind == "cosine":
        s = 0.008
        ts = np.arange(t_diff + 1)
        f = np.cos((ts / t_diff + s) / (1 + s) * np.pi / 2) ** 2
        abar = f / f[0]
        betas = np.clip(1.0 - abar[1:] / abar[:-1], 1e-8, 0.999)
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}")
    alphas = 1.0 - betas
    return NoiseSchedule(t_diff=t_diff, betas=betas, alphas=alphas,
                         alpha_bars=np.cumprod(alphas))


def schedule_from_betas(betas: np.ndarray) -> NoiseSchedule:
    """Rebuild a schedule from stored betas.

    The derived products are recomputed with the same operations used at
    construction, so a round-trip through storage is bitwise faithful.
    """
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size < 1:
        raise ConfigError("betas must be a nonempty vector")
    if np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise ConfigError("betas must lie in (0, 1)")
    alphas = 1.0 - betas
    return NoiseSchedule(t_diff=int(betas.size), betas=betas, alphas=alphas,
                         alpha_bars=np.cumprod(alphas))


def _check_t(t: int, sched: NoiseSchedule) -> None:
    if not 1 <= t <= sched.t_diff:
        raise ContractError(f"t={t} outside [1, {sched.t_diff}]")


def q_sample(x0: Tensor, t: int, noise: Tensor, sched: NoiseSchedule) -> Tensor:
    """Forward marginal: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise."""
    _check_t(t, sched)
    ab = sched.alpha_bar(t)
    return ng.add(ng.scale(x0, np.sqrt(ab)), ng.scale(noise, np.sqrt(1.0 - ab)))


def q_sample_batch(x0: Tensor, ts: np.ndarray, noise: Tensor,
                   sched: NoiseSchedule) -> Tensor:
    """q_sample with an independent step per leading-axis element."""
    if np.any(ts < 1) or np.any(ts > sched.t_diff):
        raise ContractError("per-element t outside [1, t_diff]")
    ab = sched.alpha_bars[ts - 1]
    expand = (slice(None),) + (None,) * (x0.data.ndim - 1)
    ca = np.broadcast_to(np.sqrt(ab)[expand], x0.data.shape).copy()
    cb = np.broadcast_to(np.sqrt(1.0 - ab)[expand], x0.data.shape).copy()
    return ng.add(ng.mul(x0, Tensor(ca)), ng.mul(noise, Tensor(cb)))


def ddpm_step(x_t: Tensor, t: int, eps_pred: Tensor, sched: NoiseSchedule,
              noise: Tensor | None = None) -> Tensor:
    """One ancestral reverse step with fixed variance sigma_t^2 = beta_t.

    The t=1 step is deterministic: the noise argument is ignored there.
    """
    _check_t(t, sched)
    beta = float(sched.betas[t - 1])
    alpha = float(sched.alphas[t - 1])
    ab = sched.alpha_bar(t)
    mean = ng.scale(
        ng.sub(x_t, ng.scale(eps_pred, beta / np.sqrt(1.0 - ab))),
        1.0 / np.sqrt(alpha))
    if t == 1 or noise is None:
        return mean
    return ng.add(mean, ng.scale(noise, np.sqrt(beta)))


def ddim_step(x_t: Tensor, t: int, t_prev: int, eps_pred: Tensor,
              sched: NoiseSchedule, eta: float = 0.0,
              noise: Tensor | None = None) -> Tensor:
    """Jump from step t to t_prev via the predicted-x0 parameterization.

    With eta == 0 the update is a deterministic function of x_t and
    eps_pred; the noise argument is not touched at all, keeping repeated
    runs bitwise identical.
    """
    if not 0 <= t_prev < t <= sched.t_diff:
        raise ContractError(f"need 0 <= t_prev < t <= t_diff, got "
                            f"t_prev={t_prev}, t={t}")
    ab_t = sched.alpha_bar(t)
    ab_p = sched.alpha_bar(t_prev)
    x0_hat = ng.scale(ng.sub(x_t, ng.scale(eps_pred, np.sqrt(1.0 - ab_t))),
                      1.0 / np.sqrt(ab_t))
    if eta == 0.0:
        sigma = 0.0
    else:
        sigma = (eta * np.sqrt((1.0 - ab_p) / (1.0 - ab_t))
                 * np.sqrt(1.0 - ab_t / ab_p))
    # roundoff can push the residual direction weight slightly negative
    dir_coef = np.sqrt(max(1.0 - ab_p - sigma ** 2, 0.0))
    out = ng.add(ng.scale(x0_hat, np.sqrt(ab_p)), ng.scale(eps_pred, dir_coef))
    if sigma == 0.0 or noise is None:
        return out
    return ng.add(out, ng.scale(noise, sigma))


def ddim_grid(t_diff: int, n_steps: int) -> list[int]:
    """Evenly spaced step sequence t_diff -> 0 with n_steps transitions."""
    if not 1 <= n_steps <= t_diff:
        raise ConfigError(f"n_steps must be in [1, t_diff], got {n_steps}")
    grid = [int(round(v)) for v in np.linspace(t_diff, 0.0, n_steps + 1)]
    if any(a <= b for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"degenerate step grid for n_steps={n_steps}")
    return grid


def training_loss(model, x0: Tensor, cond, sched: NoiseSchedule,
                  rng: np.random.Generator) -> Tensor:
    """Noise-prediction objective: MSE(model(x_t, t, cond), eps).

    t is drawn uniformly in [1, t_diff] per batch element, eps is standard
    normal of x0's shape.
    """
    b = x0.data.shape[0]
    ts = rng.integers(1, sched.t_diff + 1, size=b)
    eps = rng.standard_normal(x0.data.shape)
    x_t = q_sample_batch(x0, ts, Tensor(eps), sched)
    pred = model(x_t, ts, cond)
    return ng.mse_loss(pred, Tensor(eps))


def sample(model, cond, sampler: SamplerConfig, sched: NoiseSchedule,
           shape: tuple, rng: np.random.Generator) -> Tensor:
    """Draw x_T ~ N(0, I) and denoise it down to the model's x0 estimate.

    shape is the full batched output shape [B, horizon, action_dim].
    """
    if sampler.kind == "ddpm" and sampler.n_inference_steps != sched.t_diff:
        raise ConfigError("ddpm must use n_inference_steps == t_diff")
    if sampler.n_inference_steps > sched.t_diff:
        raise ConfigError("n_inference_steps cannot exceed t_diff")
    b = shape[0]
    x = Tensor(rng.standard_normal(shape))
    with ng.no_grad():
        if sampler.kind == "ddpm":
            for t in range(sched.t_diff, 0, -1):
                ts = np.full(b, t)
                eps_pred = model(x, ts, cond)
                noise = Tensor(rng.standard_normal(shape)) if t > 1 else None
                x = ddpm_step(x, t, eps_pred, sched, noise)
        else:
            grid = ddim_grid(sched.t_diff, sampler.n_inference_steps)
            for t, t_prev in zip(grid, grid[1:]):
                ts = np.full(b, t)
                eps_pred = model(x, ts, cond)
                noise = (Tensor(rng.standard_normal(shape))
                         if sampler.eta > 0.0 else None)
                x = ddim_step(x, t, t_prev, eps_pred, sched, sampler.eta, noise)
    return x
