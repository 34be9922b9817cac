"""Leaky integrate-and-fire dynamics and spike coding.

Membrane update per step: u' = k * u * (1 - o) + input, spike = H(u' - v_th),
with the spike count starting from a zero state.  The threshold fires on
ties (u' == v_th spikes).

Two differentiation modes:

* hard (default, used for training): the forward emits exact binary spikes;
  the backward substitutes a rectangular surrogate for the step function
  (eps/2 inside |u - v_th| < 1/eps, zero outside) and treats the (1 - o)
  reset factor as a constant.
* smooth (used by finite-difference oracles): the step function is replaced
  in the forward pass by its piecewise-linear primitive
  g(x) = clip((eps*x + 1)/2, 0, 1) and the reset gate stays on the tape,
  so the analytic gradient is the true gradient of the smoothed network
  and central differences agree with it to first order.

Spike sequences are tensors with a leading step axis (shape [t_steps, ...]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import ndgrad as ng
from .ndgrad import ContractError, DimensionError, Tensor


@dataclass(frozen=True)
class LifParams:
    """Neuron constants: decay k, threshold v_th, surrogate width, step count."""

    k: float = 0.5
    v_th: float = 1.0
    epsilon: float = 2.0
    t_steps: int = 8

    def __post_init__(self):
        if not 0.0 < self.k < 1.0:
            raise ContractError(f"decay constant k must be in (0, 1), got {self.k}")
        if self.v_th <= 0.0:
            raise ContractError(f"threshold v_th must be positive, got {self.v_th}")
        if self.epsilon <= 0.0:
            raise ContractError(f"surrogate width epsilon must be positive, got {self.epsilon}")
        if self.t_steps < 1:
            raise ContractError(f"t_steps must be >= 1, got {self.t_steps}")


@dataclass
class SpikeState:
    """Membrane potentials and the previous step's spikes (equal shapes).

    In hard mode o is exactly binary; smooth mode relaxes it to [0, 1].
    """

    u: Tensor
    o: Tensor


def zero_state(shape) -> SpikeState:
    z = np.zeros(shape, dtype=np.float64)
    return SpikeState(u=Tensor(z), o=Tensor(z.copy()))


def surrogate_grad(x, epsilon: float) -> Tensor:
    """Derivative of the surrogate g: eps/2 where |x| < 1/eps, else 0."""
    if epsilon <= 0.0:
        raise ContractError("epsilon must be positive")
    xd = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    return Tensor(np.where(np.abs(xd) < 1.0 / epsilon, 0.5 * epsilon, 0.0))


def heaviside_spike(u: Tensor, v_th: float, epsilon: float = 2.0) -> Tensor:
    """Binary threshold with surrogate backward (tie at u == v_th fires)."""
    ud = u.data
    sg = None

    def bwd(g):
        nonlocal sg
        if sg is None:
            sg = np.where(np.abs(ud - v_th) < 1.0 / epsilon, 0.5 * epsilon, 0.0)
        return (g * sg,)

    return ng._make((ud >= v_th).astype(np.float64), "heaviside_spike", (u,), bwd,
                    check=False)


def smooth_spike(u: Tensor, v_th: float, epsilon: float = 2.0) -> Tensor:
    """Surrogate primitive g(u - v_th), exactly differentiable a.e."""
    d = u.data - v_th
    y = np.clip(0.5 * (epsilon * d + 1.0), 0.0, 1.0)

    def bwd(g):
        return (g * np.where(np.abs(d) < 1.0 / epsilon, 0.5 * epsilon, 0.0),)

    return ng._make(y, "smooth_spike", (u,), bwd, check=False)


def lif_step(state: SpikeState, input_current: Tensor, params: LifParams,
             smooth: bool = False):
    """One membrane update; returns (next_state, spikes)."""
    if state.u.data.shape != input_current.data.shape:
        raise DimensionError(
            f"lif_step: state shape {state.u.data.shape} does not match "
            f"input shape {input_current.data.shape}")
    if smooth:
        live = ng.sub(Tensor(np.ones(())), state.o)
    else:
        live = Tensor(1.0 - state.o.data)  # reset gate detached from the tape
    u_next = ng.add(ng.scale(ng.mul(state.u, live), params.k), input_current)
    fire = smooth_spike if smooth else heaviside_spike
    spikes = fire(u_next, params.v_th, params.epsilon)
    return SpikeState(u=u_next, o=spikes), spikes


def lif_unroll(inputs: Tensor, params: LifParams, smooth: bool = False) -> Tensor:
    """Run the recurrence over the leading step axis from a zero state.

    Hard mode dispatches to the fused kernel backend (one tape node for the
    whole sequence); smooth mode composes lif_step so every intermediate
    stays differentiable.
    """
    if inputs.data.ndim < 1 or inputs.data.shape[0] != params.t_steps:
        raise ContractError(
            f"lif_unroll: leading axis {inputs.data.shape[:1]} must equal "
            f"t_steps={params.t_steps}")
    if smooth:
        state = zero_state(inputs.data.shape[1:])
        outs = []
        for t in range(params.t_steps):
            state, s = lif_step(state, ng.take_leading(inputs, t), params, smooth=True)
            outs.append(ng.reshape(s, (1,) + s.data.shape))
        return outs[0] if params.t_steps == 1 else ng.concat(outs, axis=0)

    T = params.t_steps
    trail = inputs.data.shape[1:]
    x2 = np.ascontiguousarray(inputs.data.reshape(T, -1))
    spikes2, u_pre = kernels.lif_forward(x2, params.k, params.v_th)

    def bwd(g):
        g2 = np.ascontiguousarray(g.reshape(T, -1))
        gx = kernels.lif_backward(g2, spikes2, u_pre, params.k, params.v_th,
                                  params.epsilon)
        return (gx.reshape((T,) + trail),)

    return ng._make(spikes2.reshape((T,) + trail), "lif_unroll", (inputs,), bwd,
                    check=False)


def direct_encode(x: Tensor, t_steps: int) -> Tensor:
    """Replicate x across t_steps identical entries on a new leading axis."""
    if t_steps < 1:
        raise ContractError(f"t_steps must be >= 1, got {t_steps}")
    return ng.repeat_leading(x, t_steps)


def rate_decode(seq: Tensor) -> Tensor:
    """Mean over the leading step axis."""
    if seq.data.ndim < 1 or seq.data.shape[0] == 0:
        raise ContractError("rate_decode of an empty sequence")
    return ng.mean_axis(seq, 0)
