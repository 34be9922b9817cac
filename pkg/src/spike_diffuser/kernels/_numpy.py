"""Pure-numpy LIF recurrence kernels (fallback backend).

Layout contract shared with the compiled backend: inputs are C-contiguous
float64 of shape [T, N] (time major, features flattened).  Forward returns
both the spike train and the pre-threshold membrane potentials; backward
replays the recurrence in reverse with the membrane reset treated as a
constant (no gradient flows through the reset gate).
"""

import numpy as np

BACKEND = "numpy"


def lif_forward(x: np.ndarray, k: float, v_th: float):
    """Run the leaky integrate-and-fire recurrence over axis 0.

    u[t] = k * u[t-1] * (1 - spike[t-1]) + x[t],  spike[t] = (u[t] >= v_th)

    Returns (spikes, u_pre), both [T, N] float64; u_pre holds the membrane
    potential at each step before thresholding.
    """
    T, N = x.shape
    spikes = np.empty((T, N), dtype=np.float64)
    u_pre = np.empty((T, N), dtype=np.float64)
    u = np.zeros(N, dtype=np.float64)
    live = np.ones(N, dtype=np.float64)  # 1 - spike of the previous step
    for t in range(T):
        # association matches the composed-op route (mul then scale) bitwise
        u = k * (u * live) + x[t]
        u_pre[t] = u
        s = (u >= v_th).astype(np.float64)
        spikes[t] = s
        live = 1.0 - s
    return spikes, u_pre


def lif_backward(grad_spikes: np.ndarray, spikes: np.ndarray, u_pre: np.ndarray,
                 k: float, v_th: float, eps: float) -> np.ndarray:
    """Gradient of lif_forward w.r.t. its input sequence.

    The Heaviside threshold uses a piecewise-linear surrogate: derivative
    eps/2 where |u - v_th| < 1/eps, else 0.  The reset factor (1 - spike)
    is differentiated as a constant.
    """
    T, N = grad_spikes.shape
    half = 0.5 * eps
    window = 1.0 / eps
    grad_x = np.empty((T, N), dtype=np.float64)
    carry = np.zeros(N, dtype=np.float64)  # dL/du_pre[t+1]
    for t in range(T - 1, -1, -1):
        sg = np.where(np.abs(u_pre[t] - v_th) < window, half, 0.0)
        du = grad_spikes[t] * sg + carry
        grad_x[t] = du
        if t > 0:
            carry = du * k * (1.0 - spikes[t - 1])
    return grad_x
