"""LIF kernel backends: hand-checked recurrences and numpy/compiled parity."""

import numpy as np
import pytest

from spike_diffuser import kernels
from spike_diffuser.kernels import _numpy

try:
    from spike_diffuser.kernels import _lifcore
except ImportError:
    _lifcore = None

BACKENDS = [_numpy] if _lifcore is None else [_numpy, _lifcore]


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.BACKEND)
def test_forward_hand_trace(impl):
    # u: 1.2 (fires) -> reset, 0.3 -> 0.5*0.3+0.9 = 1.05 (fires)
    x = np.array([[1.2], [0.3], [0.9]])
    spikes, u_pre = impl.lif_forward(x, 0.5, 1.0)
    np.testing.assert_array_equal(spikes.ravel(), [1.0, 0.0, 1.0])
    np.testing.assert_allclose(u_pre.ravel(), [1.2, 0.3, 1.05], rtol=1e-15)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.BACKEND)
def test_backward_hand_trace(impl):
    # two subthreshold steps, both inside the surrogate window (sg = 1 at eps=2)
    x = np.array([[0.8], [0.4]])
    spikes, u_pre = impl.lif_forward(x, 0.5, 1.0)
    np.testing.assert_array_equal(spikes.ravel(), [0.0, 0.0])
    g = np.ones((2, 1))
    gx = impl.lif_backward(g, spikes, u_pre, 0.5, 1.0, 2.0)
    # du[1] = 1, du[0] = 1 + 0.5 * du[1]
    np.testing.assert_allclose(gx.ravel(), [1.5, 1.0], rtol=1e-15)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.BACKEND)
def test_spikes_binary_and_reset(impl):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(0.8, 1.0, size=(8, 256)))
    spikes, u_pre = impl.lif_forward(x, 0.5, 1.0)
    assert set(np.unique(spikes)) <= {0.0, 1.0}
    # after a spike the carryover term vanishes: u_pre[t+1] == x[t+1] there
    fired = spikes[:-1] == 1.0
    np.testing.assert_array_equal(u_pre[1:][fired], x[1:][fired])


@pytest.mark.skipif(_lifcore is None, reason="compiled backend not built")
def test_backend_parity_bitwise():
    rng = np.random.default_rng(1)
    x = np.ascontiguousarray(rng.normal(0.5, 1.2, size=(8, 512)))
    s_np, u_np = _numpy.lif_forward(x, 0.5, 1.0)
    s_cy, u_cy = _lifcore.lif_forward(x, 0.5, 1.0)
    np.testing.assert_array_equal(s_np, s_cy)
    np.testing.assert_array_equal(u_np, u_cy)
    g = np.ascontiguousarray(rng.normal(size=(8, 512)))
    gx_np = _numpy.lif_backward(g, s_np, u_np, 0.5, 1.0, 2.0)
    gx_cy = _lifcore.lif_backward(g, s_cy, u_cy, 0.5, 1.0, 2.0)
    np.testing.assert_array_equal(gx_np, gx_cy)


def test_selected_backend_exposes_contract():
    assert kernels.BACKEND in ("numpy", "compiled")
    assert "numpy" in kernels.available_backends()
    assert callable(kernels.lif_forward) and callable(kernels.lif_backward)
