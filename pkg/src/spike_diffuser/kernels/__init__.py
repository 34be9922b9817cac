"""Backend selection for the LIF recurrence kernels.

SPIKE_DIFFUSER_KERNELS picks the backend:
  auto      use the compiled extension if it imported, else numpy (default)
  compiled  require the extension, raise if unavailable
  numpy     force the pure-numpy fallback
"""

import os

from . import _numpy

try:
    from . import _lifcore
except ImportError:
    _lifcore = None

_choice = os.environ.get("SPIKE_DIFFUSER_KERNELS", "auto")
if _choice == "numpy":
    _impl = _numpy
elif _choice == "compiled":
    if _lifcore is None:
        raise ImportError(
            "SPIKE_DIFFUSER_KERNELS=compiled but the _lifcore extension is not built")
    _impl = _lifcore
elif _choice == "auto":
    _impl = _lifcore if _lifcore is not None else _numpy
else:
    raise ValueError(f"unknown SPIKE_DIFFUSER_KERNELS value: {_choice!r}")

BACKEND = _impl.BACKEND
lif_forward = _impl.lif_forward
lif_backward = _impl.lif_backward


def available_backends():
    names = ["numpy"]
    if _lifcore is not None:
        names.append("compiled")
    return names
