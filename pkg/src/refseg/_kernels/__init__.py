"""Kernel backend selection.

Two interchangeable conv-kernel backends exist: BLAS-backed numpy and a
compiled Cython extension. They implement the identical contract
documented in `numpy_backend` and agree to ~1e-12 (summation order
differs). The numpy backend is the default: its taps are GEMM-shaped and
BLAS beats straightforward compiled loops on them (see
benchmarks/bench_kernels.py for the comparison on your machine).
`REFSEG_KERNELS=compiled` selects the extension (raising if it was not
built); `REFSEG_KERNELS=numpy` pins the default explicitly.
"""

import os

from . import numpy_backend

_forced = os.environ.get("REFSEG_KERNELS", "").strip().lower()

if _forced in ("", "numpy"):
    _impl = numpy_backend
elif _forced == "compiled":
    from . import _convcy as _impl
else:
    raise RuntimeError(f"unknown REFSEG_KERNELS value: {_forced!r}")

BACKEND = _impl.NAME

conv3x3_forward = _impl.conv3x3_forward
conv3x3_backward = _impl.conv3x3_backward
tconv2x_forward = _impl.tconv2x_forward
tconv2x_backward = _impl.tconv2x_backward


def backends():
    """All importable backend modules, keyed by name (for tests/benchmarks)."""
    found = {numpy_backend.NAME: numpy_backend}
    try:
        from . import _convcy
        found[_convcy.NAME] = _convcy
    except ImportError:
        pass
    return found
