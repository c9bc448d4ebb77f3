"""Batch filtering kernels with backend dispatch.

The compiled extension (:mod:`ickalman._kernels`, built from Cython) is
used when it imported successfully; otherwise the pure-NumPy fallback in
:mod:`ickalman.kernels_py` serves the same contracts. Set the environment
variable ``ICKALMAN_PURE_PYTHON=1`` before import to force the fallback.
Both backends follow the same operation order and agree to ~1e-13; see
``benchmarks/bench_kernels.py`` for a speed comparison.
"""

from __future__ import annotations

import os

from . import kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_force_pure = os.environ.get("ICKALMAN_PURE_PYTHON", "") not in ("", "0")
_backend = kernels_py if (_compiled is None or _force_pure) else _compiled

HAVE_COMPILED = _compiled is not None

__all__ = ["HAVE_COMPILED", "backend_name", "scalar_kf_forward", "seq_kf_forward"]


def backend_name() -> str:
    return "compiled" if _backend is _compiled else "pure-python"


def scalar_kf_forward(F, Q, h, sigma2, y, x0, P0, drift=None):
    return _backend.scalar_kf_forward(F, Q, h, sigma2, y, x0, P0, drift)


def seq_kf_forward(F, Q, H, r_diag, y, x0, P0, drift=None):
    return _backend.seq_kf_forward(F, Q, H, r_diag, y, x0, P0, drift)
