"""Backend selection for the inner-loop kernels.

The compiled extension is used when it imports; otherwise (or when
``CLPLAB_PURE_PYTHON=1`` is set) the numpy fallback is used. Both expose
the same functions and agree to round-off.
"""

import os

from . import _kernels_py

_compiled = None
if os.environ.get("CLPLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


log_softmax_rows = _impl.log_softmax_rows
sample_actions = _impl.sample_actions
score_dlogits = _impl.score_dlogits
tabular_vjp = _impl.tabular_vjp
mlp2_forward = _impl.mlp2_forward
mlp2_vjp = _impl.mlp2_vjp
kl_rows = _impl.kl_rows
rollout_batch = _impl.rollout_batch
baseline_update = _impl.baseline_update
