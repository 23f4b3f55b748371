"""Backend selection for the hot kernels.

Prefers the compiled Cython extension when it is importable, otherwise falls
back to the numpy implementations. ADPGCN_BACKEND=python|cython overrides the
automatic choice ("cython" fails loudly if the extension is missing).

tensor.py and training.py look the kernel functions up through this module at
call time, so benchmarks/tests may swap implementations via set_backend().
"""

import os

from . import _kernels_py

_KERNEL_NAMES = (
    "relu_fwd",
    "relu_bwd",
    "softmax_rows_fwd",
    "softmax_rows_bwd",
    "layer_norm_fwd",
    "layer_norm_bwd",
    "adam_update",
)

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "python"


def available_backends():
    return ("python", "cython") if _ckernels is not None else ("python",)


def set_backend(name):
    """Point the module-level kernel functions at one implementation."""
    global BACKEND
    if name == "cython":
        if _ckernels is None:
            raise ImportError(
                "compiled kernels unavailable; build the extension or use "
                "ADPGCN_BACKEND=python"
            )
        impl = _ckernels
    elif name == "python":
        impl = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    for fn in _KERNEL_NAMES:
        globals()[fn] = getattr(impl, fn)
    BACKEND = name


_requested = os.environ.get("ADPGCN_BACKEND", "auto").lower()
if _requested == "auto":
    set_backend("cython" if _ckernels is not None else "python")
else:
    set_backend(_requested)
