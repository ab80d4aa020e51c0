"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice with identical signatures and semantics: a
numba ``@njit`` version in :mod:`xld.kernels.numba_impl` and a pure
numpy version in :mod:`xld.kernels.numpy_impl`.  The active backend is
chosen once at import time from the ``XLD_BACKEND`` environment
variable (``numba`` or ``numpy``).  Default is numba when it imports,
numpy otherwise.  ``benchmarks/bench_kernels.py`` compares the two.

All kernels are dtype-generic: float32 for training, float64 for the
gradient-check and influence-reconstruction paths.
"""

import os

from . import numpy_impl

_requested = os.environ.get("XLD_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(f"XLD_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    _impl = numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = numpy_impl
        BACKEND = "numpy"

KERNEL_NAMES = [
    "rmsnorm_fwd",
    "rmsnorm_bwd",
    "rope_rotate",
    "rope_apply",
    "rope_tables",
    "causal_softmax_fwd",
    "causal_softmax_bwd",
    "silu_mul_fwd",
    "silu_mul_bwd",
    "cross_entropy_fwd",
    "cross_entropy_bwd",
    "cross_entropy_fwd_bwd",
    "log_softmax_rows",
    "embedding_grad",
    "adamw_update",
]

rmsnorm_fwd = _impl.rmsnorm_fwd
rmsnorm_bwd = _impl.rmsnorm_bwd
rope_rotate = _impl.rope_rotate
rope_apply = _impl.rope_apply
rope_tables = _impl.rope_tables
causal_softmax_fwd = _impl.causal_softmax_fwd
causal_softmax_bwd = _impl.causal_softmax_bwd
silu_mul_fwd = _impl.silu_mul_fwd
silu_mul_bwd = _impl.silu_mul_bwd
cross_entropy_fwd = _impl.cross_entropy_fwd
cross_entropy_bwd = _impl.cross_entropy_bwd
cross_entropy_fwd_bwd = _impl.cross_entropy_fwd_bwd
log_softmax_rows = _impl.log_softmax_rows
embedding_grad = _impl.embedding_grad
adamw_update = _impl.adamw_update
