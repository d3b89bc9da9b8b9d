"""Selects the compiled kernel core or the numpy fallback at import time.

Set ``EBSURV_BACKEND=python`` to force the fallback, or
``EBSURV_BACKEND=cython`` to insist on the compiled module (raising if it
is not built).  Both expose the same functions with matching semantics.
"""

import os

_requested = os.environ.get("EBSURV_BACKEND", "").strip().lower()

if _requested in ("python", "numpy"):
    from . import _kernels_py as _impl

    BACKEND = "python"
elif _requested in ("", "cython", "compiled"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _requested:
            raise
        from . import _kernels_py as _impl

        BACKEND = "python"
else:
    raise ValueError(f"unrecognized EBSURV_BACKEND value: {_requested!r}")

matmul = _impl.matmul
affine = _impl.affine
relu = _impl.relu
relu_backward = _impl.relu_backward
col_sum = _impl.col_sum
logsumexp_rows = _impl.logsumexp_rows
softmax_rows = _impl.softmax_rows


def active_backend() -> str:
    """Name of the kernel implementation in use: "cython" or "python"."""
    return BACKEND
