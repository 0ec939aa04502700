"""Select the compiled kernels when available, else the pure-python twins.

Set FRACGAUSS_PURE=1 in the environment to force the fallback (used by the
benchmark and by tests that compare the two backends).
"""
import os

if os.environ.get("FRACGAUSS_PURE") == "1":
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

chaos_chain = _impl.chaos_chain
min_plus_step = _impl.min_plus_step
