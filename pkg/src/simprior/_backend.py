"""Pick the rollout kernel at import time.

The compiled extension is used when it was built; ``SIMPRIOR_PURE=1`` forces
the pure-Python fallback.
"""
import os

from simprior import _kernel_py

kernel = _kernel_py
if os.environ.get("SIMPRIOR_PURE") != "1":
    try:
        from simprior import _kernel as kernel  # type: ignore[no-redef]
    except ImportError:
        kernel = _kernel_py

BACKEND = kernel.BACKEND
