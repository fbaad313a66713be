"""Kernel backend selection.

The compiled extension (Cython) is preferred; the pure-numpy fallback is
used when it is missing or when DISPATCHCLUST_KERNELS=python is set.
Both expose gru_forward / gru_backward / dtw_cost with the same contract.
"""

import os

from . import fallback

_forced = os.environ.get("DISPATCHCLUST_KERNELS", "").strip().lower()

if _forced == "python":
    _impl = fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise ImportError(
                "DISPATCHCLUST_KERNELS=compiled but the extension is not built; "
                "reinstall the package or unset the variable"
            )
        _impl = fallback
        BACKEND = "python"

gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward
dtw_cost = _impl.dtw_cost


def active_backend() -> str:
    """Name of the kernel backend in use: 'compiled' or 'python'."""
    return BACKEND
