"""Select the compiled ray kernels when available, else the numpy fallback.

Set the environment variable ``PHOTOCONV_NO_EXTENSION=1`` to force the pure
numpy implementation (used by the benchmark for comparison).
"""

import os

from . import _kernels_py

if os.environ.get("PHOTOCONV_NO_EXTENSION"):
    _impl = _kernels_py
    HAVE_EXTENSION = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        HAVE_EXTENSION = True
    except ImportError:
        _impl = _kernels_py
        HAVE_EXTENSION = False

ray_sweep = _impl.ray_sweep
fold_propagation = _impl.fold_propagation

__all__ = ["ray_sweep", "fold_propagation", "HAVE_EXTENSION"]
