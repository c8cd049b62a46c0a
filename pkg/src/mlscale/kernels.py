"""Backend selection for the hot kernels.

The compiled extension is used when it imports cleanly, unless the environment
variable ``MLSCALE_BACKEND`` is set to ``python``. Callers import kernel
functions from this module only.
"""

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("MLSCALE_BACKEND", "").lower() not in ("python", "py", "fallback"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        _impl = _compiled

ridge_half_sweep = _impl.ridge_half_sweep
lowrank_entries = _impl.lowrank_entries
kmeans_partials = _impl.kmeans_partials
murmurhash3_32 = _impl.murmurhash3_32
hash_grams = _impl.hash_grams
SINGULAR_RTOL = _fallback.SINGULAR_RTOL


def get_backend(name):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        get_backend("cython")
    except ImportError:
        pass
    else:
        names.append("cython")
    return names
