"""Kernel selection.

The compiled extension is used when it imports; otherwise the NumPy
fallback.  Set ``DEEPCOFIB_BACKEND=python`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_KERNELS = {"python": _fallback}
if _compiled is not None:
    _KERNELS["compiled"] = _compiled

if os.environ.get("DEEPCOFIB_BACKEND", "").lower() == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"


def available() -> list[str]:
    return sorted(_KERNELS)


def get(name: str | None = None):
    name = BACKEND if name is None else name
    try:
        return _KERNELS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available()}") from None


def match_patches(field, refs, half, d, backend=None):
    field = np.ascontiguousarray(field, dtype=np.float64)
    refs = np.ascontiguousarray(refs, dtype=np.intp).reshape(-1, 2)
    return get(backend).match_patches(field, refs, int(half), int(d))


def accumulate(values, coords, n, height, width, backend=None):
    values = np.ascontiguousarray(values, dtype=np.float64)
    coords = np.ascontiguousarray(coords, dtype=np.intp).reshape(-1, 2)
    return get(backend).accumulate(values, coords, int(n), int(height), int(width))
