"""Kernel backend selection.

The compiled extension is preferred; set ``COUGHSCREEN_PURE_PYTHON=1`` to
force the numpy fallback.
"""

import os
import types

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def available():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get(name):
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        mod = _compiled
    elif name == "python":
        mod = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    return types.SimpleNamespace(name=name, rfft_batch=mod.rfft_batch,
                                 im2col=mod.im2col, col2im=mod.col2im)


def _select():
    if os.environ.get("COUGHSCREEN_PURE_PYTHON", "") not in ("", "0"):
        return get("python")
    return get(available()[0])


kernels = _select()
BACKEND = kernels.name
