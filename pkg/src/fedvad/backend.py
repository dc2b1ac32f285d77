"""Kernel backend selection: compiled extension when available, numpy
fallback otherwise. Override with FEDVAD_BACKEND=compiled|numpy.
"""

import logging
import os

from . import _nn_numpy

log = logging.getLogger(__name__)

try:
    from . import _nn_core  # compiled at install time; optional
except ImportError:
    _nn_core = None

_forced = os.environ.get("FEDVAD_BACKEND", "").strip().lower()
if _forced == "compiled":
    if _nn_core is None:
        raise ImportError(
            "FEDVAD_BACKEND=compiled but fedvad._nn_core is not built; "
            "reinstall with a C compiler or unset FEDVAD_BACKEND"
        )
    _active = _nn_core
elif _forced == "numpy":
    _active = _nn_numpy
elif _forced:
    raise ImportError(f"unknown FEDVAD_BACKEND value {_forced!r}")
else:
    _active = _nn_core if _nn_core is not None else _nn_numpy

if _active is _nn_numpy:
    log.info("fedvad detector backend: numpy")
else:
    log.info("fedvad detector backend: compiled")


def active_backend() -> str:
    return "numpy" if _active is _nn_numpy else "compiled"


def kernels():
    """The active kernel module (forward_batch / loss_grad_batch)."""
    return _active


def available_backends():
    out = {"numpy": _nn_numpy}
    if _nn_core is not None:
        out["compiled"] = _nn_core
    return out
