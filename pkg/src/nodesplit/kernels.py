"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is picked at import. ``use_backend`` switches explicitly.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = "compiled" if _ckernels is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend() -> str:
    return _active


def use_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _active = name


@contextmanager
def backend_scope(name: str):
    prev = _active
    use_backend(name)
    try:
        yield
    finally:
        use_backend(prev)


def conv2d_sat(x: np.ndarray, w: np.ndarray, bias: np.ndarray, stride: int,
               pad_top: int, pad_left: int, out_h: int, out_w: int) -> tuple[np.ndarray, int]:
    """Saturating integer conv2d. See ``_ckernels.conv2d_sat``."""
    mod = _BACKENDS[_active]
    return mod.conv2d_sat(
        np.ascontiguousarray(x, dtype=np.int32),
        np.ascontiguousarray(w, dtype=np.int32),
        np.ascontiguousarray(bias, dtype=np.int64),
        int(stride), int(pad_top), int(pad_left), int(out_h), int(out_w),
    )
