"""Backend selection for the hot time-stepping kernels.

The compiled extension ``_ckernels`` is preferred; the numpy implementation in
``_pykernels`` is used when the extension is not built. Set
``BURGERS_NULLCTL_BACKEND`` to ``python`` or ``cython`` to force a choice.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available() -> list[str]:
    return sorted(_BACKENDS)


def get(name: str | None = None) -> ModuleType:
    if name is None:
        name = os.environ.get("BURGERS_NULLCTL_BACKEND") or None
    if name is None:
        return _BACKENDS.get("cython", _pykernels)
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available (have {available()})") from None


default = get()
BACKEND = default.NAME
