"""Pick the compiled flow kernels when available, else the pure-Python ones."""

import os

from . import _flow_py

try:
    from . import _flow_ext
except ImportError:  # pragma: no cover - depends on the build
    _flow_ext = None

_KERNELS = {"python": _flow_py}
if _flow_ext is not None:
    _KERNELS["compiled"] = _flow_ext

if os.environ.get("ENKU_PURE_PYTHON", "").strip() not in ("", "0") or _flow_ext is None:
    DEFAULT_BACKEND = "python"
else:
    DEFAULT_BACKEND = "compiled"


def available_backends():
    return sorted(_KERNELS)


def get_kernels(name=None):
    name = DEFAULT_BACKEND if name is None else name
    try:
        return _KERNELS[name]
    except KeyError:
        raise ValueError(
            f"unknown or unavailable backend {name!r}; have {available_backends()}"
        ) from None
