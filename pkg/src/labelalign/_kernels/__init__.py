"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
bit-identical, so results never depend on which backend is active. Set
``LABELALIGN_BACKEND=pure`` (or ``compiled``) to force one.
"""
import os

from . import pure

_FORCED = os.environ.get("LABELALIGN_BACKEND", "").strip().lower()

if _FORCED == "pure":
    _impl = pure
    BACKEND = "pure"
elif _FORCED in ("", "compiled"):
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        if _FORCED == "compiled":
            raise
        _impl = pure
        BACKEND = "pure"
else:
    raise ValueError(f"unknown LABELALIGN_BACKEND {_FORCED!r}; use 'pure' or 'compiled'")

fill_mask = _impl.fill_mask
window_scores = _impl.window_scores


def available_backends() -> list[str]:
    names = ["pure"]
    try:
        from . import _core  # noqa: F401
        names.append("compiled")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the kernel module for ``name`` (for benchmarks and tests)."""
    if name == "pure":
        return pure
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
