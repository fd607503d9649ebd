"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when importable; otherwise the
numpy twin in ``_pykernels``. Set ``RCPD_PURE_PYTHON=1`` to force the
fallback. Both expose ``match_windows``, ``build_windows``,
``first_firing`` and ``best_split`` with identical results.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RCPD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass

match_windows = _impl.match_windows
build_windows = _impl.build_windows
first_firing = _impl.first_firing
best_split = _impl.best_split


def available_backends():
    """Map of backend name -> module, for benchmarks and parity tests."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
