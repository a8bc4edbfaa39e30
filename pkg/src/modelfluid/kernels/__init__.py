"""Kernel backend selection.

The compiled Cython extension is preferred when present; the pure-Python
twin is the fallback. Set ``MODELFLUID_PURE=1`` to force the fallback (used
by the backend-equivalence tests and the benchmark).
"""

import os

from . import _pure

if os.environ.get("MODELFLUID_PURE", "").strip() in ("1", "true", "yes"):
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _pure

BACKEND_NAME = _impl.BACKEND_NAME

OK = _impl.OK
ERR_BUBBLE = _impl.ERR_BUBBLE
ERR_DEW = _impl.ERR_DEW
ERR_FLOW = _impl.ERR_FLOW
ERR_ENTHALPY = _impl.ERR_ENTHALPY
ENTH_CONSTANT = _impl.ENTH_CONSTANT
ENTH_WATSON = _impl.ENTH_WATSON

ln_gamma_margules = _impl.ln_gamma_margules
bubble_point = _impl.bubble_point
dew_point = _impl.dew_point
column_sweeps = _impl.column_sweeps


def get_backend(name):
    """Return a specific backend module ('pure' or 'compiled')."""
    if name == "pure":
        return _pure
    if name == "compiled":
        from . import _core  # noqa: F811

        return _core
    raise ValueError(f"unknown backend {name!r}")
