"""Kernel dispatch: compiled core when importable, numpy otherwise.

Set ``MPPLE_PURE_PYTHON=1`` before import to force the numpy versions.
"""

import os

import numpy as np

from . import _core_py

BACKEND = "python"
_impl = _core_py
if not os.environ.get("MPPLE_PURE_PYTHON"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _core_py


def cox_pass(starts, risk, Z, dn, zw, backend=None):
    impl = _select(backend)
    return impl.cox_pass(
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(risk, dtype=float),
        np.ascontiguousarray(Z, dtype=float),
        np.ascontiguousarray(dn, dtype=float),
        np.ascontiguousarray(zw, dtype=float),
    )


def cif_influence_pass(phi, s_minus, dlam, j, backend=None):
    impl = _select(backend)
    return impl.cif_influence_pass(
        np.ascontiguousarray(phi, dtype=float),
        np.ascontiguousarray(s_minus, dtype=float),
        np.ascontiguousarray(dlam, dtype=float),
        int(j),
    )


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _core_py
    if backend == "compiled":
        if BACKEND != "compiled":
            raise ImportError("compiled core is not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")
