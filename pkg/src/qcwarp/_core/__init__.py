"""Kernel backend selection.

The multigrid smoother, grid-transfer operators, batched 3x3 SVD and the
per-tet fixed-point loop dominate runtime.  They exist twice: a Cython
extension (``qcwarp._core._stencil``) and a pure-numpy fallback with
identical semantics.  The compiled backend is used when importable unless
``QCWARP_PURE_PYTHON`` is set to a non-empty value other than "0".
"""

from __future__ import annotations

import os

from . import numpy_backend

_force_python = os.environ.get("QCWARP_PURE_PYTHON", "").strip() not in ("", "0")

if not _force_python:
    try:
        from . import _stencil as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = numpy_backend
else:
    _impl = numpy_backend

backend_name: str = _impl.name

stencil_apply = _impl.stencil_apply
rbgs_sweep = _impl.rbgs_sweep
restrict_full_weighting = _impl.restrict_full_weighting
prolong_add = _impl.prolong_add
svd3_batch = _impl.svd3_batch
fixed_point_batch = _impl.fixed_point_batch


def available_backends() -> dict[str, object]:
    """Importable kernel backends keyed by name."""
    out: dict[str, object] = {"numpy": numpy_backend}
    try:
        from . import _stencil  # type: ignore[attr-defined]

        out["compiled"] = _stencil
    except ImportError:
        pass
    return out
