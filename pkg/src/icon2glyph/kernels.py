"""Backend selection for the hot loops.

The compiled extension is preferred; the numpy module is used when the
extension is missing or when ``ICON2GLYPH_PURE`` is set to a truthy value.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("ICON2GLYPH_PURE", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

edt_features = _impl.edt_features
rb_gauss_seidel = _impl.rb_gauss_seidel
stencil_residual = _impl.stencil_residual

__all__ = ["BACKEND", "edt_features", "rb_gauss_seidel", "stencil_residual"]
