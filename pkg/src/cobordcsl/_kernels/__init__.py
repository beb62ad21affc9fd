"""Kernel backend selection: compiled extension if built, numpy fallback otherwise.

Set COBORDCSL_KERNELS=python to force the fallback (used by the benchmark).
"""

import os

if os.environ.get("COBORDCSL_KERNELS", "").lower() == "python":
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykernels as _impl

BACKEND = _impl.BACKEND
join_pairs = _impl.join_pairs
paths2 = _impl.paths2
commuting_squares = _impl.commuting_squares

__all__ = ["BACKEND", "join_pairs", "paths2", "commuting_squares"]
