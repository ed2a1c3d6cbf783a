"""Hot-loop kernels: the compiled extension when built, numpy otherwise.

Set ``STAGEBANK_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("STAGEBANK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        pass

row_logsumexp = _impl.row_logsumexp
confidences = _impl.confidences
stage_winners = _impl.stage_winners

__all__ = ["BACKEND", "row_logsumexp", "confidences", "stage_winners"]
