"""Hot flow kernels: compiled extension when built, pure Python otherwise.

Set ``FLEXAGG_PURE=1`` to force the pure-Python implementation.
"""
import os

from . import _flow_py

BACKEND = "python"
_impl = _flow_py

if os.environ.get("FLEXAGG_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _flowcore as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _flow_py

max_flow = _impl.max_flow
schedule_feasible = _impl.schedule_feasible

__all__ = ["BACKEND", "max_flow", "schedule_feasible"]
