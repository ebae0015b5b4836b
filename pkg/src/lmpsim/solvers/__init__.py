"""Numerical kernels: simplex LP core (compiled extension with pure-Python
fallback) and the log-barrier solver for the attack programs.

The compiled kernel is preferred when importable; set LMPSIM_PURE_PYTHON=1 to
force the fallback. `SIMPLEX_BACKEND` names the active implementation.
"""

import os

if os.environ.get("LMPSIM_PURE_PYTHON", "") not in ("", "0"):
    from ._simplex_py import lp_core

    SIMPLEX_BACKEND = "python"
else:
    try:
        from ._simplex_c import lp_core  # type: ignore[no-redef]

        SIMPLEX_BACKEND = "compiled"
    except ImportError:
        from ._simplex_py import lp_core  # type: ignore[no-redef]

        SIMPLEX_BACKEND = "python"

__all__ = ["lp_core", "SIMPLEX_BACKEND"]
