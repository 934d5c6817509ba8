"""Kernel selection: compiled extension when available, pure Python otherwise.

Set LSOCERT_PURE_PY=1 to force the pure-Python kernel (used by the
benchmark and the kernel-equivalence tests).
"""

import os

from . import _rollout_py
from .tables import SimTables, build_tables

if os.environ.get("LSOCERT_PURE_PY") == "1":
    _impl = _rollout_py
else:
    try:
        from . import _rollout_cy as _impl
    except ImportError:
        _impl = _rollout_py

run_block = _impl.run_block
KERNEL_NAME = _impl.KERNEL_NAME

__all__ = ["run_block", "KERNEL_NAME", "SimTables", "build_tables", "_rollout_py"]
