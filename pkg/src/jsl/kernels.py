"""Backend selection for the hot kernels.

The compiled extension ``jsl._ckernels`` is used when it imports; otherwise the
pure-Python module ``jsl._fallback`` is. Set ``JSL_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os

from jsl import _fallback

compiled = None
if os.environ.get("JSL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from jsl import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else _fallback
BACKEND = "cython" if compiled is not None else "python"
fallback = _fallback

gain_recurrence = _impl.gain_recurrence
swarm_advance = _impl.swarm_advance

STATE_SIZE = _fallback.STATE_SIZE
UNIFORMS_PER_PROPOSAL = _fallback.UNIFORMS_PER_PROPOSAL
