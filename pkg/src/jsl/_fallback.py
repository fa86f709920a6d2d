"""Pure-Python implementations of the hot kernels.

Used when the compiled extension is unavailable (or ``JSL_PURE_PYTHON=1``).
The swarm kernel performs the same floating-point operations in the same
order as ``_ckernels.pyx`` and is bit-identical to it.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

LOG2 = math.log(2.0)

# layout of the swarm state vector shared with the compiled kernel
T_NEXT, SUM, HI, LO, ACCEPTED, PROPOSALS = range(6)
STATE_SIZE = 6
UNIFORMS_PER_PROPOSAL = 5


def gain_recurrence(source, r, a, b):
    """K[0] = 0, K[i+1] = r K[i] + a S[i] + b S[i+1]."""
    s = np.ascontiguousarray(source, dtype=float)
    if s.size == 0:
        return s.copy()
    k = lfilter([b, a], [1.0, -r], s)
    # lfilter seeds K[0] = b S[0]; remove that impulse to start from zero
    k -= b * s[0] * r ** np.arange(s.size)
    return k


def _logcosh(u):
    a = math.fabs(u)
    return a + math.log1p(math.exp(-2.0 * a)) - LOG2


def bound_rate(n, count, base_rate, xbar, hi, lo):
    if n >= 0.0:
        gmax_log = 0.0
    else:
        d = max(hi - xbar, xbar - lo)
        gmax_log = -n * _logcosh(d)
    return base_rate * count * math.exp(gmax_log) * 0.5


def swarm_advance(pos, state, u, u_start, t_stop, n, lam, base_rate):
    """Run thinned pair proposals until the pending proposal time exceeds ``t_stop``.

    Returns ``(u_index, status)``; status 0 means ``t_stop`` was reached, 1 means the
    uniform buffer ran out and must be refilled before calling again.
    """
    x = pos.tolist()
    count = len(x)
    t_next, total, hi, lo, accepted, proposals = state.tolist()
    i = u_start
    end = len(u) - UNIFORMS_PER_PROPOSAL
    uu = u
    status = 1
    log = math.log
    log1p = math.log1p
    exp = math.exp
    while i <= end:
        if t_next > t_stop:
            status = 0
            break
        ia = int(uu[i] * count)
        ib = int(uu[i + 1] * (count - 1))
        if ib >= ia:
            ib += 1
        xa = x[ia]
        xb = x[ib]
        xbar = total / count
        if xa != xb:
            if xa < xb:
                low = ia
                up_x = xb
            else:
                low = ib
                up_x = xa
            if n == 0.0:
                acc = 1.0
            elif n > 0.0:
                acc = exp(-n * _logcosh(up_x - xbar))
            else:
                d = max(hi - xbar, xbar - lo)
                acc = exp(-n * (_logcosh(up_x - xbar) - _logcosh(d)))
            if uu[i + 2] < acc:
                jump = -log1p(-uu[i + 3]) / lam
                xn = x[low] + jump
                x[low] = xn
                total += jump
                if xn > hi:
                    hi = xn
                accepted += 1.0
                xbar = total / count
        proposals += 1.0
        rate = bound_rate(n, count, base_rate, xbar, hi, lo)
        t_next += -log1p(-uu[i + 4]) / rate
        i += UNIFORMS_PER_PROPOSAL
    else:
        if t_next > t_stop:
            status = 0
    pos[:] = x
    state[:] = (t_next, total, hi, lo, accepted, proposals)
    return i, status
