"""Compiled per-episode inner loop of the Monte-Carlo harness.

The detector logic here mirrors :func:`cedetect.detection.detector_step`
exactly (the test suite asserts step-for-step agreement); it is compiled with
numba because harness runs push through 10^7..10^8 detector steps.

Window sums are derived from a ring buffer of running cumulative sums since
the last CUSUM reset: the sum of the last k observations is cs_t - cs_{t-k}.
Only window lengths up to the elapsed time since the reset are tested, so the
per-step cost is proportional to the length of the current positive
excursion, which is short under the no-attack distribution.
"""

from __future__ import annotations

import numpy as np
from numba import njit

REASON_NONE = 0
REASON_CUSUM = 1
REASON_WINDOW = 2


@njit(cache=True)
def episode_core(
    sym_pre,      # int64[:] pre-change symbol stream (may be empty if nu == 1)
    sym_post,     # int64[:] post-change symbol stream (may be empty if never)
    nu,           # int64 change time (1-based); > horizon means no change
    adaptive,     # bool: resolve the start time online
    p_start,      # float: adaptive start probability scale
    decide_u,     # float64[:] per-step uniforms for adaptive start decisions
    l_arr,        # float64[:] log-likelihood ratio per symbol (theta_min tilt)
    u_arr,        # float64[:] utility value per symbol
    mu,           # float threshold of the CUSUM test
    z,            # float64[:] window thresholds (-inf when unreachable)
    kmin,         # int64 smallest reachable window length (M+1 when none)
    M,            # int64 number of windows
    horizon,      # int64 maximum episode length
):
    """Run one episode; returns (stop_time, reason, nu_realized).

    stop_time is 0 when the detector never fires within the horizon.
    nu_realized reports the (possibly adaptively chosen) change time, or
    horizon + 1 when no change occurred.
    """
    R = 0.0
    t1 = 0
    cs = 0.0
    ring = np.zeros(M + 1)
    # Adversary's own CUSUM state for the adaptive start law.
    Ra = 0.0
    la = 0.0
    has_obs = False

    for t in range(1, horizon + 1):
        if adaptive and t < nu:
            if has_obs:
                q = np.exp(Ra + la)
                prob = p_start * max(1.0 - q, 0.0)
            else:
                prob = 0.0
            if decide_u[t - 1] < prob:
                nu = t

        if t >= nu:
            s = sym_post[t - 1]
        else:
            s = sym_pre[t - 1]
        l = l_arr[s]
        if adaptive and t < nu:
            Ra = max(Ra + l, 0.0)
            la = l
            has_obs = True

        R = R + l
        if R < 0.0:
            R = 0.0
        if R > mu:
            return t, REASON_CUSUM, nu
        elif R > 0.0:
            cs += u_arr[s]
            ring[t % (M + 1)] = cs
            kmax = t - t1
            if kmax > M:
                kmax = M
            for k in range(kmin, kmax + 1):
                if cs - ring[(t - k) % (M + 1)] < z[k - 1]:
                    return t, REASON_WINDOW, nu
        else:
            t1 = t
            cs = 0.0
            ring[t % (M + 1)] = 0.0

    return 0, REASON_NONE, nu
