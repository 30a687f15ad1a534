"""The defender's stopping rules.

Three related tests over the victim's utility stream:

- plain CUSUM against a single known tilt (`cusum_step`),
- the generalized one-sided SPRT against the whole tilted family
  (`gen_sprt_stop`), evaluated through its sum-threshold form, and
- the recursive generalized CUSUM (`build_detector` / `detector_step`): a
  CUSUM against the smallest feasible tilt plus a bank of windowed-sum tests
  with precomputed dynamic thresholds, equivalent to taking the minimum of
  generalized SPRTs over all change-point hypotheses.

Window k is worth testing only when the per-step divergence budget mu/k is
achievable by some finite tilt, i.e. mu/k < -log pi(u_min); smaller k are
precomputed as unreachable and skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from cedetect.tilting import (
    TiltedFamily,
    TiltingError,
    kl_from_base,
    log_likelihood_ratios,
    log_partition,
    mean_utility,
    solve_theta_for_kl,
    solve_theta_for_mean,
)


class DetectionError(ValueError):
    """Invalid detector parameterization or observation."""


class Verdict(Enum):
    CONTINUE = "continue"
    STOP_CUSUM = "cusum"
    STOP_WINDOW = "window"


def mu_alpha(d_min: float, alpha: float) -> float:
    """Detection threshold for false-positive budget alpha.

    mu = log(3 (d_min + 1)^2) - log(alpha |log alpha|), where d_min is the
    divergence of the smallest tilt in the family.
    """
    if not 0.0 < alpha < 1.0:
        raise DetectionError("alpha must be in (0, 1)")
    if d_min < 0:
        raise DetectionError("d_min must be >= 0")
    la = abs(math.log(alpha))
    if la == 0.0:
        raise DetectionError("alpha makes |log alpha| vanish")
    return math.log(3.0 * (d_min + 1.0) ** 2) - math.log(alpha * la)


@dataclass(frozen=True)
class DetectorConfig:
    """Precomputed thresholds of the recursive generalized CUSUM.

    ``theta_k[k-1]`` and ``z_k[k-1]`` hold the window-k tilt and sum
    threshold; ``reachable[k-1]`` is False when the window test can never
    fire (its threshold is then -inf). ``lratios[j]`` is the per-symbol
    log-likelihood ratio of the theta_min tilt against the base pmf.
    """

    family: TiltedFamily
    epsilon: float
    alpha: float
    theta_min: float
    d_min: float
    mu: float
    M: int
    theta_k: np.ndarray
    z_k: np.ndarray
    reachable: np.ndarray
    lratios: np.ndarray

    def __post_init__(self):
        for name in ("theta_k", "z_k", "reachable", "lratios"):
            arr = np.asarray(getattr(self, name))
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)


@dataclass
class DetectorState:
    """Mutable per-episode statistics of the detector.

    ``R`` is the CUSUM statistic, ``Q[k-1]`` the sum of the last k
    observations (0 while fewer than k steps have elapsed since the last
    reset at ``t1``).
    """

    M: int
    R: float = 0.0
    t: int = 0
    t1: int = 0
    stopped: bool = False
    stop_time: int | None = None
    stop_reason: str = "none"
    Q: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.Q is None:
            self.Q = np.zeros(self.M)


def build_detector(fam: TiltedFamily, epsilon: float, alpha: float) -> DetectorConfig:
    """Precompute all thresholds of the detection strategy.

    theta_min is the tilt whose mean utility sits epsilon below the base
    mean; mu follows from alpha; window k in 1..M = floor(mu / d(theta_min))
    gets the tilt solving d(theta) = mu/k (clamped to theta_min) and the sum
    threshold z_k = -mu/theta_k - k b(theta_k)/theta_k. Windows whose budget
    mu/k is not achievable by any finite tilt are flagged unreachable.
    """
    if not 0.0 < epsilon < fam.base_mean - fam.u_min:
        raise TiltingError(
            f"epsilon {epsilon} infeasible: must be in (0, {fam.base_mean - fam.u_min})"
        )
    theta_min = solve_theta_for_mean(fam, fam.base_mean - epsilon).theta
    d_min = kl_from_base(fam, theta_min)
    mu = mu_alpha(d_min, alpha)
    M = int(mu / d_min)
    theta_k = np.full(M, np.nan)
    z_k = np.full(M, -np.inf)
    reachable = np.zeros(M, dtype=bool)
    for k in range(1, M + 1):
        budget = mu / k
        if budget >= fam.kl_sup:
            continue  # no finite tilt reaches this divergence; test impossible
        theta = max(theta_min, solve_theta_for_kl(fam, budget).theta)
        theta_k[k - 1] = theta
        z_k[k - 1] = -mu / theta - k * log_partition(fam, theta) / theta
        reachable[k - 1] = True
    return DetectorConfig(
        family=fam,
        epsilon=epsilon,
        alpha=alpha,
        theta_min=theta_min,
        d_min=d_min,
        mu=mu,
        M=M,
        theta_k=theta_k,
        z_k=z_k,
        reachable=reachable,
        lratios=log_likelihood_ratios(fam, theta_min),
    )


def symbol_index(fam: TiltedFamily, u: float, snap: bool = False) -> int:
    """Map an observed utility to its alphabet index.

    Out-of-alphabet observations signal a model mismatch and raise by
    default; ``snap=True`` maps to the nearest alphabet value instead (for
    quantized views whose midpoints are not exactly representable).
    """
    alphabet = fam.alphabet
    j = int(np.searchsorted(alphabet, u))
    for cand in (j - 1, j):
        if 0 <= cand < alphabet.size and math.isclose(alphabet[cand], u, rel_tol=1e-12, abs_tol=1e-12):
            return cand
    if snap:
        return int(np.argmin(np.abs(alphabet - u)))
    raise DetectionError(f"observation {u!r} is not in the utility alphabet")


def detector_step(
    config: DetectorConfig, state: DetectorState, u: float, snap: bool = False
) -> Verdict:
    """Advance the generalized CUSUM by one observation.

    Stops when the CUSUM statistic exceeds mu (strict >) or when any
    reachable windowed sum falls below its threshold (strict <). When the
    CUSUM statistic returns to zero the window sums are reset: earlier
    observations can no longer contribute to a detection.
    """
    if state.stopped:
        raise DetectionError("detector already stopped")
    j = symbol_index(config.family, u, snap=snap)
    uval = float(config.family.alphabet[j])
    state.t += 1
    state.R = max(state.R + float(config.lratios[j]), 0.0)
    if state.R > config.mu:
        state.stopped = True
        state.stop_time = state.t
        state.stop_reason = "cusum"
        return Verdict.STOP_CUSUM
    if state.R > 0.0:
        elapsed = state.t - state.t1
        # Update high-k to low-k so Q[k-1] on the right-hand side is still
        # the previous step's value.
        for k in range(min(config.M, elapsed), 0, -1):
            state.Q[k - 1] = uval + (state.Q[k - 2] if k > 1 else 0.0)
        if config.M > elapsed:
            state.Q[elapsed:] = 0.0
        # Only windows fully contained in the current cycle hold real sums.
        kmax = min(config.M, elapsed)
        hits = np.flatnonzero(
            config.reachable[:kmax] & (state.Q[:kmax] < config.z_k[:kmax])
        )
        if hits.size:
            state.stopped = True
            state.stop_time = state.t
            state.stop_reason = f"window_{int(hits[0]) + 1}"
            return Verdict.STOP_WINDOW
    else:
        state.t1 = state.t
        state.Q[:] = 0.0
    return Verdict.CONTINUE


def cusum_step(
    fam: TiltedFamily, theta: float, mu: float, state: DetectorState, u: float
) -> Verdict:
    """Plain CUSUM against the known alternative tau_theta; stop at R >= mu."""
    if state.stopped:
        raise DetectionError("detector already stopped")
    j = symbol_index(fam, u)
    lrat = float(log_likelihood_ratios(fam, theta)[j])
    state.t += 1
    state.R = max(state.R + lrat, 0.0)
    if state.R >= mu:
        state.stopped = True
        state.stop_time = state.t
        state.stop_reason = "cusum"
        return Verdict.STOP_CUSUM
    if state.R == 0.0:
        state.t1 = state.t
    return Verdict.CONTINUE


def gen_sprt_threshold(fam: TiltedFamily, theta_min: float, mu: float, t: int) -> float:
    """Sum threshold c_t of the generalized SPRT at time t.

    The test stops when the running utility sum S_t drops strictly below
    c_t = -inf_{theta >= theta_min} (mu/theta + t b(theta)/theta). The
    infimum sits at theta_min once t >= mu/d(theta_min), at the root of
    d(theta) = mu/t in between, and is never met (c_t = -inf effectively)
    while mu/t exceeds the family's divergence supremum.
    """
    d_min = kl_from_base(fam, theta_min)
    if t * d_min >= mu:
        theta = theta_min
    elif mu / t < fam.kl_sup:
        theta = max(theta_min, solve_theta_for_kl(fam, mu / t).theta)
    else:
        return -math.inf
    return -mu / theta - t * log_partition(fam, theta) / theta


def gen_sprt_stop(fam: TiltedFamily, theta_min: float, mu: float, stream) -> int | None:
    """First time the generalized SPRT rejects on the stream, if any.

    The stream holds utility values from the alphabet; the stop time is
    1-based. Returns None when the test never rejects within the stream.
    """
    s = 0.0
    for t, u in enumerate(stream, start=1):
        s += float(fam.alphabet[symbol_index(fam, u)])
        if s < gen_sprt_threshold(fam, theta_min, mu, t):
            return t
    return None
