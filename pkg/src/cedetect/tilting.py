"""The exponential family of attack distributions over the victim's utility
alphabet.

For a base pmf ``pi`` over utilities ``u``, the tilted member with parameter
``theta >= 0`` is ``tau_theta(u) = pi(u) exp(-theta u - b(theta))`` where
``b(theta) = log sum pi(u) exp(-theta u)`` is the log-partition function.
The key identities used throughout:

- mean utility      ``u_theta = -b'(theta)``, strictly decreasing in theta,
- divergence        ``d(theta) = KL(tau_theta || pi) = theta b'(theta) - b(theta)``,
  strictly increasing from 0 to ``-log pi(u_min)``,
- impact efficiency ``g(theta) = (u_pi - u_theta) / d(theta)``, strictly
  decreasing, so the smallest feasible tilt maximizes impact per unit of
  detectability.

All computations stay in the log domain with max-shift, so arbitrarily large
``theta`` is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from cedetect.games import VictimView

SOLVER_TOL = 1e-10
SOLVER_MAX_ITER = 200


class TiltingError(ValueError):
    """Degenerate family or infeasible solve target."""


@dataclass(frozen=True)
class ThetaSolve:
    """Result of a bisection solve for a tilt parameter."""

    theta: float
    residual: float
    iterations: int


@dataclass(frozen=True)
class TiltedFamily:
    """The family of exponentially tilted distributions of a victim view."""

    view: VictimView

    def __post_init__(self):
        if self.view.size < 2:
            raise TiltingError("tilting needs at least two supported utility values")

    @property
    def alphabet(self) -> np.ndarray:
        return self.view.alphabet

    @property
    def base_pmf(self) -> np.ndarray:
        return self.view.base_pmf

    @property
    def base_mean(self) -> float:
        return self.view.mean

    @property
    def u_min(self) -> float:
        return self.view.u_min

    @property
    def kl_sup(self) -> float:
        """Supremum of d(theta): -log of the base mass at the worst utility."""
        return float(-np.log(self.view.base_pmf[0]))


def log_partition(fam: TiltedFamily, theta: float) -> float:
    """b(theta) = log sum pi(u) exp(-theta u); b(0) = 0."""
    return float(logsumexp(np.log(fam.base_pmf) - theta * fam.alphabet))


def tilt(fam: TiltedFamily, theta: float) -> np.ndarray:
    """The tilted pmf tau_theta over the alphabet."""
    if theta < 0:
        raise TiltingError("theta must be >= 0")
    logits = np.log(fam.base_pmf) - theta * fam.alphabet
    return np.exp(logits - logsumexp(logits))


def mean_utility(fam: TiltedFamily, theta: float) -> float:
    """u_theta = E_{tau_theta}[U] = -b'(theta)."""
    return float(tilt(fam, theta) @ fam.alphabet)


def kl_from_base(fam: TiltedFamily, theta: float) -> float:
    """d(theta) = KL(tau_theta || pi).

    Computed both elementwise and through the log-partition identity
    ``theta b'(theta) - b(theta)``; the two must agree to 1e-9.
    """
    tau = tilt(fam, theta)
    direct = float(tau @ np.log(tau / fam.base_pmf))
    dual = float(-theta * (tau @ fam.alphabet) - log_partition(fam, theta))
    if abs(direct - dual) > 1e-9:
        raise TiltingError(
            f"KL dual-form mismatch at theta={theta}: {direct} vs {dual}"
        )
    return direct


def _bisect(func, lo: float, hi: float) -> ThetaSolve:
    """Bisection for the root of a monotone function with func(lo)<0<func(hi)."""
    for it in range(SOLVER_MAX_ITER):
        mid = 0.5 * (lo + hi)
        val = func(mid)
        if abs(val) <= SOLVER_TOL or (hi - lo) < 1e-15 * max(1.0, abs(mid)):
            return ThetaSolve(mid, val, it + 1)
        if val < 0:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    res = func(mid)
    if abs(res) > SOLVER_TOL:
        raise TiltingError(f"bisection failed to converge: residual {res}")
    return ThetaSolve(mid, res, SOLVER_MAX_ITER)


def solve_theta_for_mean(fam: TiltedFamily, target: float) -> ThetaSolve:
    """Find theta with E_{tau_theta}[U] = target.

    The mean is strictly decreasing in theta from the base mean down to the
    alphabet minimum, so the target must lie strictly between those bounds.
    """
    if not fam.u_min < target < fam.base_mean:
        raise TiltingError(
            f"target mean {target} infeasible: must be in "
            f"({fam.u_min}, {fam.base_mean})"
        )
    hi = 1.0
    while mean_utility(fam, hi) > target:
        hi *= 2.0
    return _bisect(lambda th: target - mean_utility(fam, th), 0.0, hi)


def solve_theta_for_kl(fam: TiltedFamily, delta: float) -> ThetaSolve:
    """Find theta with KL(tau_theta || pi) = delta.

    d(theta) increases strictly from 0 toward ``-log pi(u_min)``; any delta at
    or beyond that supremum admits no finite solution (the infimum of the
    constrained mean is then approached only as theta -> infinity).
    """
    if delta <= 0:
        raise TiltingError("delta must be > 0")
    if delta >= fam.kl_sup:
        raise TiltingError(
            f"delta {delta} >= -log pi(u_min) = {fam.kl_sup}: "
            "infimum only attained as theta -> infinity"
        )
    hi = 1.0
    while kl_from_base(fam, hi) < delta:
        hi *= 2.0
    return _bisect(lambda th: kl_from_base(fam, th) - delta, 0.0, hi)


def optimal_attack(fam: TiltedFamily, delta: float) -> np.ndarray:
    """Minimizer of E_tau[U] over pmfs with KL(tau || pi) <= delta.

    The constrained minimizer is the tilted member whose divergence meets the
    budget exactly.
    """
    return tilt(fam, solve_theta_for_kl(fam, delta).theta)


def impact_efficiency(fam: TiltedFamily, theta: float) -> float:
    """g(theta) = (u_pi - u_theta) / d(theta), the per-detectability impact."""
    if theta <= 0:
        raise TiltingError("g(theta) is undefined at theta = 0")
    return (fam.base_mean - mean_utility(fam, theta)) / kl_from_base(fam, theta)


def log_likelihood_ratios(fam: TiltedFamily, theta: float) -> np.ndarray:
    """l^theta(u) = log(tau_theta(u) / pi(u)) = -theta u - b(theta), per symbol."""
    return -theta * fam.alphabet - log_partition(fam, theta)
