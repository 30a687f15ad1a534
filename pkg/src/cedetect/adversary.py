"""Attack strategies against the mediator signal.

An attack is a stationary manipulation pmf over the victim's utility
alphabet plus a start-time law: a fixed step, never (the no-attack control),
or the adaptive randomized start that waits for the defender's CUSUM
statistic to look quiet before striking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cedetect.tilting import TiltedFamily, kl_from_base, solve_theta_for_mean, tilt

RANDOM_ATTACK_MAX_DRAWS = 100_000


class AttackError(ValueError):
    """Invalid attack construction."""


@dataclass(frozen=True)
class StartLaw:
    """When the manipulation begins.

    kind "fixed": at step ``t`` (1-based). kind "never": not at all.
    kind "adaptive": at each step with probability
    ``p * (1 - exp(R + l))^+`` where R and l are the post-update CUSUM
    statistic and log-likelihood ratio of the previous observation.
    """

    kind: str
    t: int = 1
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "never", "adaptive"):
            raise AttackError(f"unknown start law {self.kind!r}")
        if self.kind == "fixed" and self.t < 1:
            raise AttackError("fixed start time must be >= 1")
        if self.kind == "adaptive" and not 0.0 < self.p <= 1.0:
            raise AttackError("adaptive start probability must be in (0, 1]")

    @staticmethod
    def fixed(t: int) -> "StartLaw":
        return StartLaw("fixed", t=t)

    @staticmethod
    def never() -> "StartLaw":
        return StartLaw("never")

    @staticmethod
    def adaptive(p: float) -> "StartLaw":
        return StartLaw("adaptive", p=p)


@dataclass(frozen=True)
class AttackSpec:
    """A manipulation distribution plus its start law."""

    distribution: np.ndarray  # pmf over the victim alphabet
    start: StartLaw
    label: str
    meets_epsilon: bool = True  # per-step expected cost >= the stated epsilon

    def __post_init__(self):
        d = np.asarray(self.distribution, dtype=np.float64)
        object.__setattr__(self, "distribution", d)
        if np.min(d) < 0 or abs(d.sum() - 1.0) > 1e-12:
            raise AttackError("attack distribution is not a pmf")
        d.setflags(write=False)


def expected_step_cost(fam: TiltedFamily, tau: np.ndarray) -> float:
    """E_tau[u_pi - U]: the attack's expected per-step cost to the victim."""
    return float(fam.base_mean - np.asarray(tau) @ fam.alphabet)


def in_D_epsilon(fam: TiltedFamily, tau: np.ndarray, epsilon: float) -> bool:
    """Whether tau guarantees expected per-step cost at least epsilon.

    tau must live on the support of the base pmf (off-support mass would make
    the attack trivially detectable and its divergence infinite).
    """
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != fam.base_pmf.shape:
        raise AttackError("attack pmf has wrong length for this alphabet")
    if np.min(tau) < -1e-12 or abs(tau.sum() - 1.0) > 1e-12:
        raise AttackError("attack distribution is not a pmf")
    return expected_step_cost(fam, tau) >= epsilon - 1e-12


def make_tilted_attack(
    fam: TiltedFamily,
    theta: float,
    start: StartLaw,
    epsilon: float | None = None,
    label: str | None = None,
) -> AttackSpec:
    """Attack with the tilted distribution tau_theta.

    When ``epsilon`` is given, the result records whether theta is at least the
    smallest tilt meeting that cost floor; sub-threshold tilts are allowed
    for what-if sweeps but flagged.
    """
    if theta < 0:
        raise AttackError("theta must be >= 0")
    tau = tilt(fam, theta)
    meets = True
    if epsilon is not None:
        meets = expected_step_cost(fam, tau) >= epsilon - 1e-12
    return AttackSpec(tau, start, label or f"tilted(theta={theta:g})", meets)


def make_explicit_attack(
    fam: TiltedFamily,
    tau,
    start: StartLaw,
    epsilon: float | None = None,
    label: str = "explicit",
) -> AttackSpec:
    tau = np.asarray(tau, dtype=np.float64)
    meets = True if epsilon is None else in_D_epsilon(fam, tau, epsilon)
    return AttackSpec(tau, start, label, meets)


def sample_random_attack(
    fam: TiltedFamily,
    epsilon: float,
    seed: int,
    start: StartLaw | None = None,
) -> AttackSpec:
    """Draw a uniform-on-the-simplex attack meeting the cost floor.

    Rejection-samples symmetric Dirichlet(1) pmfs on the base support until
    the expected per-step cost reaches epsilon. Deterministic per seed.
    """
    if not 0.0 < epsilon < fam.base_mean - fam.u_min:
        raise AttackError("epsilon infeasible for this alphabet")
    rng = np.random.default_rng(seed)
    for _ in range(RANDOM_ATTACK_MAX_DRAWS):
        tau = rng.dirichlet(np.ones(fam.view.size))
        if expected_step_cost(fam, tau) >= epsilon:
            return AttackSpec(tau, start or StartLaw.fixed(1), f"random(seed={seed})")
    raise AttackError(
        f"no draw met the cost floor in {RANDOM_ATTACK_MAX_DRAWS} attempts; "
        "epsilon is too close to the maximum achievable cost for rejection sampling"
    )


@dataclass
class AdaptiveStartState:
    """The adversary's own CUSUM on the public pre-change stream.

    The statistic is always run against the smallest feasible tilt: the
    adaptive start law is defined relative to the detector the defender
    would field, independent of the actual manipulation distribution.
    """

    R: float = 0.0
    last_l: float | None = None

    def observe(self, lratio: float) -> None:
        self.R = max(self.R + lratio, 0.0)
        self.last_l = lratio


def start_probability(spec: AttackSpec, state: AdaptiveStartState) -> float:
    """P(start now) = p * (1 - exp(R + l))^+ from the previous observation."""
    if spec.start.kind != "adaptive":
        raise AttackError("start_probability applies to adaptive start laws only")
    if state.last_l is None:  # nothing observed yet: Q_0 = exp(0) = 1
        return 0.0
    q = np.exp(state.R + state.last_l)
    return spec.start.p * max(1.0 - q, 0.0)


def next_change_decision(
    spec: AttackSpec, state: AdaptiveStartState, rng: np.random.Generator
) -> bool:
    """Decide whether the attack starts at the upcoming step."""
    return bool(rng.random() < start_probability(spec, state))


def attack_efficiency(fam: TiltedFamily, tau: np.ndarray) -> float:
    """g(tau) = (u_pi - u_tau) / KL(tau || pi) for an arbitrary attack pmf."""
    tau = np.asarray(tau, dtype=np.float64)
    kl = float(np.sum(tau[tau > 0] * np.log(tau[tau > 0] / fam.base_pmf[tau > 0])))
    return expected_step_cost(fam, tau) / kl


def theta_min_for(fam: TiltedFamily, epsilon: float) -> float:
    """The smallest tilt whose expected per-step cost reaches epsilon."""
    return solve_theta_for_mean(fam, fam.base_mean - epsilon).theta
