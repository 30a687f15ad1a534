"""Monte-Carlo episode engine and metrics.

Episodes draw the victim's utility stream (base pmf before the change time,
attack pmf after), run the generalized CUSUM detector, and record the stop
time, attack impact, and realized cost. Determinism contract: every episode
derives its own RNG stream from (master seed, scenario keys, episode index),
so results are byte-identical regardless of worker count or scheduling.

Censoring policy: episodes that reach the horizon without a stop enter mean
time between false alarms at the horizon (a lower bound, with the censored
fraction reported) and are excluded from mean detection delay.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from cedetect._engine import REASON_CUSUM, REASON_WINDOW, episode_core
from cedetect.adversary import AttackSpec, StartLaw
from cedetect.detection import DetectorConfig, build_detector
from cedetect.tilting import TiltedFamily, kl_from_base, solve_theta_for_mean

SWEEP_HEADER = [
    "attack_label", "alpha", "mu", "mtbfa", "censored_fraction",
    "mean_delay", "mean_impact", "detect_rate",
]
EPISODE_HEADER = ["episode", "seed", "nu", "stop_time", "outcome", "impact", "cost"]


class SimulationError(ValueError):
    """Invalid harness configuration or unusable estimate."""


@dataclass(frozen=True)
class EpisodeConfig:
    """One episode's full parameterization."""

    family: TiltedFamily
    detector: DetectorConfig
    attack: AttackSpec
    horizon: int
    false_alarm_cost: float = 0.0
    seed: tuple[int, ...] | int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise SimulationError("horizon must be >= 1")


@dataclass(frozen=True)
class EpisodeResult:
    """Outcome of one episode.

    ``stop_time`` is None when the detector never fired; ``change_time`` is
    None when no attack started within the horizon. ``impact`` is the
    cumulative utility shortfall over the active-attack period up to the
    (possibly censored) stop. ``pre_change_utility_sum`` covers steps before
    min(change time, effective stop + 1).
    """

    stop_time: int | None
    change_time: int | None
    outcome: str  # detected | false_alarm | censored_no_stop | censored_pre_change
    stop_reason: str
    impact: float
    realized_cost: float
    pre_change_utility_sum: float


def _seed_keys(seed) -> tuple[int, ...]:
    return tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)


def episode_rng(*keys: int) -> np.random.Generator:
    """Counter-style deterministic RNG from integer keys."""
    return np.random.default_rng(np.random.SeedSequence(list(int(k) for k in keys)))


def _engine_inputs(detector: DetectorConfig):
    reachable = np.flatnonzero(detector.reachable)
    kmin = int(reachable[0]) + 1 if reachable.size else detector.M + 1
    return (
        detector.lratios.astype(np.float64),
        detector.family.alphabet.astype(np.float64),
        float(detector.mu),
        detector.z_k.astype(np.float64),
        kmin,
        int(detector.M),
    )


def _sample_symbols(rng: np.random.Generator, pmf: np.ndarray, n: int) -> np.ndarray:
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    """Run a single episode deterministically from its seed.

    The RNG stream is consumed in a fixed order (pre-change uniforms,
    post-change uniforms, adaptive-start uniforms), so identical
    configurations reproduce bit-identical results.
    """
    fam = cfg.family
    horizon = cfg.horizon
    rng = episode_rng(*_seed_keys(cfg.seed))
    start = cfg.attack.start
    adaptive = start.kind == "adaptive"
    if start.kind == "never":
        nu0 = horizon + 1
    elif start.kind == "fixed":
        nu0 = start.t
    else:
        nu0 = horizon + 2  # resolved online

    n_pre = horizon if (adaptive or nu0 > 1) else 0
    sym_pre = (
        _sample_symbols(rng, fam.base_pmf, n_pre)
        if n_pre
        else np.zeros(1, dtype=np.int64)
    )
    n_post = horizon if nu0 <= horizon or adaptive else 0
    sym_post = (
        _sample_symbols(rng, cfg.attack.distribution, n_post)
        if n_post
        else np.zeros(1, dtype=np.int64)
    )
    decide_u = rng.random(horizon) if adaptive else np.zeros(1)

    l_arr, u_arr, mu, z, kmin, M = _engine_inputs(cfg.detector)
    stop, reason, nu = episode_core(
        sym_pre, sym_post, nu0, adaptive, start.p, decide_u,
        l_arr, u_arr, mu, z, kmin, M, horizon,
    )

    stop_time = int(stop) if stop else None
    t_eff = stop_time if stop_time is not None else horizon
    nu = int(nu)
    changed = nu <= horizon
    u_pi = fam.base_mean

    if changed:
        post_end = min(t_eff, horizon)
        post_vals = u_arr[sym_post[nu - 1 : post_end]]
        impact = float(np.sum(u_pi - post_vals)) if post_end >= nu else 0.0
    else:
        impact = 0.0

    pre_end = min(nu - 1, t_eff)  # last step drawn from the base pmf that counts
    pre_sum = float(np.sum(u_arr[sym_pre[:pre_end]])) if pre_end > 0 else 0.0

    if stop_time is not None:
        outcome = "detected" if stop_time >= nu else "false_alarm"
    else:
        outcome = "censored_no_stop" if changed else "censored_pre_change"
    reason_name = {REASON_CUSUM: "cusum", REASON_WINDOW: "window"}.get(reason, "none")

    if t_eff < nu:
        cost = cfg.false_alarm_cost - pre_sum
    else:
        cost = impact - pre_sum

    return EpisodeResult(
        stop_time=stop_time,
        change_time=nu if changed else None,
        outcome=outcome,
        stop_reason=reason_name,
        impact=impact,
        realized_cost=cost,
        pre_change_utility_sum=pre_sum,
    )


def realized_cost(result: EpisodeResult, C: float, horizon: int) -> float:
    """Recompute the zero-sum game cost of an episode from its sums.

    A stop before the change (including no change at all) costs C minus the
    utility collected; otherwise the cost is the attack impact minus the
    pre-change utility. Censored episodes are evaluated at the horizon.
    """
    t_eff = result.stop_time if result.stop_time is not None else horizon
    nu = result.change_time if result.change_time is not None else horizon + 1
    if t_eff < nu:
        return C - result.pre_change_utility_sum
    return result.impact - result.pre_change_utility_sum


@dataclass(frozen=True)
class _BatchTask:
    family: TiltedFamily
    detector: DetectorConfig
    attack: AttackSpec
    horizon: int
    cost: float
    seed_keys: tuple[int, ...]
    episodes: range


def _run_batch(task: _BatchTask) -> list[EpisodeResult]:
    cfg = EpisodeConfig(
        task.family, task.detector, task.attack, task.horizon, task.cost, 0
    )
    out = []
    for ep in task.episodes:
        out.append(run_episode(replace(cfg, seed=(*task.seed_keys, ep))))
    return out


def run_episodes(
    family: TiltedFamily,
    detector: DetectorConfig,
    attack: AttackSpec,
    episodes: int,
    horizon: int,
    seed,
    cost: float = 0.0,
    workers: int = 1,
) -> list[EpisodeResult]:
    """Run independent episodes; output is invariant to the worker count."""
    if episodes < 1:
        raise SimulationError("episodes must be >= 1")
    keys = _seed_keys(seed)
    if workers <= 1:
        task = _BatchTask(family, detector, attack, horizon, cost, keys, range(episodes))
        return _run_batch(task)
    chunks = np.array_split(np.arange(episodes), min(workers * 4, episodes))
    tasks = [
        _BatchTask(family, detector, attack, horizon, cost, keys,
                   range(int(c[0]), int(c[-1]) + 1))
        for c in chunks if c.size
    ]
    results: list[EpisodeResult] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for batch in pool.map(_run_batch, tasks):
            results.extend(batch)
    return results


def estimate_mtbfa(
    family: TiltedFamily,
    detector: DetectorConfig,
    episodes: int,
    horizon: int,
    seed,
    workers: int = 1,
) -> tuple[float, float]:
    """Mean time between false alarms from no-attack runs.

    Censored episodes are counted at the horizon, so the mean is a lower
    bound; the censored fraction quantifies the bias.
    """
    attack = AttackSpec(family.base_pmf, StartLaw.never(), "none")
    results = run_episodes(family, detector, attack, episodes, horizon, seed,
                           workers=workers)
    times = [r.stop_time if r.stop_time is not None else horizon for r in results]
    censored = sum(r.stop_time is None for r in results)
    return float(np.mean(times)), censored / episodes


def estimate_delay_and_impact(
    family: TiltedFamily,
    detector: DetectorConfig,
    attack: AttackSpec,
    episodes: int,
    horizon: int,
    seed,
    workers: int = 1,
) -> tuple[float, float, float]:
    """(mean detection delay, mean attack impact, detected fraction).

    Delay T - nu + 1 is averaged over detected episodes only; impact is
    averaged over every episode in which the attack started, with censored
    episodes accruing impact up to the horizon.
    """
    results = run_episodes(family, detector, attack, episodes, horizon, seed,
                           workers=workers)
    delays = [
        r.stop_time - r.change_time + 1
        for r in results
        if r.outcome == "detected"
    ]
    impacts = [r.impact for r in results if r.change_time is not None]
    detect_rate = len(delays) / episodes
    mean_delay = float(np.mean(delays)) if delays else math.nan
    mean_impact = float(np.mean(impacts)) if impacts else 0.0
    return mean_delay, mean_impact, detect_rate


def sweep(
    family: TiltedFamily,
    epsilon: float,
    alpha_grid,
    attacks: list[AttackSpec],
    episodes: int,
    horizon: int,
    seed,
    workers: int = 1,
) -> list[dict]:
    """Delay/impact trade-off table over a grid of false-positive budgets.

    For every alpha one detector is built and evaluated against the
    no-attack scenario plus every attack. Rows are deterministic given the
    master seed.
    """
    alpha_grid = list(alpha_grid)
    if not alpha_grid or not attacks:
        raise SimulationError("alpha grid and attack list must be nonempty")
    keys = _seed_keys(seed)
    rows = []
    none_attack = AttackSpec(family.base_pmf, StartLaw.never(), "none")
    for ai, alpha in enumerate(alpha_grid):
        detector = build_detector(family, epsilon, alpha)
        none_results = run_episodes(
            family, detector, none_attack, episodes, horizon, (*keys, ai, 0),
            workers=workers,
        )
        times = [r.stop_time if r.stop_time is not None else horizon
                 for r in none_results]
        mtbfa = float(np.mean(times))
        censored = sum(r.stop_time is None for r in none_results) / episodes
        none_rate = 1.0 - censored
        rows.append({
            "attack_label": "none", "alpha": alpha, "mu": detector.mu,
            "mtbfa": mtbfa, "censored_fraction": censored,
            "mean_delay": math.nan, "mean_impact": 0.0, "detect_rate": none_rate,
        })
        for si, attack in enumerate(attacks, start=1):
            delay, impact, rate = estimate_delay_and_impact(
                family, detector, attack, episodes, horizon, (*keys, ai, si),
                workers=workers,
            )
            rows.append({
                "attack_label": attack.label, "alpha": alpha, "mu": detector.mu,
                "mtbfa": mtbfa, "censored_fraction": censored,
                "mean_delay": delay, "mean_impact": impact, "detect_rate": rate,
            })
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in SWEEP_HEADER])


def write_episode_csv(results: list[EpisodeResult], seeds, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPISODE_HEADER)
        for i, (r, s) in enumerate(zip(results, seeds)):
            writer.writerow([
                i, s,
                r.change_time if r.change_time is not None else "",
                r.stop_time if r.stop_time is not None else "",
                r.outcome, _fmt(r.impact), _fmt(r.realized_cost),
            ])


def _mu_detector(family: TiltedFamily, epsilon: float, mu: float) -> DetectorConfig:
    """Build a detector from an explicit threshold instead of alpha.

    Used by the cost calibration, which searches over mu directly instead of
    going through the alpha-to-mu formula.
    """
    from cedetect.tilting import log_partition, solve_theta_for_kl, log_likelihood_ratios

    theta_min = solve_theta_for_mean(family, family.base_mean - epsilon).theta
    d_min = kl_from_base(family, theta_min)
    M = int(mu / d_min)
    theta_k = np.full(M, np.nan)
    z_k = np.full(M, -np.inf)
    reachable = np.zeros(M, dtype=bool)
    for k in range(1, M + 1):
        budget = mu / k
        if budget >= family.kl_sup:
            continue
        theta = max(theta_min, solve_theta_for_kl(family, budget).theta)
        theta_k[k - 1] = theta
        z_k[k - 1] = -mu / theta - k * log_partition(family, theta) / theta
        reachable[k - 1] = True
    return DetectorConfig(
        family=family, epsilon=epsilon, alpha=math.nan, theta_min=theta_min,
        d_min=d_min, mu=float(mu), M=M, theta_k=theta_k, z_k=z_k,
        reachable=reachable, lratios=log_likelihood_ratios(family, theta_min),
    )


def _cost_estimate(
    family, epsilon, mu, episodes, horizon, seed, workers
) -> tuple[float, float, float]:
    """(u_pi E_inf[T] + eps E_attack[T], standard error, censored fraction)."""
    detector = _mu_detector(family, epsilon, mu)
    u_pi = family.base_mean
    none = AttackSpec(family.base_pmf, StartLaw.never(), "none")
    from cedetect.tilting import tilt

    attack = AttackSpec(tilt(family, detector.theta_min), StartLaw.fixed(1), "theta_min")
    res_inf = run_episodes(family, detector, none, episodes, horizon,
                           (*_seed_keys(seed), 0), workers=workers)
    res_att = run_episodes(family, detector, attack, episodes, horizon,
                           (*_seed_keys(seed), 1), workers=workers)
    t_inf = np.array([r.stop_time if r.stop_time is not None else horizon
                      for r in res_inf], dtype=float)
    t_att = np.array([r.stop_time if r.stop_time is not None else horizon
                      for r in res_att], dtype=float)
    censored = (sum(r.stop_time is None for r in res_inf)
                + sum(r.stop_time is None for r in res_att)) / (2 * episodes)
    value = u_pi * t_inf.mean() + epsilon * t_att.mean()
    se = math.sqrt(
        u_pi ** 2 * t_inf.var(ddof=1) / episodes
        + epsilon ** 2 * t_att.var(ddof=1) / episodes
    )
    return value, se, censored


def calibrate_mu_for_cost(
    family: TiltedFamily,
    epsilon: float,
    C: float,
    episodes: int,
    horizon: int,
    seed,
    workers: int = 1,
) -> float:
    """Threshold mu at which the false-alarm cost budget C is exhausted.

    Solves C = u_pi E_inf[T(mu)] + epsilon E_attack[T(mu)] by bisection over
    Monte-Carlo estimates of both expectations (both increase with mu).
    Returns once the residual is within three standard errors.
    """
    u_pi = family.base_mean
    if C <= u_pi:
        raise SimulationError(
            f"C = {C} must exceed the per-step expected utility {u_pi}"
        )
    lo, hi = 1e-3, 1.0
    val, se, censored = _cost_estimate(family, epsilon, hi, episodes, horizon, seed, workers)
    while val < C:
        lo = hi
        hi *= 2.0
        val, se, censored = _cost_estimate(family, epsilon, hi, episodes, horizon, seed, workers)
        if censored > 0.05:
            raise SimulationError(
                f"censoring {censored:.1%} exceeds 5% at mu={hi}; "
                "increase the horizon or lower C"
            )
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val, se, _ = _cost_estimate(family, epsilon, mid, episodes, horizon, seed, workers)
        if abs(val - C) <= 3.0 * se:
            return mid
        if val < C:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_alpha_for_mtbfa(
    family: TiltedFamily,
    epsilon: float,
    target: float,
    episodes: int,
    horizon: int,
    seed,
    workers: int = 1,
    rel_tol: float = 0.1,
    max_iter: int = 30,
) -> tuple[float, float]:
    """Find alpha whose empirical mean time between false alarms hits target.

    Bisects on log(alpha): the mean time between false alarms decreases in
    alpha. Returns (alpha, achieved value) once within ``rel_tol`` relative
    error or after ``max_iter`` bisection steps. The target must sit well
    below the horizon so censoring does not bias the estimate.
    """
    if not target > 1.0:
        raise SimulationError("target mean time between false alarms must exceed 1")
    if target > 0.2 * horizon:
        raise SimulationError(
            f"target {target} too close to the horizon {horizon}; "
            "censoring would bias the estimate"
        )
    keys = _seed_keys(seed)

    def measure(log_alpha: float) -> float:
        detector = build_detector(family, epsilon, math.exp(log_alpha))
        mtbfa, _ = estimate_mtbfa(family, detector, episodes, horizon,
                                  (*keys, 0), workers=workers)
        return mtbfa

    lo, hi = math.log(1e-12), math.log(0.5)  # mtbfa(lo) large, mtbfa(hi) small
    val_hi = measure(hi)
    if val_hi > target:
        raise SimulationError(f"target {target} below the achievable minimum {val_hi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = measure(mid)
        if abs(val - target) <= rel_tol * target:
            return math.exp(mid), val
        if val > target:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    return math.exp(mid), measure(mid)


def wald_check(
    family: TiltedFamily,
    detector: DetectorConfig,
    episodes: int,
    horizon: int,
    seed,
    workers: int = 1,
) -> float:
    """Relative mismatch of the stopped utility sum against u_pi E[T].

    For no-attack runs the expected utility collected before stopping equals
    the per-step expectation times the expected stop time; the relative error
    of the two Monte-Carlo estimates should vanish with the episode count.
    """
    none = AttackSpec(family.base_pmf, StartLaw.never(), "none")
    results = run_episodes(family, detector, none, episodes, horizon, seed,
                           workers=workers)
    kept = [r for r in results if r.stop_time is not None]
    if not kept:
        raise SimulationError("no uncensored episodes; lower mu or raise horizon")
    mean_sum = float(np.mean([r.pre_change_utility_sum for r in kept]))
    mean_t = float(np.mean([r.stop_time for r in kept]))
    expected = family.base_mean * mean_t
    return abs(mean_sum - expected) / expected
