"""Correlated / coarse-correlated equilibrium verification and no-regret
learning of approximate equilibria.

Verification evaluates the deviation-gain conditions directly on the utility
tensor. Learning uses regret matching: the external variant drives the
empirical distribution of play to the CCE set, the internal (conditional)
variant to the CE set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from cedetect.games import GameError, JointDistribution, StrategicGame


@dataclass(frozen=True)
class DeviationReport:
    """Per-player deviation gains for one equilibrium notion.

    A distribution satisfies the notion iff ``max_gap <= 0`` (up to the
    caller's tolerance). ``worst_deviation`` describes the maximizing player
    and their best deviation: a swap map (CE) or a fixed action (CCE).
    """

    notion: str  # "ce" or "cce"
    per_player_gap: tuple[float, ...]
    max_gap: float
    worst_deviation: str


@dataclass(frozen=True)
class LearnedEquilibrium:
    """Outcome of a regret-matching run.

    ``empirical`` is the time-average of the played profiles and
    ``regret_trace[r, i]`` the average (mode-matched) regret of player ``i``
    after round ``r + 1``.
    """

    empirical: JointDistribution
    rounds: int
    mode: str
    regret_trace: np.ndarray  # shape (rounds, num_players)


def _marginal_and_conditional(game: StrategicGame, dist: JointDistribution, player: int):
    """Per-recommendation expected utilities for `player`.

    Returns (marginal over own actions, cond[a_i, a'] = expected utility of
    playing a' when recommended a_i, unnormalized by the marginal).
    """
    probs = np.moveaxis(dist.probs, player, 0)  # own action first
    utils = np.moveaxis(game.utilities[player], player, 0)
    n_own = game.action_counts[player]
    probs = probs.reshape(n_own, -1)
    utils = utils.reshape(n_own, -1)
    # cond[a, a'] = sum over others of P(a, a_-i) * u(a', a_-i)
    cond = probs @ utils.T
    return probs.sum(axis=1), cond


def ce_deviation_gap(game: StrategicGame, dist: JointDistribution, player: int) -> float:
    """Largest gain player ``player`` can achieve with any swap map.

    The maximum over swap maps decomposes per recommended action, so each
    recommendation is assigned its best replacement independently. The result
    is always >= 0 (the identity map is a swap map); it is 0 iff ``dist``
    satisfies the CE condition for this player.
    """
    dist.validate_for(game)
    _, cond = _marginal_and_conditional(game, dist, player)
    stay = np.diag(cond)
    return float(np.sum(cond.max(axis=1) - stay))


def cce_deviation_gap(game: StrategicGame, dist: JointDistribution, player: int) -> float:
    """Largest gain from committing to one fixed action; <= 0 iff CCE."""
    dist.validate_for(game)
    _, cond = _marginal_and_conditional(game, dist, player)
    stay = float(np.trace(cond))
    return float(cond.sum(axis=0).max() - stay)


def ce_report(game: StrategicGame, dist: JointDistribution) -> DeviationReport:
    gaps, descriptions = [], []
    for i in range(game.num_players):
        _, cond = _marginal_and_conditional(game, dist, i)
        best = cond.argmax(axis=1)
        gaps.append(float(np.sum(cond.max(axis=1) - np.diag(cond))))
        swap = ",".join(f"{a}->{b}" for a, b in enumerate(best) if a != b) or "identity"
        descriptions.append(f"player {i} swap map {{{swap}}}")
    worst = int(np.argmax(gaps))
    return DeviationReport("ce", tuple(gaps), max(gaps), descriptions[worst])


def cce_report(game: StrategicGame, dist: JointDistribution) -> DeviationReport:
    gaps, descriptions = [], []
    for i in range(game.num_players):
        _, cond = _marginal_and_conditional(game, dist, i)
        totals = cond.sum(axis=0)
        gaps.append(float(totals.max() - np.trace(cond)))
        descriptions.append(f"player {i} fixed action {int(totals.argmax())}")
    worst = int(np.argmax(gaps))
    return DeviationReport("cce", tuple(gaps), max(gaps), descriptions[worst])


def _regret_matching_strategy(positive_regrets: np.ndarray) -> np.ndarray:
    total = positive_regrets.sum()
    if total <= 0:
        return np.full(positive_regrets.size, 1.0 / positive_regrets.size)
    return positive_regrets / total


def regret_matching_learn(
    game: StrategicGame,
    rounds: int,
    mode: str = "internal",
    seed: int = 0,
) -> LearnedEquilibrium:
    """Run simultaneous regret matching for all players.

    ``mode="external"`` plays proportionally to positive external regrets and
    bounds external regret (empirical play converges to the CCE set);
    ``mode="internal"`` is the conditional variant that bounds swap regret
    (convergence to the CE set). The reported per-round regret is the
    time-average mode-matched regret, so the empirical distribution's
    deviation gap equals the final trace entry exactly.

    Ties in best responses are broken toward the lowest action index.
    Deterministic for a fixed seed.
    """
    if rounds < 1:
        raise GameError("rounds must be >= 1")
    if mode not in ("external", "internal"):
        raise GameError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    n = game.num_players
    counts = game.action_counts
    # Inertia constant for the internal (conditional) variant; must dominate
    # the largest achievable one-step regret to keep probabilities valid.
    u_range = float(game.utilities.max() - game.utilities.min())
    inertia = 2.0 * max(counts) * max(u_range, 1.0)

    ext_regret = [np.zeros(c) for c in counts]  # external: per action
    swap_regret = [np.zeros((c, c)) for c in counts]  # internal: per (from, to)
    last_action = [0] * n
    profile_counts = np.zeros(counts)
    trace = np.zeros((rounds, n))

    for r in range(rounds):
        actions = []
        for i in range(n):
            if mode == "external":
                strat = _regret_matching_strategy(np.maximum(ext_regret[i], 0.0))
            elif r == 0:
                strat = np.full(counts[i], 1.0 / counts[i])
            else:
                j = last_action[i]
                strat = np.maximum(swap_regret[i][j], 0.0) / (inertia * (r + 1))
                strat[j] = 0.0
                strat[j] = max(1.0 - strat.sum(), 0.0)
            actions.append(int(rng.choice(counts[i], p=strat)))
        prof = tuple(actions)
        profile_counts[prof] += 1.0

        for i in range(n):
            # Counterfactual utilities against the realized opponents' play.
            sel = list(prof)
            sel[i] = slice(None)
            u_alt = game.utilities[i][tuple(sel)]
            played = u_alt[prof[i]]
            ext_regret[i] += u_alt - played
            swap_regret[i][prof[i]] += u_alt - played
            if mode == "external":
                trace[r, i] = max(ext_regret[i].max(), 0.0) / (r + 1)
            else:
                trace[r, i] = np.maximum(swap_regret[i], 0.0).max(axis=1).sum() / (r + 1)
            last_action[i] = prof[i]

    empirical = JointDistribution(profile_counts / rounds)
    return LearnedEquilibrium(empirical, rounds, mode, trace)


def export_regret_trace(learned: LearnedEquilibrium, path) -> None:
    """Write the regret trace as CSV with columns (round, player, avg_regret)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "player", "avg_regret"])
        for r in range(learned.rounds):
            for i in range(learned.regret_trace.shape[1]):
                writer.writerow([r + 1, i, f"{learned.regret_trace[r, i]:.17g}"])
