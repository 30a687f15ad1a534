"""Finite strategic games, joint distributions over action profiles, and the
victim player's grouped view of the mediator distribution.

Utilities are kept nonnegative throughout (they can always be shifted by a
constant without changing preferences), so the victim's utility alphabet has
a well-defined minimum element.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

PROB_ATOL = 1e-12

# BPR latency coefficients (standard values from the traffic literature).
BPR_COEF = 0.15
BPR_EXP = 4


class GameError(ValueError):
    """Invalid game, distribution, or view construction."""


@dataclass(frozen=True)
class StrategicGame:
    """A finite N-player game in strategic form.

    ``utilities[i]`` is a dense tensor of shape ``action_counts`` giving
    player ``i``'s utility for each action profile.
    """

    num_players: int
    action_counts: tuple[int, ...]
    utilities: np.ndarray  # shape (num_players, *action_counts)

    def __post_init__(self):
        utils = np.asarray(self.utilities, dtype=np.float64)
        object.__setattr__(self, "utilities", utils)
        object.__setattr__(self, "action_counts", tuple(int(c) for c in self.action_counts))
        if self.num_players < 1 or any(c < 1 for c in self.action_counts):
            raise GameError("players and action counts must be positive")
        if len(self.action_counts) != self.num_players:
            raise GameError("one action count per player required")
        if utils.shape != (self.num_players, *self.action_counts):
            raise GameError(
                f"utility tensor shape {utils.shape} inconsistent with "
                f"{self.num_players} players and action counts {self.action_counts}"
            )
        if not np.all(np.isfinite(utils)) or np.min(utils) < 0:
            raise GameError("utilities must be finite and nonnegative")
        utils.setflags(write=False)

    @property
    def num_profiles(self) -> int:
        return int(np.prod(self.action_counts))

    def profiles(self):
        """Iterate over all action profiles in row-major order."""
        return itertools.product(*(range(c) for c in self.action_counts))

    def utility(self, player: int, profile: tuple[int, ...]) -> float:
        return float(self.utilities[(player, *profile)])


@dataclass(frozen=True)
class JointDistribution:
    """A probability distribution over the action profiles of a game.

    ``probs`` has one axis per player (row-major profile order when
    flattened).
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if np.min(p) < 0:
            raise GameError("negative probability")
        if abs(p.sum() - 1.0) > PROB_ATOL:
            raise GameError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)

    def validate_for(self, game: StrategicGame) -> None:
        if self.probs.shape != game.action_counts:
            raise GameError(
                f"distribution shape {self.probs.shape} does not match "
                f"action counts {game.action_counts}"
            )

    def prob(self, profile: tuple[int, ...]) -> float:
        return float(self.probs[profile])

    @staticmethod
    def point_mass(game: StrategicGame, profile: tuple[int, ...]) -> "JointDistribution":
        p = np.zeros(game.action_counts)
        p[profile] = 1.0
        return JointDistribution(p)

    @staticmethod
    def uniform_over(game: StrategicGame, profiles) -> "JointDistribution":
        p = np.zeros(game.action_counts)
        profiles = list(profiles)
        for prof in profiles:
            p[tuple(prof)] = 1.0 / len(profiles)
        return JointDistribution(p)


@dataclass(frozen=True)
class VictimView:
    """The victim player's view of a joint distribution.

    Action profiles yielding the same victim utility are indistinguishable
    to the victim, so they are grouped into a single outcome. The alphabet
    lists the distinct utility values in strictly increasing order (index 0
    is always the worst outcome), restricted to values with positive mass.
    """

    victim: int
    alphabet: np.ndarray  # strictly increasing utility values
    base_pmf: np.ndarray  # same length, sums to 1
    profile_groups: tuple[tuple[tuple[int, ...], ...], ...] = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.alphabet, dtype=np.float64)
        p = np.asarray(self.base_pmf, dtype=np.float64)
        object.__setattr__(self, "alphabet", a)
        object.__setattr__(self, "base_pmf", p)
        if a.ndim != 1 or a.shape != p.shape or a.size == 0:
            raise GameError("alphabet and pmf must be matching nonempty vectors")
        if not np.all(np.diff(a) > 0):
            raise GameError("alphabet values must be strictly increasing")
        if np.min(p) <= 0:
            raise GameError("alphabet carries a zero-mass symbol")
        if abs(p.sum() - 1.0) > PROB_ATOL:
            raise GameError(f"pmf sums to {p.sum()!r}, not 1")
        a.setflags(write=False)
        p.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.alphabet.size)

    @property
    def u_min(self) -> float:
        return float(self.alphabet[0])

    @property
    def mean(self) -> float:
        return float(self.base_pmf @ self.alphabet)


def build_chicken_game() -> StrategicGame:
    """The two-player, three-action Extended Game of Chicken.

    Player 1 is the row player; actions are (A, B, C) for both players.
    """
    u1 = np.array([[0.0, 6.0, 9.0],
                   [1.0, 5.0, 4.0],
                   [3.0, 2.0, 7.0]])
    # Player 2's payoff matrix is the transpose pattern of player 1's.
    u2 = np.array([[0.0, 1.0, 3.0],
                   [6.0, 5.0, 2.0],
                   [9.0, 4.0, 7.0]])
    return StrategicGame(2, (3, 3), np.stack([u1, u2]))


def chicken_ce() -> JointDistribution:
    """A correlated equilibrium of the Extended Game of Chicken."""
    p = np.zeros((3, 3))
    p[0, 1] = p[1, 0] = p[1, 1] = 1.0 / 36.0
    p[0, 2] = p[2, 0] = 1.0 / 3.0
    p[2, 2] = 1.0 / 4.0
    return JointDistribution(p)


def expected_utility(game: StrategicGame, dist: JointDistribution, player: int) -> float:
    """Expected per-step utility of ``player`` under ``dist``."""
    dist.validate_for(game)
    if not 0 <= player < game.num_players:
        raise GameError(f"player index {player} out of range")
    return float(np.sum(dist.probs * game.utilities[player]))


def victim_view(game: StrategicGame, dist: JointDistribution, victim: int) -> VictimView:
    """Group action profiles by the victim's exact utility value.

    Zero-mass utility values are dropped: tilting and KL divergence are only
    defined on the support of the mediator distribution.
    """
    dist.validate_for(game)
    if not 0 <= victim < game.num_players:
        raise GameError(f"victim index {victim} out of range")
    groups: dict[float, list[tuple[int, ...]]] = {}
    masses: dict[float, float] = {}
    for prof in game.profiles():
        m = dist.prob(prof)
        if m <= 0.0:
            continue
        u = game.utility(victim, prof)
        groups.setdefault(u, []).append(prof)
        masses[u] = masses.get(u, 0.0) + m
    values = sorted(masses)
    return VictimView(
        victim=victim,
        alphabet=np.array(values),
        base_pmf=np.array([masses[v] for v in values]),
        profile_groups=tuple(tuple(groups[v]) for v in values),
    )


def quantize_view(view: VictimView, bins: int) -> VictimView:
    """Merge alphabet symbols into ``bins`` equal-width utility bins.

    Each occupied bin becomes one symbol valued at the bin midpoint, with the
    bin's total mass and merged profile groups. Total mass is always
    preserved exactly up to summation rounding.
    """
    if bins < 1:
        raise GameError("bins must be >= 1")
    lo, hi = view.alphabet[0], view.alphabet[-1]
    width = (hi - lo) / bins
    if width == 0.0:
        return VictimView(view.victim, view.alphabet, view.base_pmf, view.profile_groups)
    idx = np.minimum(((view.alphabet - lo) / width).astype(int), bins - 1)
    values, masses, groups = [], [], []
    for b in sorted(set(idx.tolist())):
        members = np.flatnonzero(idx == b)
        values.append(lo + (b + 0.5) * width)
        masses.append(float(view.base_pmf[members].sum()))
        merged: list[tuple[int, ...]] = []
        for k in members:
            merged.extend(view.profile_groups[k])
        groups.append(tuple(merged))
    return VictimView(view.victim, np.array(values), np.array(masses), tuple(groups))


def _bpr_time(fftime: float, load: float, capacity: float) -> float:
    return fftime * (1.0 + BPR_COEF * (load / capacity) ** BPR_EXP)


def build_congestion_game(
    nodes: int,
    edges: list[tuple[int, int, float, float]],
    players: list[tuple[int, int, float]],
    paths_per_player: int,
    utility_scale: float = 1.0,
) -> StrategicGame:
    """Build a small traffic routing game.

    ``edges`` are ``(u, v, capacity, fftime)`` tuples defining an undirected
    network; ``players`` are ``(origin, destination, demand)``. Each player's
    action set is its ``paths_per_player`` shortest simple paths under
    free-flow travel times. Edge travel time under load follows the BPR form
    ``fftime * (1 + 0.15 * (load / capacity)**4)``, and utilities are
    ``utility_scale * (offset - travel_time)`` with the offset chosen so that
    all utilities are nonnegative.
    """
    if paths_per_player < 1 or utility_scale <= 0:
        raise GameError("paths_per_player and utility_scale must be positive")
    graph = nx.Graph()
    graph.add_nodes_from(range(nodes))
    for u, v, cap, fft in edges:
        if cap <= 0 or fft <= 0:
            raise GameError("edge capacity and free-flow time must be positive")
        graph.add_edge(int(u), int(v), capacity=float(cap), fftime=float(fft))

    player_paths: list[list[tuple[tuple[int, int], ...]]] = []
    for origin, dest, demand in players:
        if demand <= 0:
            raise GameError("demand must be positive")
        try:
            gen = nx.shortest_simple_paths(graph, int(origin), int(dest), weight="fftime")
            paths = list(itertools.islice(gen, paths_per_player))
        except (nx.NetworkXNoPath, nx.NodeNotFound) as exc:
            raise GameError(f"no route from {origin} to {dest}") from exc
        if len(paths) < paths_per_player:
            raise GameError(
                f"player ({origin}->{dest}) has only {len(paths)} simple paths, "
                f"needs {paths_per_player}"
            )
        as_edges = [
            tuple(tuple(sorted((a, b))) for a, b in zip(p[:-1], p[1:])) for p in paths
        ]
        player_paths.append(as_edges)

    n = len(players)
    counts = tuple(paths_per_player for _ in range(n))
    times = np.zeros((n, *counts))
    demands = [float(d) for _, _, d in players]
    for prof in itertools.product(*(range(paths_per_player) for _ in range(n))):
        load: dict[tuple[int, int], float] = {}
        for i, a in enumerate(prof):
            for e in player_paths[i][a]:
                load[e] = load.get(e, 0.0) + demands[i]
        for i, a in enumerate(prof):
            t = 0.0
            for e in player_paths[i][a]:
                data = graph.edges[e]
                t += _bpr_time(data["fftime"], load[e], data["capacity"])
            times[(i, *prof)] = t
    offset = float(times.max())
    return StrategicGame(n, counts, utility_scale * (offset - times))
