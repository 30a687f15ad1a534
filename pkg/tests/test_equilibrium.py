import itertools

import numpy as np
import pytest

from cedetect.equilibrium import (
    cce_deviation_gap,
    cce_report,
    ce_deviation_gap,
    ce_report,
    export_regret_trace,
    regret_matching_learn,
)
from cedetect.games import GameError, JointDistribution, build_chicken_game


def brute_force_ce_gap(game, dist, player):
    """Max deviation gain over all swap maps, enumerated exhaustively."""
    n = game.action_counts[player]
    best = -np.inf
    for swap in itertools.product(range(n), repeat=n):
        gain = 0.0
        for prof in game.profiles():
            p = dist.prob(prof)
            if p == 0.0:
                continue
            dev = list(prof)
            dev[player] = swap[prof[player]]
            gain += p * (game.utility(player, tuple(dev)) - game.utility(player, prof))
        best = max(best, gain)
    return best


def brute_force_cce_gap(game, dist, player):
    """Max gain over fixed deviations, enumerated exhaustively."""
    base = sum(
        dist.prob(prof) * game.utility(player, prof) for prof in game.profiles()
    )
    best = -np.inf
    for a in range(game.action_counts[player]):
        val = 0.0
        for prof in game.profiles():
            dev = list(prof)
            dev[player] = a
            val += dist.prob(prof) * game.utility(player, tuple(dev))
        best = max(best, val - base)
    return best


def random_distribution(game, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(game.num_profiles))
    return JointDistribution(p.reshape(game.action_counts))


class TestDeviationGaps:
    def test_chicken_ce_is_ce(self, chicken, ce):
        for player in (0, 1):
            assert ce_deviation_gap(chicken, ce, player) <= 1e-12
            assert cce_deviation_gap(chicken, ce, player) <= 1e-12

    def test_uniform_is_not_ce(self, chicken):
        uni = JointDistribution(np.full((3, 3), 1 / 9))
        for player in (0, 1):
            assert ce_deviation_gap(chicken, uni, player) > 0.1
            assert cce_deviation_gap(chicken, uni, player) > 0.1

    @pytest.mark.parametrize("seed", range(8))
    def test_ce_gap_matches_swap_map_enumeration(self, chicken, seed):
        dist = random_distribution(chicken, seed)
        for player in (0, 1):
            assert ce_deviation_gap(chicken, dist, player) == pytest.approx(
                brute_force_ce_gap(chicken, dist, player), abs=1e-12
            )

    @pytest.mark.parametrize("seed", range(8))
    def test_cce_gap_matches_fixed_action_enumeration(self, chicken, seed):
        dist = random_distribution(chicken, seed)
        for player in (0, 1):
            assert cce_deviation_gap(chicken, dist, player) == pytest.approx(
                brute_force_cce_gap(chicken, dist, player), abs=1e-12
            )

    def test_ce_gap_nonnegative(self, chicken):
        # The identity swap map is always available, so the gap is >= 0.
        for seed in range(20):
            dist = random_distribution(chicken, 100 + seed)
            for player in (0, 1):
                assert ce_deviation_gap(chicken, dist, player) >= 0.0

    def test_ce_implies_cce(self, chicken):
        # A fixed deviation is a constant swap map, so CCE gap <= CE gap.
        for seed in range(10):
            dist = random_distribution(chicken, 200 + seed)
            for player in (0, 1):
                assert cce_deviation_gap(chicken, dist, player) <= (
                    ce_deviation_gap(chicken, dist, player) + 1e-12
                )

    def test_point_mass_nash_profile(self, chicken):
        # (B, B) with payoff 5/5 is not a Nash profile: deviating to C gains.
        pm = JointDistribution.point_mass(chicken, (1, 1))
        assert ce_deviation_gap(chicken, pm, 0) > 0

    def test_reports(self, chicken, ce):
        rep = ce_report(chicken, ce)
        assert rep.notion == "ce"
        assert rep.max_gap <= 1e-12
        assert len(rep.per_player_gap) == 2
        crep = cce_report(chicken, ce)
        assert crep.notion == "cce"
        assert "player" in crep.worst_deviation


class TestRegretMatching:
    def test_rejects_bad_arguments(self, chicken):
        with pytest.raises(GameError):
            regret_matching_learn(chicken, 0)
        with pytest.raises(GameError):
            regret_matching_learn(chicken, 10, mode="swap")

    def test_deterministic_per_seed(self, chicken):
        a = regret_matching_learn(chicken, 500, "external", seed=4)
        b = regret_matching_learn(chicken, 500, "external", seed=4)
        assert np.array_equal(a.empirical.probs, b.empirical.probs)
        assert np.array_equal(a.regret_trace, b.regret_trace)
        c = regret_matching_learn(chicken, 500, "external", seed=5)
        assert not np.array_equal(a.empirical.probs, c.empirical.probs)

    def test_empirical_is_distribution(self, chicken):
        learned = regret_matching_learn(chicken, 1000, "internal", seed=1)
        assert learned.empirical.probs.shape == (3, 3)
        assert learned.empirical.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert learned.regret_trace.shape == (1000, 2)

    def test_external_trace_equals_positive_cce_gap(self, chicken):
        learned = regret_matching_learn(chicken, 2000, "external", seed=2)
        for player in (0, 1):
            gap = cce_deviation_gap(chicken, learned.empirical, player)
            assert learned.regret_trace[-1, player] == pytest.approx(
                max(gap, 0.0), abs=1e-9
            )

    def test_internal_trace_equals_ce_gap(self, chicken):
        learned = regret_matching_learn(chicken, 2000, "internal", seed=2)
        for player in (0, 1):
            gap = ce_deviation_gap(chicken, learned.empirical, player)
            assert learned.regret_trace[-1, player] == pytest.approx(gap, abs=1e-9)

    def test_external_converges_to_cce(self, chicken):
        learned = regret_matching_learn(chicken, 100_000, "external", seed=0)
        for player in (0, 1):
            assert cce_deviation_gap(chicken, learned.empirical, player) <= 0.05

    def test_internal_converges_to_ce(self, chicken):
        learned = regret_matching_learn(chicken, 100_000, "internal", seed=0)
        for player in (0, 1):
            assert ce_deviation_gap(chicken, learned.empirical, player) <= 0.05

    def test_trace_roughly_decreasing(self, chicken):
        learned = regret_matching_learn(chicken, 20_000, "external", seed=9)
        early = learned.regret_trace[100:200].mean()
        late = learned.regret_trace[-100:].mean()
        assert late < early

    def test_export_regret_trace(self, chicken, tmp_path):
        learned = regret_matching_learn(chicken, 50, "external", seed=0)
        path = tmp_path / "trace.csv"
        export_regret_trace(learned, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "round,player,avg_regret"
        assert len(lines) == 1 + 50 * 2
        r, player, val = lines[1].split(",")
        assert (r, player) == ("1", "0")
        float(val)
