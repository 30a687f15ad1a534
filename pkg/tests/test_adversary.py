import numpy as np
import pytest

from cedetect.adversary import (
    AdaptiveStartState,
    AttackError,
    AttackSpec,
    StartLaw,
    attack_efficiency,
    expected_step_cost,
    in_D_epsilon,
    make_explicit_attack,
    make_tilted_attack,
    next_change_decision,
    sample_random_attack,
    start_probability,
    theta_min_for,
)
from cedetect.tilting import impact_efficiency, kl_from_base, solve_theta_for_mean, tilt


class TestStartLaw:
    def test_constructors(self):
        assert StartLaw.fixed(5).t == 5
        assert StartLaw.never().kind == "never"
        assert StartLaw.adaptive(0.2).p == 0.2

    def test_validation(self):
        with pytest.raises(AttackError):
            StartLaw("sometimes")
        with pytest.raises(AttackError):
            StartLaw.fixed(0)
        with pytest.raises(AttackError):
            StartLaw.adaptive(0.0)
        with pytest.raises(AttackError):
            StartLaw.adaptive(1.5)


class TestAttackSpec:
    def test_rejects_non_pmf(self):
        with pytest.raises(AttackError):
            AttackSpec(np.array([0.5, 0.6]), StartLaw.fixed(1), "bad")
        with pytest.raises(AttackError):
            AttackSpec(np.array([1.2, -0.2]), StartLaw.fixed(1), "bad")

    def test_distribution_frozen(self):
        spec = AttackSpec(np.array([0.5, 0.5]), StartLaw.fixed(1), "ok")
        with pytest.raises(ValueError):
            spec.distribution[0] = 0.9


class TestCostFloor:
    def test_expected_step_cost(self, chicken_family):
        tau = np.array([1.0, 0, 0, 0, 0, 0])
        assert expected_step_cost(chicken_family, tau) == pytest.approx(
            chicken_family.base_mean - 1.0
        )
        assert expected_step_cost(
            chicken_family, chicken_family.base_pmf
        ) == pytest.approx(0.0, abs=1e-12)

    def test_in_D_epsilon(self, chicken_family):
        theta_min = theta_min_for(chicken_family, 0.5)
        assert in_D_epsilon(chicken_family, tilt(chicken_family, theta_min), 0.5)
        assert not in_D_epsilon(
            chicken_family, tilt(chicken_family, theta_min * 0.5), 0.5
        )

    def test_in_D_epsilon_validation(self, chicken_family):
        with pytest.raises(AttackError):
            in_D_epsilon(chicken_family, np.array([0.5, 0.5]), 0.5)
        with pytest.raises(AttackError):
            in_D_epsilon(chicken_family, np.full(6, 0.5), 0.5)

    def test_theta_min_for(self, chicken_family):
        theta = theta_min_for(chicken_family, 0.5)
        assert theta == pytest.approx(
            solve_theta_for_mean(
                chicken_family, chicken_family.base_mean - 0.5
            ).theta
        )
        assert 0.065 <= theta <= 0.075


class TestAttackConstruction:
    def test_tilted_attack(self, chicken_family):
        spec = make_tilted_attack(chicken_family, 0.09, StartLaw.fixed(1), 0.5)
        assert spec.meets_epsilon
        assert np.allclose(spec.distribution, tilt(chicken_family, 0.09))
        assert spec.label == "tilted(theta=0.09)"

    def test_sub_threshold_tilt_flagged(self, chicken_family):
        spec = make_tilted_attack(chicken_family, 0.01, StartLaw.fixed(1), 0.5)
        assert not spec.meets_epsilon

    def test_negative_theta_rejected(self, chicken_family):
        with pytest.raises(AttackError):
            make_tilted_attack(chicken_family, -0.1, StartLaw.fixed(1))

    def test_explicit_attack(self, chicken_family):
        tau = np.array([0.9, 0.02, 0.02, 0.02, 0.02, 0.02])
        spec = make_explicit_attack(chicken_family, tau, StartLaw.fixed(1), 0.5)
        assert spec.meets_epsilon

    def test_random_attack_deterministic_and_feasible(self, chicken_family):
        a = sample_random_attack(chicken_family, 0.5, seed=7)
        b = sample_random_attack(chicken_family, 0.5, seed=7)
        assert np.array_equal(a.distribution, b.distribution)
        assert a.label == "random(seed=7)"
        assert expected_step_cost(chicken_family, a.distribution) >= 0.5
        c = sample_random_attack(chicken_family, 0.5, seed=8)
        assert not np.array_equal(a.distribution, c.distribution)

    def test_random_attack_infeasible_epsilon(self, chicken_family):
        with pytest.raises(AttackError):
            sample_random_attack(chicken_family, 6.0, seed=1)


class TestAdaptiveStart:
    def test_no_probability_before_first_observation(self, chicken_family):
        spec = make_tilted_attack(chicken_family, 0.09, StartLaw.adaptive(0.5))
        assert start_probability(spec, AdaptiveStartState()) == 0.0

    def test_probability_formula(self, chicken_family):
        spec = make_tilted_attack(chicken_family, 0.09, StartLaw.adaptive(0.5))
        state = AdaptiveStartState(R=0.0, last_l=-2.0)
        expected = 0.5 * (1.0 - np.exp(-2.0))
        assert start_probability(spec, state) == pytest.approx(expected)
        # Positive excursions keep the probability at zero.
        assert start_probability(
            spec, AdaptiveStartState(R=1.0, last_l=0.5)
        ) == 0.0

    def test_observe_runs_cusum(self):
        state = AdaptiveStartState()
        state.observe(0.4)
        state.observe(-1.0)
        assert state.R == 0.0
        assert state.last_l == -1.0

    def test_requires_adaptive_law(self, chicken_family):
        spec = make_tilted_attack(chicken_family, 0.09, StartLaw.fixed(1))
        with pytest.raises(AttackError):
            start_probability(spec, AdaptiveStartState())

    def test_decision_uses_rng(self, chicken_family):
        spec = make_tilted_attack(chicken_family, 0.09, StartLaw.adaptive(1.0))
        state = AdaptiveStartState(R=0.0, last_l=-50.0)  # probability ~1
        assert next_change_decision(spec, state, np.random.default_rng(0))


class TestAttackEfficiency:
    def test_matches_tilted_efficiency(self, chicken_family):
        for theta in (0.07, 0.2, 1.0):
            assert attack_efficiency(
                chicken_family, tilt(chicken_family, theta)
            ) == pytest.approx(impact_efficiency(chicken_family, theta), abs=1e-9)

    def test_kl_term(self, chicken_family):
        tau = np.array([0.4, 0.2, 0.1, 0.1, 0.1, 0.1])
        kl = float(np.sum(tau * np.log(tau / chicken_family.base_pmf)))
        g = attack_efficiency(chicken_family, tau)
        assert g == pytest.approx(expected_step_cost(chicken_family, tau) / kl)
