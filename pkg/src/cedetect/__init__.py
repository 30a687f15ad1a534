"""Adversarial manipulation of correlated-equilibrium mediator signals and
its quickest-change detection.

The library has three layers:

- game machinery: finite strategic games, joint distributions, the victim
  player's utility alphabet (:mod:`cedetect.games`,
  :mod:`cedetect.equilibrium`);
- the attack/defense core: exponentially tilted attack distributions and the
  generalized CUSUM detector (:mod:`cedetect.tilting`,
  :mod:`cedetect.detection`, :mod:`cedetect.adversary`);
- a deterministic Monte-Carlo harness for delay/impact trade-off curves
  (:mod:`cedetect.simulation`) plus a CLI (:mod:`cedetect.cli`).
"""

from cedetect.games import (
    StrategicGame,
    JointDistribution,
    VictimView,
    build_chicken_game,
    chicken_ce,
    expected_utility,
    victim_view,
    quantize_view,
    build_congestion_game,
)
from cedetect.equilibrium import (
    DeviationReport,
    LearnedEquilibrium,
    ce_deviation_gap,
    cce_deviation_gap,
    ce_report,
    cce_report,
    regret_matching_learn,
)
from cedetect.tilting import TiltedFamily, ThetaSolve
from cedetect.detection import (
    DetectorConfig,
    DetectorState,
    Verdict,
    mu_alpha,
    build_detector,
    detector_step,
    cusum_step,
    gen_sprt_stop,
)
from cedetect.adversary import (
    AttackSpec,
    make_tilted_attack,
    make_explicit_attack,
    sample_random_attack,
    next_change_decision,
    in_D_epsilon,
)
from cedetect.simulation import (
    EpisodeConfig,
    EpisodeResult,
    run_episode,
    realized_cost,
    estimate_mtbfa,
    estimate_delay_and_impact,
    sweep,
    calibrate_mu_for_cost,
    wald_check,
)

__version__ = "0.1.0"
