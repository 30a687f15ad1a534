"""Command-line interface.

Each command reads one YAML config document (flags override config keys),
writes CSV/YAML outputs plus a JSON run manifest, and uses the exit codes:
0 success/pass, 1 verification failure, 2 config error, 3 runtime or
feasibility error.
"""

from __future__ import annotations

import math
import os
import sys
from pathlib import Path

import click
import numpy as np

import cedetect
from cedetect.adversary import (
    AttackError,
    StartLaw,
    make_tilted_attack,
    theta_min_for,
)
from cedetect.configio import (
    SWEEP_KEYS,
    ConfigError,
    ManifestTimer,
    attack_from_config,
    distribution_from_config,
    game_from_config,
    load_document,
    write_distribution_file,
)
from cedetect.detection import DetectionError, build_detector
from cedetect.equilibrium import (
    cce_report,
    ce_report,
    export_regret_trace,
    regret_matching_learn,
)
from cedetect.games import GameError, quantize_view, victim_view
from cedetect.simulation import (
    SimulationError,
    calibrate_alpha_for_mtbfa,
    estimate_delay_and_impact,
    sweep,
    write_sweep_csv,
)
from cedetect.tilting import (
    TiltedFamily,
    TiltingError,
    impact_efficiency,
    kl_from_base,
    mean_utility,
    solve_theta_for_mean,
)

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path):
    try:
        doc = load_document(config_path)
        game = game_from_config(doc)
        dist = distribution_from_config(doc, game)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    return doc, game, dist


def _family(doc, game, dist, victim, bins=None) -> TiltedFamily:
    view = victim_view(game, dist, victim)
    bins = bins if bins is not None else doc.get("quantize_bins")
    if bins:
        view = quantize_view(view, int(bins))
    try:
        return TiltedFamily(view)
    except TiltingError as exc:
        _fail(EXIT_RUNTIME, str(exc))


def _resolve(doc: dict, **overrides) -> dict:
    resolved = dict(doc)
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    return resolved


def _default_workers() -> int:
    return int(os.environ.get("CEDETECT_WORKERS", "1"))


@click.group()
@click.version_option(version=cedetect.__version__)
def main():
    """Attack and detection experiments on mediator signal streams."""


@main.command()
@click.argument("config", type=click.Path())
@click.option("--tolerance", type=float, default=1e-9, show_default=True,
              help="Largest deviation gain still accepted as an equilibrium.")
def verify(config, tolerance):
    """Check the CE and CCE conditions of the configured distribution."""
    _, game, dist = _load(config)
    ce = ce_report(game, dist)
    cce = cce_report(game, dist)
    for report in (ce, cce):
        for i, gap in enumerate(report.per_player_gap):
            click.echo(f"{report.notion} player {i} gap {gap:.6g}")
    ok = ce.max_gap <= tolerance
    click.echo(f"ce {'PASS' if ok else 'FAIL'} (max gap {ce.max_gap:.6g}, "
               f"worst: {ce.worst_deviation})")
    click.echo(f"cce {'PASS' if cce.max_gap <= tolerance else 'FAIL'} "
               f"(max gap {cce.max_gap:.6g})")
    sys.exit(EXIT_OK if ok else EXIT_VERIFY_FAIL)


@main.command()
@click.argument("config", type=click.Path())
@click.option("--victim", type=int, default=None, help="Victim player index.")
@click.option("--epsilon", type=float, default=None,
              help="Per-step cost floor; prints the matching smallest tilt.")
@click.option("--theta-grid", default="0.01:1.0:25",
              show_default=True, help="Tilt grid as start:stop:count.")
@click.option("--bins", type=int, default=None, help="Quantize the view first.")
@click.option("-o", "--output", type=click.Path(), default=None,
              help="Write the table as CSV instead of stdout.")
def tilt(config, victim, epsilon, theta_grid, bins, output):
    """Tabulate mean utility, divergence, and efficiency along the tilt curve."""
    doc, game, dist = _load(config)
    victim = victim if victim is not None else int(doc.get("victim", 0))
    fam = _family(doc, game, dist, victim, bins)
    lines = ["theta,u_theta,d_theta,g_theta"]
    try:
        lo, hi, count = theta_grid.split(":")
        grid = np.linspace(float(lo), float(hi), int(count))
    except ValueError:
        _fail(EXIT_CONFIG, f"bad theta grid {theta_grid!r}")
    for theta in grid:
        g_val = impact_efficiency(fam, theta) if theta > 0 else math.nan
        lines.append(
            f"{theta:.17g},{mean_utility(fam, theta):.17g},"
            f"{kl_from_base(fam, theta):.17g},{g_val:.17g}"
        )
    if epsilon is not None:
        try:
            solve = solve_theta_for_mean(fam, fam.base_mean - epsilon)
        except TiltingError as exc:
            _fail(EXIT_RUNTIME, f"infeasible epsilon: {exc}")
        click.echo(f"theta_min = {solve.theta:.6g} (residual {solve.residual:.2g})")
    text = "\n".join(lines) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        click.echo(text, nl=False)


def _sweep_inputs(doc, workers):
    victim = int(doc.get("victim", 0))
    epsilon = float(doc["epsilon"])
    episodes = int(doc.get("episodes", 1000))
    horizon = int(doc.get("horizon", 100_000))
    seed = int(doc.get("seed", 0))
    workers = workers or int(doc.get("workers", 0)) or _default_workers()
    return victim, epsilon, episodes, horizon, seed, workers


@main.command("sweep")
@click.argument("config", type=click.Path())
@click.option("-o", "--output-dir", type=click.Path(), default=".", show_default=True)
@click.option("--workers", type=int, default=None,
              help="Parallel episode workers (CEDETECT_WORKERS also honored).")
@click.option("--episodes", type=int, default=None)
@click.option("--horizon", type=int, default=None)
@click.option("--seed", type=int, default=None)
def sweep_cmd(config, output_dir, workers, episodes, horizon, seed):
    """Run the delay/impact trade-off sweep over the alpha grid."""
    doc, game, dist = _load(config)
    doc = _resolve(doc, episodes=episodes, horizon=horizon, seed=seed)
    try:
        victim, epsilon, episodes, horizon, seed, workers = _sweep_inputs(doc, workers)
        alpha_grid = [float(a) for a in doc["alpha_grid"]]
        fam = _family(doc, game, dist, victim)
        attacks = [attack_from_config(e, fam, epsilon) for e in doc.get("attacks", [])]
    except (KeyError, ValueError, ConfigError) as exc:
        _fail(EXIT_CONFIG, f"invalid sweep config: {exc}")
    except (TiltingError, AttackError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    timer = ManifestTimer(doc, seed, cedetect.__version__)
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        rows = sweep(fam, epsilon, alpha_grid, attacks, episodes, horizon, seed,
                     workers=workers)
    except (SimulationError, DetectionError, TiltingError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    csv_path = outdir / "sweep.csv"
    write_sweep_csv(rows, csv_path)
    timer.add_output(csv_path)
    timer.write(outdir / "manifest.json")
    click.echo(f"wrote {csv_path} ({len(rows)} rows)")


@main.command("tolerable-impact")
@click.argument("config", type=click.Path())
@click.option("-o", "--output-dir", type=click.Path(), default=".", show_default=True)
@click.option("--workers", type=int, default=None)
def tolerable_impact(config, output_dir, workers):
    """Worst-case attack impact across the cost-floor grid.

    For each epsilon, calibrates alpha to each target mean time between
    false alarms and measures the impact of the matching smallest-tilt
    attack.
    """
    doc, game, dist = _load(config)
    try:
        victim = int(doc.get("victim", 0))
        epsilon_grid = [float(e) for e in doc["epsilon_grid"]]
        targets = [float(t) for t in doc["mtbfa_targets"]]
        episodes = int(doc.get("episodes", 500))
        horizon = int(doc.get("horizon", 100_000))
        seed = int(doc.get("seed", 0))
        workers = workers or _default_workers()
        fam = _family(doc, game, dist, victim)
    except (KeyError, ValueError, ConfigError) as exc:
        _fail(EXIT_CONFIG, f"invalid config: {exc}")
    timer = ManifestTimer(doc, seed, cedetect.__version__)
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["epsilon,mtbfa_target,mtbfa,alpha,impact_at_theta_min"]
    for eps in epsilon_grid:
        if eps >= fam.base_mean - fam.u_min:
            _fail(EXIT_RUNTIME,
                  f"epsilon {eps} at or beyond the feasible range "
                  f"(0, {fam.base_mean - fam.u_min})")
        for target in targets:
            try:
                alpha, mtbfa = calibrate_alpha_for_mtbfa(
                    fam, eps, target, episodes, horizon, (seed, 0), workers=workers
                )
            except SimulationError as exc:
                _fail(EXIT_RUNTIME, str(exc))
            detector = build_detector(fam, eps, alpha)
            attack = make_tilted_attack(fam, theta_min_for(fam, eps), StartLaw.fixed(1))
            _, impact, _ = estimate_delay_and_impact(
                fam, detector, attack, episodes, horizon, (seed, 1), workers=workers
            )
            lines.append(f"{eps:.17g},{target:.17g},{mtbfa:.17g},"
                         f"{alpha:.17g},{impact:.17g}")
    csv_path = outdir / "tolerable_impact.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    timer.add_output(csv_path)
    timer.write(outdir / "manifest.json")
    click.echo(f"wrote {csv_path}")


@main.command()
@click.argument("config", type=click.Path())
@click.option("-o", "--output-dir", type=click.Path(), default=".", show_default=True)
@click.option("--rounds", type=int, default=None)
@click.option("--mode", type=click.Choice(["external", "internal"]), default=None)
@click.option("--seed", type=int, default=None)
def learn(config, output_dir, rounds, mode, seed):
    """Learn an approximate (coarse) correlated equilibrium by regret matching.

    Writes the empirical distribution in the game/distribution config format
    (usable as input to `verify` and `sweep`) plus the regret trace CSV.
    """
    doc = None
    try:
        doc = load_document(config)
        game = game_from_config(doc)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    doc = _resolve(doc, rounds=rounds, mode=mode, seed=seed)
    rounds = int(doc.get("rounds", 100_000))
    mode = doc.get("mode", "internal")
    seed = int(doc.get("seed", 0))
    timer = ManifestTimer(doc, seed, cedetect.__version__)
    try:
        learned = regret_matching_learn(game, rounds, mode, seed)
    except GameError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    dist_path = outdir / "learned_distribution.yaml"
    trace_path = outdir / "regret_trace.csv"
    extra = {k: doc[k] for k in SWEEP_KEYS if k in doc}
    write_distribution_file(dist_path, game, learned.empirical, extra)
    export_regret_trace(learned, trace_path)
    timer.add_output(dist_path)
    timer.add_output(trace_path)
    timer.write(outdir / "manifest.json")
    final = learned.regret_trace[-1]
    click.echo(f"final avg regret per player: {[f'{r:.4g}' for r in final]}")
    report = (cce_report if mode == "external" else ce_report)(game, learned.empirical)
    click.echo(f"learned {report.notion} max gap: {report.max_gap:.4g}")
    click.echo(f"wrote {dist_path} and {trace_path}")


if __name__ == "__main__":
    main()
