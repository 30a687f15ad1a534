"""Structured (YAML) configuration files for games, distributions, attacks,
and experiment runs. The schemas are documented in FORMATS.md.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from cedetect.adversary import (
    AttackSpec,
    StartLaw,
    make_explicit_attack,
    make_tilted_attack,
    sample_random_attack,
    theta_min_for,
)
from cedetect.games import GameError, JointDistribution, StrategicGame
from cedetect.tilting import TiltedFamily

LOAD_PROB_ATOL = 1e-9


class ConfigError(ValueError):
    """Malformed or inconsistent configuration document."""


def load_document(path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def game_from_config(doc: dict) -> StrategicGame:
    """Build a game from its config section.

    Two kinds are supported: explicit utility tensors (flat per-player lists
    in row-major profile order) and generated congestion routing games
    (``kind: congestion`` with a network description).
    """
    try:
        section = doc["game"]
    except (KeyError, TypeError) as exc:
        raise ConfigError("missing game section") from exc
    if isinstance(section, dict) and section.get("kind") == "congestion":
        return _congestion_from_config(section)
    try:
        players = int(section["players"])
        counts = [int(c) for c in section["action_counts"]]
        utilities = section["utilities"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid game section: {exc}") from exc
    if len(utilities) != players:
        raise ConfigError("one utility array per player required")
    shape = tuple(counts)
    try:
        tensor = np.stack([np.asarray(u, dtype=float).reshape(shape) for u in utilities])
    except ValueError as exc:
        raise ConfigError(f"utility array shape mismatch: {exc}") from exc
    try:
        return StrategicGame(players, shape, tensor)
    except GameError as exc:
        raise ConfigError(str(exc)) from exc


def _congestion_from_config(section: dict) -> StrategicGame:
    """Generated routing game: nodes, edges (u, v, capacity, fftime),
    players (origin, destination, demand), paths_per_player."""
    from cedetect.games import build_congestion_game

    try:
        return build_congestion_game(
            nodes=int(section["nodes"]),
            edges=[tuple(e) for e in section["edges"]],
            players=[tuple(p) for p in section["players"]],
            paths_per_player=int(section["paths_per_player"]),
            utility_scale=float(section.get("utility_scale", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid congestion game section: {exc}") from exc
    except GameError as exc:
        raise ConfigError(str(exc)) from exc


def distribution_from_config(doc: dict, game: StrategicGame) -> JointDistribution:
    """Distribution as (profile-index, probability) pairs over the flat
    row-major profile space; must sum to 1 within 1e-9."""
    try:
        pairs = doc["distribution"]
    except KeyError as exc:
        raise ConfigError("missing distribution section") from exc
    flat = np.zeros(game.num_profiles)
    for entry in pairs:
        try:
            idx, prob = int(entry[0]), float(entry[1])
        except (TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"bad distribution entry {entry!r}") from exc
        if not 0 <= idx < game.num_profiles:
            raise ConfigError(f"profile index {idx} out of range")
        flat[idx] += prob
    if abs(flat.sum() - 1.0) > LOAD_PROB_ATOL:
        raise ConfigError(f"distribution sums to {flat.sum()!r}, not 1")
    flat = flat / flat.sum()
    try:
        return JointDistribution(flat.reshape(game.action_counts))
    except GameError as exc:
        raise ConfigError(str(exc)) from exc


def distribution_to_config(dist: JointDistribution) -> list[list]:
    flat = dist.probs.ravel()
    return [[int(i), float(p)] for i, p in enumerate(flat) if p > 0.0]


def game_to_config(game: StrategicGame) -> dict:
    return {
        "players": game.num_players,
        "action_counts": list(game.action_counts),
        "utilities": [game.utilities[i].ravel().tolist() for i in range(game.num_players)],
    }


def attack_from_config(entry: dict, fam: TiltedFamily, epsilon: float) -> AttackSpec:
    """Attack entries: kind tilted (theta, or "min" for the smallest tilt
    meeting the cost floor), explicit (pmf), or random (seed); optional start
    law {fixed: t | never | adaptive: p}."""
    kind = entry.get("kind")
    start = _start_from_config(entry.get("start", {"fixed": 1}))
    label = entry.get("label")
    if kind == "tilted":
        theta = entry["theta"]
        if theta == "min":
            theta = theta_min_for(fam, epsilon)
            label = label or "theta_min"
        return make_tilted_attack(fam, float(theta), start, epsilon, label)
    if kind == "explicit":
        return make_explicit_attack(
            fam, np.asarray(entry["pmf"], dtype=float), start, epsilon,
            label or "explicit",
        )
    if kind == "random":
        return sample_random_attack(fam, epsilon, int(entry["seed"]), start)
    raise ConfigError(f"unknown attack kind {kind!r}")


def _start_from_config(spec) -> StartLaw:
    if spec == "never":
        return StartLaw.never()
    if isinstance(spec, dict):
        if "fixed" in spec:
            return StartLaw.fixed(int(spec["fixed"]))
        if "adaptive" in spec:
            return StartLaw.adaptive(float(spec["adaptive"]))
    raise ConfigError(f"unknown start law {spec!r}")


def config_digest(doc: dict) -> str:
    """Content hash of a resolved config, stable under key reordering."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record written next to every command's outputs."""

    config_digest: str
    tool_version: str
    master_seed: int
    outputs: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")


class ManifestTimer:
    """Collects outputs and wall time for a RunManifest."""

    def __init__(self, doc: dict, seed: int, version: str):
        self.manifest = RunManifest(config_digest(doc), version, seed)
        self._t0 = time.monotonic()

    def add_output(self, path) -> None:
        self.manifest.outputs.append(str(path))

    def write(self, path) -> None:
        self.manifest.wall_time = time.monotonic() - self._t0
        self.manifest.write(path)


SWEEP_KEYS = (
    "victim", "epsilon", "alpha_grid", "attacks", "quantize_bins",
    "episodes", "horizon", "seed",
)


def write_distribution_file(
    path, game: StrategicGame, dist: JointDistribution, extra: dict | None = None
) -> None:
    """Write a game + distribution document; ``extra`` keys (typically the
    sweep parameters of the source config) are carried through so the file
    can be fed back into the sweep command unchanged."""
    doc = {"game": game_to_config(game), "distribution": distribution_to_config(dist)}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def recipe_path(name: str) -> Path:
    """Path of a bundled recipe config."""
    return Path(__file__).parent / "recipes" / name
