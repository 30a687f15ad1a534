import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from cedetect.cli import main
from cedetect.configio import (
    ConfigError,
    attack_from_config,
    config_digest,
    distribution_from_config,
    distribution_to_config,
    game_from_config,
    game_to_config,
    load_document,
    recipe_path,
    write_distribution_file,
)
from cedetect.games import build_chicken_game, chicken_ce

RECIPES = [
    "chicken-fig1.yaml",
    "chicken-uniform.yaml",
    "routing-toy-fig2.yaml",
    "tolerable-impact-fig3.yaml",
]


@pytest.fixture()
def chicken_doc():
    return load_document(recipe_path("chicken-fig1.yaml"))


class TestDocuments:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_document(tmp_path / "nope.yaml")

    def test_non_mapping_rejected(self, tmp_path):
        p = tmp_path / "list.yaml"
        p.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_document(p)

    @pytest.mark.parametrize("name", RECIPES)
    def test_bundled_recipes_load(self, name):
        path = recipe_path(name)
        assert path.is_file()
        doc = load_document(path)
        game_from_config(doc)


class TestGameRoundTrip:
    def test_chicken_round_trip(self, chicken_doc):
        game = game_from_config(chicken_doc)
        ref = build_chicken_game()
        assert np.array_equal(game.utilities, ref.utilities)
        again = game_from_config({"game": game_to_config(game)})
        assert np.array_equal(again.utilities, ref.utilities)

    def test_distribution_round_trip(self, chicken_doc):
        game = game_from_config(chicken_doc)
        dist = distribution_from_config(chicken_doc, game)
        assert np.allclose(dist.probs, chicken_ce().probs, atol=1e-12)
        pairs = distribution_to_config(dist)
        again = distribution_from_config({"distribution": pairs}, game)
        assert np.array_equal(again.probs, dist.probs)

    def test_distribution_validation(self, chicken_doc):
        game = game_from_config(chicken_doc)
        with pytest.raises(ConfigError):
            distribution_from_config({"distribution": [[0, 0.5]]}, game)
        with pytest.raises(ConfigError):
            distribution_from_config({"distribution": [[99, 1.0]]}, game)
        with pytest.raises(ConfigError):
            distribution_from_config({}, game)

    def test_bad_game_sections(self):
        with pytest.raises(ConfigError):
            game_from_config({})
        with pytest.raises(ConfigError):
            game_from_config({"game": {"players": 2, "action_counts": [2, 2],
                                       "utilities": [[1, 2, 3, 4]]}})

    def test_congestion_section(self):
        doc = load_document(recipe_path("routing-toy-fig2.yaml"))
        game = game_from_config(doc)
        assert game.num_players == 3
        assert game.action_counts == (2, 2, 2)
        assert game.utilities.min() >= 0

    def test_congestion_section_validation(self):
        with pytest.raises(ConfigError):
            game_from_config({"game": {"kind": "congestion", "nodes": 2}})


class TestAttacks:
    def test_kinds(self, chicken_family):
        tilted = attack_from_config(
            {"kind": "tilted", "theta": 0.09}, chicken_family, 0.5
        )
        assert tilted.meets_epsilon
        symbolic = attack_from_config(
            {"kind": "tilted", "theta": "min"}, chicken_family, 0.5
        )
        assert symbolic.label == "theta_min"
        explicit = attack_from_config(
            {"kind": "explicit", "pmf": [0.9, 0.02, 0.02, 0.02, 0.02, 0.02]},
            chicken_family, 0.5,
        )
        assert explicit.label == "explicit"
        random = attack_from_config(
            {"kind": "random", "seed": 7}, chicken_family, 0.5
        )
        assert random.label == "random(seed=7)"
        with pytest.raises(ConfigError):
            attack_from_config({"kind": "mystery"}, chicken_family, 0.5)

    def test_start_laws(self, chicken_family):
        fixed = attack_from_config(
            {"kind": "tilted", "theta": 0.09, "start": {"fixed": 10}},
            chicken_family, 0.5,
        )
        assert fixed.start.t == 10
        never = attack_from_config(
            {"kind": "tilted", "theta": 0.09, "start": "never"},
            chicken_family, 0.5,
        )
        assert never.start.kind == "never"
        adaptive = attack_from_config(
            {"kind": "tilted", "theta": 0.09, "start": {"adaptive": 0.01}},
            chicken_family, 0.5,
        )
        assert adaptive.start.p == 0.01
        with pytest.raises(ConfigError):
            attack_from_config(
                {"kind": "tilted", "theta": 0.09, "start": "noon"},
                chicken_family, 0.5,
            )


class TestDigest:
    def test_stable_under_key_reordering(self):
        a = {"x": 1, "y": {"a": 2, "b": 3}}
        b = {"y": {"b": 3, "a": 2}, "x": 1}
        assert config_digest(a) == config_digest(b)

    def test_changes_with_content(self):
        assert config_digest({"x": 1}) != config_digest({"x": 2})


class TestWriteDistribution:
    def test_extra_keys_carried(self, tmp_path):
        game = build_chicken_game()
        path = tmp_path / "dist.yaml"
        write_distribution_file(path, game, chicken_ce(),
                                {"epsilon": 0.5, "alpha_grid": [0.01]})
        doc = load_document(path)
        assert doc["epsilon"] == 0.5
        game_from_config(doc)
        distribution_from_config(doc, game)


class TestCli:
    def setup_method(self):
        self.runner = CliRunner()

    def test_verify_pass(self):
        result = self.runner.invoke(main, ["verify", str(recipe_path("chicken-fig1.yaml"))])
        assert result.exit_code == 0
        assert "ce PASS" in result.output

    def test_verify_fail(self):
        result = self.runner.invoke(
            main, ["verify", str(recipe_path("chicken-uniform.yaml"))]
        )
        assert result.exit_code == 1
        assert "ce FAIL" in result.output

    def test_verify_missing_file(self):
        result = self.runner.invoke(main, ["verify", "/does/not/exist.yaml"])
        assert result.exit_code == 2

    def test_tilt_theta_min_and_monotone_columns(self, tmp_path):
        out = tmp_path / "tilt.csv"
        result = self.runner.invoke(main, [
            "tilt", str(recipe_path("chicken-fig1.yaml")),
            "--epsilon", "0.5", "--theta-grid", "0.02:2.0:20",
            "-o", str(out),
        ])
        assert result.exit_code == 0
        assert "theta_min = 0.0706" in result.output
        rows = np.loadtxt(out, delimiter=",", skiprows=1)
        assert np.all(np.diff(rows[:, 1]) < 0)  # mean decreasing
        assert np.all(np.diff(rows[:, 2]) > 0)  # divergence increasing
        assert np.all(np.diff(rows[:, 3]) < 0)  # efficiency decreasing

    def test_tilt_infeasible_epsilon(self):
        result = self.runner.invoke(main, [
            "tilt", str(recipe_path("chicken-fig1.yaml")), "--epsilon", "9.0",
        ])
        assert result.exit_code == 3
        assert "infeasible" in result.output

    def test_sweep_writes_csv_and_manifest(self, tmp_path):
        result = self.runner.invoke(main, [
            "sweep", str(recipe_path("chicken-fig1.yaml")),
            "-o", str(tmp_path), "--episodes", "20", "--horizon", "2000",
        ])
        assert result.exit_code == 0, result.output
        csv_text = (tmp_path / "sweep.csv").read_text()
        assert csv_text.startswith("attack_label,alpha,mu,")
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["master_seed"] == 20240501
        assert manifest["wall_time"] > 0
        assert str(tmp_path / "sweep.csv") in manifest["outputs"]

    def test_sweep_flag_overrides_change_digest(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out, horizon in ((a, "2000"), (b, "2500")):
            result = self.runner.invoke(main, [
                "sweep", str(recipe_path("chicken-fig1.yaml")),
                "-o", str(out), "--episodes", "10", "--horizon", horizon,
            ])
            assert result.exit_code == 0, result.output
        da = json.loads((a / "manifest.json").read_text())["config_digest"]
        db = json.loads((b / "manifest.json").read_text())["config_digest"]
        assert da != db

    def test_sweep_rerun_byte_identical(self, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            result = self.runner.invoke(main, [
                "sweep", str(recipe_path("chicken-fig1.yaml")),
                "-o", str(out), "--episodes", "20", "--horizon", "2000",
            ])
            assert result.exit_code == 0, result.output
            outs.append((out / "sweep.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_learn_then_verify_round_trip(self, tmp_path):
        config = tmp_path / "learn.yaml"
        doc = {
            "game": {
                "players": 2,
                "action_counts": [3, 3],
                "utilities": [
                    [0, 6, 9, 1, 5, 4, 3, 2, 7],
                    [0, 1, 3, 6, 5, 2, 9, 4, 7],
                ],
            },
            "rounds": 30_000,
            "mode": "internal",
            "seed": 0,
        }
        config.write_text(yaml.safe_dump(doc))
        result = self.runner.invoke(main, ["learn", str(config), "-o", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "final avg regret" in result.output
        dist_file = tmp_path / "learned_distribution.yaml"
        verify = self.runner.invoke(
            main, ["verify", str(dist_file), "--tolerance", "0.1"]
        )
        assert verify.exit_code == 0, verify.output
        trace = (tmp_path / "regret_trace.csv").read_text().splitlines()
        assert trace[0] == "round,player,avg_regret"
        assert len(trace) == 1 + 30_000 * 2

    def test_learn_deterministic(self, tmp_path):
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = self.runner.invoke(main, [
                "learn", str(recipe_path("routing-toy-fig2.yaml")),
                "-o", str(out), "--rounds", "2000",
            ])
            assert result.exit_code == 0, result.output
            blobs.append((out / "learned_distribution.yaml").read_bytes())
        assert blobs[0] == blobs[1]

    def test_bad_config_exit_code(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("game: {players: 2}\n")
        result = self.runner.invoke(main, ["verify", str(p)])
        assert result.exit_code == 2
