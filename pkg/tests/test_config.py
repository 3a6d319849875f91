"""Scenario loading, validation and CLI overrides."""

import numpy as np
import pytest

from gsdual.config import (apply_overrides, bundled_scenario, load_config, parse_config,
                           parse_grid_override, scenario_names)
from gsdual.errors import ConfigError


def minimal(**tables):
    data = {
        "system": {"A": [[0.9]], "B": [[1.0]], "sigma_w": 0.1},
        "performance": {"C": [[1.0], [0.0]], "D": [[0.0], [1.0]], "gamma": 5.0},
        "exploration": {"N0": 50, "T": 100},
        "confidence": {"delta": 0.1},
    }
    for name, table in tables.items():
        data[name] = {**data.get(name, {}), **table}
    return data


class TestBundledScenario:

    def test_loads(self):
        cfg = load_config(bundled_scenario())
        assert (cfg.n_x, cfg.n_u) == (2, 1)
        assert cfg.gamma == 20.0
        assert cfg.grid.size == 54
        np.testing.assert_allclose(cfg.perf.R_p, np.eye(3) / 20.0)

    def test_listed(self):
        assert "desk.toml" in scenario_names()

    def test_echo_is_plain_data(self):
        echo = load_config(bundled_scenario()).to_dict()
        assert echo["confidence"]["delta"] == 0.1
        assert echo["exploration"]["x0"] == [0.0, 0.0]


class TestValidation:

    def test_defaults(self):
        cfg = parse_config(minimal())
        np.testing.assert_array_equal(cfg.Q, np.eye(1))
        assert cfg.grid.mode == "grid"
        assert cfg.seed == 0
        assert cfg.schedule is True

    def test_delta_out_of_range_names_field(self):
        with pytest.raises(ConfigError) as info:
            parse_config(minimal(confidence={"delta": 1.5}))
        assert info.value.field == "confidence.delta"

    def test_missing_table(self):
        data = minimal()
        del data["confidence"]
        with pytest.raises(ConfigError) as info:
            parse_config(data)
        assert info.value.field == "confidence"

    @pytest.mark.parametrize("tables,field", [
        ({"system": {"A": [[1.0, 0.0]]}}, "system.A"),
        ({"system": {"sigma_w": 0.0}}, "system.sigma_w"),
        ({"exploration": {"N0": 0}}, "exploration.N0"),
        ({"exploration": {"T": 2.5}}, "exploration.T"),
        ({"exploration": {"R": [[0.0]]}}, "exploration.R"),
        ({"grid": {"eps": [1.0, -1.0]}}, "grid.eps"),
        ({"grid": {"mode": "random"}}, "grid.mode"),
        ({"validation": {"horizon": 1}}, "validation.horizon"),
        ({"run": {"jobs": 0}}, "run.jobs"),
        ({"design": {"schedule": "no"}}, "design.schedule"),
        ({"validation": {"coverage_trials": 20}}, "validation.coverage_trials"),
    ])
    def test_invalid_fields(self, tables, field):
        with pytest.raises(ConfigError) as info:
            parse_config(minimal(**tables))
        assert info.value.field == field

    def test_gamma_and_multiplier_exclusive(self):
        with pytest.raises(ConfigError):
            parse_config(minimal(performance={"Q_p": [[-1.0]], "R_p": [[1.0, 0.0], [0.0, 1.0]]}))

    def test_general_multiplier(self):
        data = minimal()
        data["performance"] = {"C": [[1.0]], "D": [[0.0]], "Q_p": [[-2.0]], "S_p": [[0.5]], "R_p": [[1.0]]}
        cfg = parse_config(data)
        assert cfg.gamma is None
        np.testing.assert_array_equal(cfg.perf.S_p, [[0.5]])

    def test_budget_needs_gamma(self):
        data = minimal()
        data["performance"] = {"C": [[1.0]], "D": [[0.0]], "Q_p": [[-2.0]], "R_p": [[1.0]],
                               "gamma_budget": 3.0}
        with pytest.raises(ConfigError) as info:
            parse_config(data)
        assert info.value.field == "performance.gamma_budget"

    def test_unscheduled_design(self):
        cfg = parse_config(minimal(design={"schedule": False}))
        assert cfg.schedule is False
        assert cfg.to_dict()["design"] == {"schedule": False}

    def test_flat_b_is_a_column(self):
        cfg = parse_config(minimal(system={"A": [[0.9, 0.0], [0.0, 0.5]], "B": [0.0, 1.0]},
                                   performance={"C": [[1.0, 0.0]], "D": [[0.0]]}))
        assert cfg.system.B.shape == (2, 1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(str(tmp_path / "none.toml"))
        assert info.value.field == "--config"

    def test_not_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[system\nA = 1\n")
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestOverrides:

    def test_grid_override_parsing(self):
        assert parse_grid_override("lambda_s=0.1,1,10") == ("lambda_s", (0.1, 1.0, 10.0))

    @pytest.mark.parametrize("text", ["lambda_s", "gamma=1", "eps=a,b", "eps=0,1", "eps="])
    def test_bad_grid_override(self, text):
        with pytest.raises(ConfigError):
            parse_grid_override(text)

    def test_flags_win_over_file(self):
        cfg = parse_config(minimal(run={"seed": 3, "jobs": 2}))
        cfg = apply_overrides(cfg, seed=11, out="elsewhere", jobs=4, grid_overrides=["eps=0.5", "t_e=1,2"])
        assert (cfg.seed, cfg.out, cfg.jobs) == (11, "elsewhere", 4)
        assert cfg.grid.eps == (0.5,)
        assert cfg.grid.t_e == (1.0, 2.0)

    def test_no_changes_keeps_object(self):
        cfg = parse_config(minimal())
        assert apply_overrides(cfg) is cfg

    def test_negative_seed(self):
        with pytest.raises(ConfigError):
            apply_overrides(parse_config(minimal()), seed=-1)

    def test_no_schedule_flag(self):
        cfg = apply_overrides(parse_config(minimal()), schedule=False)
        assert cfg.schedule is False
        assert apply_overrides(cfg, schedule=None).schedule is False
