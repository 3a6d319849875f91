"""Command-line surface: flags, exit codes and the stage pipeline."""

import json
import os

import pytest

from conftest import requires_solver
from gsdual.cli import exit_code_for, main
from gsdual.config import bundled_scenario
from gsdual.constants import ARTIFACTS, __version__
from gsdual.errors import (AllInfeasible, CertificationFailed, ConfigError, GsdualError, IllPosed, Infeasible,
                           NotPsd, PerformanceViolation, StageDependencyError, StageError)


def desk_toml(tmp_path, **replacements):
    text = open(bundled_scenario(), encoding="utf-8").read()
    for old, new in replacements.items():
        text = text.replace(old, new)
    path = tmp_path / "scenario.toml"
    path.write_text(text)
    return str(path)


class TestFlags:

    def test_version(self, capsys):
        main(["--version"])
        assert capsys.readouterr().out.strip() == f"gsdual version {__version__}"

    def test_help(self, capsys):
        main(["--help"])
        out = capsys.readouterr().out
        assert "Usage:" in out
        assert "--grid-override" in out
        assert "--no-schedule" in out

    def test_unknown_stage(self):
        with pytest.raises(SystemExit) as info:
            main(["--stage", "deploy"])
        assert info.value.code == 2


class TestExitCodes:

    @pytest.mark.parametrize("exc,code", [
        (ConfigError("confidence.delta", "bad"), 2),
        (StageDependencyError("run the 'estimate' stage first"), 2),
        (Infeasible("no point"), 3),
        (AllInfeasible("grid", []), 3),
        (IllPosed("cond"), 4),
        (CertificationFailed("margin"), 4),
        (PerformanceViolation("ratio"), 4),
        (NotPsd("D0"), 5),
        (GsdualError("other"), 1),
        (RuntimeError("boom"), 1),
    ])
    def test_families(self, exc, code):
        assert exit_code_for(exc) == code

    def test_stage_wrapper_is_unwrapped(self):
        assert exit_code_for(StageError("design", Infeasible("no point"))) == 3


class TestConfigErrors:

    def test_bad_delta(self, tmp_path, capsys):
        path = desk_toml(tmp_path, **{"delta = 0.1": "delta = 1.5"})
        with pytest.raises(SystemExit) as info:
            main(["--config", path, "--out", str(tmp_path / "out")])
        assert info.value.code == 2
        assert "confidence.delta" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["--config", str(tmp_path / "absent.toml")])
        assert info.value.code == 2

    def test_bad_grid_override(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["--out", str(tmp_path), "--grid-override", "mu=1,2"])
        assert info.value.code == 2


@requires_solver
class TestStages:

    def test_design_without_estimate(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--stage", "design", "--out", str(tmp_path / "out")])
        assert info.value.code == 2
        assert "'estimate' stage" in capsys.readouterr().err

    def test_estimate_stage(self, tmp_path):
        out = tmp_path / "out"
        with pytest.raises(SystemExit) as info:
            main(["--stage", "estimate", "--out", str(out), "--seed", "3"])
        assert info.value.code == 0
        for key in ("estimate", "initial_data", "initial_csv", "report", "timings"):
            assert (out / ARTIFACTS[key]).is_file()
        report = json.loads((out / ARTIFACTS["report"]).read_text())
        assert report["seed"] == 3
        assert "estimate" in json.loads((out / ARTIFACTS["timings"]).read_text())
        assert not [name for name in os.listdir(out) if name.endswith(".tmp")]

    def test_estimate_is_reproducible(self, tmp_path):
        texts = []
        for name in ("a", "b"):
            with pytest.raises(SystemExit):
                main(["--stage", "estimate", "--out", str(tmp_path / name), "--seed", "4"])
            texts.append((tmp_path / name / ARTIFACTS["estimate"]).read_text())
        assert texts[0] == texts[1]

    @pytest.mark.slow
    def test_full_pipeline(self, tmp_path):
        path = desk_toml(tmp_path, **{"n_trials = 200": "n_trials = 20",
                                      "frozen_lmi_samples = 200": "frozen_lmi_samples = 20",
                                      "horizon = 400": "horizon = 200"})
        out = tmp_path / "out"
        with pytest.raises(SystemExit) as info:
            main(["--config", path, "--out", str(out), "--seed", "1",
                  "--grid-override", "eps=1", "--grid-override", "t_e=1"])
        assert info.value.code == 0
        report = json.loads((out / ARTIFACTS["report"]).read_text())
        assert {"config", "initial", "design", "exploration", "validation"} <= set(report)
        assert (out / ARTIFACTS["validation_csv"]).is_file()
        design = json.loads((out / ARTIFACTS["design"]).read_text())
        assert design["schedule"] is True

    @pytest.mark.slow
    def test_full_rerun_is_byte_identical(self, tmp_path):
        path = desk_toml(tmp_path, **{"n_trials = 200": "n_trials = 10",
                                      "frozen_lmi_samples = 200": "frozen_lmi_samples = 10",
                                      "horizon = 400": "horizon = 100"})
        outs = [tmp_path / "first", tmp_path / "second"]
        for out in outs:
            with pytest.raises(SystemExit) as info:
                main(["--config", path, "--out", str(out), "--seed", "6",
                      "--grid-override", "eps=1", "--grid-override", "t_e=1"])
            assert info.value.code == 0
        names = sorted(os.listdir(outs[0]))
        assert names == sorted(os.listdir(outs[1]))
        compared = [name for name in names if name != ARTIFACTS["timings"]]
        assert ARTIFACTS["report"] in compared and ARTIFACTS["validation_csv"] in compared
        for name in compared:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
