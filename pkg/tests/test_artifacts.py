"""Artifact writing and reading."""

import os
import zlib

import numpy as np
import pytest

from gsdual import artifacts, utils
from gsdual.errors import StageDependencyError
from gsdual.utils import spawn_rng


class TestJson:

    def test_canonical_text(self, tmp_path):
        out = str(tmp_path / "out")
        path = artifacts.write_json(out, "design", {"b": np.float64(1.5), "a": np.arange(2)})
        text = open(path, encoding="utf-8").read()
        assert text == '{\n  "a": [\n    0,\n    1\n  ],\n  "b": 1.5\n}\n'

    def test_no_tmp_files_left(self, tmp_path):
        out = str(tmp_path)
        artifacts.write_json(out, "estimate", {"x": 1})
        assert os.listdir(out) == ["estimate.json"]
        assert utils.temp_files == []

    def test_missing_artifact_names_stage(self, tmp_path):
        with pytest.raises(StageDependencyError, match="'estimate' stage"):
            artifacts.read_json(str(tmp_path), "initial_data")

    def test_unreadable_artifact(self, tmp_path):
        (tmp_path / "design.json").write_text("{not json")
        with pytest.raises(StageDependencyError, match="'design' stage"):
            artifacts.read_json(str(tmp_path), "design")

    def test_shared_files_name_no_single_stage(self, tmp_path):
        with pytest.raises(StageDependencyError) as info:
            artifacts.read_json(str(tmp_path), "report")
        assert "every stage" in str(info.value)
        assert "'estimate' stage" not in str(info.value)

    def test_unreadable_report_blocks_merge(self, tmp_path):
        (tmp_path / "report.json").write_text("{not json")
        with pytest.raises(StageDependencyError, match="every stage"):
            artifacts.merge_report(str(tmp_path), "design", {"cost": 1.0})

    def test_merge_report(self, tmp_path):
        out = str(tmp_path)
        artifacts.merge_report(out, "design", {"cost": 1.0})
        artifacts.merge_report(out, "exploration", {"K_new": [[0.1]]})
        artifacts.merge_report(out, "design", {"cost": 2.0})
        report = artifacts.read_json(out, "report")
        assert report == {"design": {"cost": 2.0}, "exploration": {"K_new": [[0.1]]}}

    def test_timings_kept_apart(self, tmp_path):
        out = str(tmp_path)
        artifacts.record_timing(out, "estimate", 0.25)
        artifacts.record_timing(out, "design", 1.5)
        assert artifacts.read_json(out, "timings") == {"estimate": 0.25, "design": 1.5}
        assert not os.path.exists(artifacts.artifact_path(out, "report"))


class TestCsv:

    def test_float_repr_and_blanks(self, tmp_path):
        path = artifacts.write_csv(str(tmp_path), "solver_status", ["index", "objective", "status"],
                                   [[0, 0.1, "Optimal"], [1, "", "Infeasible"]])
        lines = open(path, encoding="utf-8").read().splitlines()
        assert lines == ["index,objective,status", "0,0.1,Optimal", "1,,Infeasible"]


class TestRandomStreams:

    def test_same_key_same_stream(self):
        assert spawn_rng(5, "explore", 2).random() == spawn_rng(5, "explore", 2).random()

    def test_keys_separate_streams(self):
        base = spawn_rng(5, "explore", 0).random()
        assert spawn_rng(5, "initial", 0).random() != base
        assert spawn_rng(5, "explore", 1).random() != base
        assert spawn_rng(6, "explore", 0).random() != base

    def test_stream_key_is_stable(self):
        assert utils.stream_key("initial") == zlib.crc32(b"initial")
        assert utils.stream_key("initial") != utils.stream_key("explore")
