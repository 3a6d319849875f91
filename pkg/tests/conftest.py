"""Shared fixtures: generators, small systems, the bundled scenario."""

from dataclasses import replace

import cvxpy as cp
import numpy as np
import pytest

from gsdual.config import bundled_scenario, load_config
from gsdual.constants import SOLVER_PREFERENCE
from gsdual.plant import LtiSystem, PerfChannel

HAVE_SOLVER = any(name in cp.installed_solvers() for name in SOLVER_PREFERENCE)

requires_solver = pytest.mark.skipif(not HAVE_SOLVER, reason="no SDP backend installed for CVXPY")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scalar_system():
    return LtiSystem(A=[[0.9]], B=[[1.0]], sigma_w=0.1)


@pytest.fixture
def desk_system():
    return LtiSystem(A=[[0.9, 0.2], [0.0, 0.7]], B=[[0.0], [1.0]], sigma_w=0.1)


@pytest.fixture
def desk_perf():
    C = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    D = np.array([[0.0], [0.0], [1.0]])
    return PerfChannel.l2_gain(20.0, C, D)


@pytest.fixture
def desk_cfg(tmp_path):
    cfg = load_config(bundled_scenario())
    return replace(cfg, out=str(tmp_path / "out"))


def random_pd(rng, n, floor=0.1):
    a = rng.standard_normal((n, n))
    return a @ a.T + floor * np.eye(n)
