"""
Ground-truth LTI simulation and performance-channel evaluation.

    x_{k+1} = A x_k + B u_k + w_k,   w_k ~ N(0, sigma_w^2 I)
    z_k     = C x_k + D u_k + D_w w_k

Only `Simulator` holds the true (A, B); the design pipeline talks to it
through `Simulator.run` and never reads the matrices.

Types:
    LtiSystem    - (A, B, sigma_w)
    PerfChannel  - (C, D, D_w, Q_p, S_p, R_p) quadratic performance channel
    Policy       - u = K x + e, e ~ N(0, Sigma), optionally gain-scheduled
    Trajectory   - states, inputs, noises, perf outputs of one run
    Simulator    - owner of the true system

Functions:
    simulate(sys, policy, x0, horizon, rng, perf=None, disturbances=None) -> Trajectory
    perf_output(pc, x, u, w) -> np.ndarray
    quad_perf_lhs(pc, traj) -> (s_wz, s_ww)
    empirical_l2_gain(pc, trajectories) -> float
    tail_energy_ratio(traj) -> float
    trajectory_rows(traj) -> (header, rows)
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from gsdual.errors import DimensionMismatch, ShapeMismatch, SingularMatrix, ZeroDisturbance
from gsdual.matrix_kit import gaussian_sample, is_definite, symmetrize


def _mat(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class LtiSystem:
    """x+ = A x + B u + w with w ~ N(0, sigma_w^2 I)."""
    A: np.ndarray
    B: np.ndarray
    sigma_w: float

    def __post_init__(self) -> None:
        A, B = _mat(self.A, "A"), _mat(self.B, "B")
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"inconsistent shapes A{A.shape}, B{B.shape}")
        if not self.sigma_w > 0:
            raise DimensionMismatch("sigma_w must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sigma_w", float(self.sigma_w))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class PerfChannel:
    """
    Performance output z = C x + D u + D_w w with quadratic performance index

        sum_k [w; z]^T [[Q_p, S_p], [S_p^T, R_p]] [w; z] <= -eps sum_k w^T w.
    """
    C: np.ndarray
    D: np.ndarray
    D_w: np.ndarray
    Q_p: np.ndarray
    S_p: np.ndarray
    R_p: np.ndarray

    def __post_init__(self) -> None:
        C, D, D_w = _mat(self.C, "C"), _mat(self.D, "D"), _mat(self.D_w, "D_w")
        Q_p, R_p = symmetrize(self.Q_p), symmetrize(self.R_p)
        S_p = _mat(self.S_p, "S_p")
        n_z, n_x = C.shape
        if D.shape[0] != n_z or D_w.shape != (n_z, n_x):
            raise DimensionMismatch(f"inconsistent C{C.shape}, D{D.shape}, D_w{D_w.shape}")
        if Q_p.shape != (n_x, n_x) or S_p.shape != (n_x, n_z) or R_p.shape != (n_z, n_z):
            raise DimensionMismatch(f"inconsistent Q_p{Q_p.shape}, S_p{S_p.shape}, R_p{R_p.shape}")
        if not is_definite(R_p, "pos", 0.0):
            raise SingularMatrix("R_p must be positive definite")
        for name, value in (("C", C), ("D", D), ("D_w", D_w), ("Q_p", Q_p), ("S_p", S_p), ("R_p", R_p)):
            object.__setattr__(self, name, value)

    @classmethod
    def l2_gain(cls, gamma: float, C, D, D_w=None) -> "PerfChannel":
        """L2-gain gamma: (Q_p, S_p, R_p) = (-gamma I, 0, I / gamma)."""
        C, D = _mat(C, "C"), _mat(D, "D")
        n_z, n_x = C.shape
        D_w = np.zeros((n_z, n_x)) if D_w is None else D_w
        return cls(C=C, D=D, D_w=D_w, Q_p=-gamma * np.eye(n_x),
                   S_p=np.zeros((n_x, n_z)), R_p=np.eye(n_z) / gamma)

    @property
    def n_z(self) -> int:
        return self.C.shape[0]

    @property
    def multiplier(self) -> np.ndarray:
        """[[Q_p, S_p], [S_p^T, R_p]]"""
        return np.block([[self.Q_p, self.S_p], [self.S_p.T, self.R_p]])


@dataclass(frozen=True)
class Policy:
    """
    State feedback u = K x + K_s w^s + e with e ~ N(0, Sigma).

    When K_s and Delta_s are given the scheduling channel w^s = Delta_s [x; u]
    is resolved into the explicit gain (I - K_s Delta_B)^{-1} (K + K_s Delta_A).
    """
    K: np.ndarray
    Sigma: Optional[np.ndarray] = None
    K_s: Optional[np.ndarray] = None
    Delta_s: Optional[np.ndarray] = None

    def gain(self) -> np.ndarray:
        K = _mat(self.K, "K")
        if self.K_s is None or self.Delta_s is None:
            return K
        n_x = K.shape[1]
        K_s, Delta = _mat(self.K_s, "K_s"), _mat(self.Delta_s, "Delta_s")
        lhs = np.eye(K.shape[0]) - K_s @ Delta[:, n_x:]
        if np.linalg.cond(lhs) > 1e12:
            raise SingularMatrix("scheduled policy is ill-posed: I - K_s Delta_B is singular")
        return np.linalg.solve(lhs, K + K_s @ Delta[:, :n_x])


@dataclass(frozen=True)
class Trajectory:
    """
    One simulated run; |states| = horizon + 1, all other sequences = horizon.

    Row k of `states` is x_k, row k of `inputs` is u_k, etc.
    """
    states: np.ndarray
    inputs: np.ndarray
    noises: np.ndarray
    perf_outputs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self) -> None:
        horizon = self.inputs.shape[0]
        if self.states.shape[0] != horizon + 1 or self.noises.shape[0] != horizon:
            raise DimensionMismatch("trajectory lengths are inconsistent")
        if self.perf_outputs.size and self.perf_outputs.shape[0] != horizon:
            raise DimensionMismatch("perf output length differs from horizon")

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1].copy()

    def to_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "inputs": self.inputs.tolist(),
            "noises": self.noises.tolist(),
            "perf_outputs": self.perf_outputs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        n_x = len(data["states"][0])
        horizon = len(data["inputs"])
        inputs = np.asarray(data["inputs"], dtype=float).reshape(horizon, -1)
        noises = np.asarray(data["noises"], dtype=float).reshape(horizon, n_x)
        perf = np.asarray(data.get("perf_outputs") or [], dtype=float)
        perf = perf.reshape(horizon, -1) if perf.size else np.zeros((0, 0))
        return cls(states=np.asarray(data["states"], dtype=float), inputs=inputs,
                   noises=noises, perf_outputs=perf)


def perf_output(pc: PerfChannel, x, u, w) -> np.ndarray:
    """z = C x + D u + D_w w."""
    x, u, w = (np.asarray(v, dtype=float).reshape(-1) for v in (x, u, w))
    if x.size != pc.C.shape[1] or u.size != pc.D.shape[1] or w.size != pc.D_w.shape[1]:
        raise DimensionMismatch(f"x{x.shape}, u{u.shape}, w{w.shape} do not match the channel")
    return pc.C @ x + pc.D @ u + pc.D_w @ w


def simulate(sys: LtiSystem, policy: Policy, x0, horizon: int, rng: np.random.Generator,
             perf: Optional[PerfChannel] = None,
             disturbances: Optional[np.ndarray] = None) -> Trajectory:
    """
    Simulate x+ = A x + B u + w under u = K x + e.

    Args:
        sys: Plant to simulate
        policy: Feedback gain, excitation covariance and optional schedule
        x0: Initial state
        horizon: Number of steps (>= 1)
        rng: Generator for process noise and excitation
        perf: Optional performance channel; fills Trajectory.perf_outputs
        disturbances: Optional (horizon, n_x) array replacing the sampled w_k

    Returns:
        Trajectory with the realized w_k stored for replay

    Raises:
        DimensionMismatch: policy, x0 or disturbances do not fit the plant
    """
    if horizon < 1:
        raise DimensionMismatch("horizon must be at least 1")
    K = policy.gain()
    if K.shape != (sys.n_u, sys.n_x):
        raise DimensionMismatch(f"gain has shape {K.shape}, expected {(sys.n_u, sys.n_x)}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != sys.n_x:
        raise DimensionMismatch(f"x0 has {x.size} entries, expected {sys.n_x}")
    if disturbances is not None:
        disturbances = np.asarray(disturbances, dtype=float).reshape(horizon, sys.n_x)
    Sigma = None if policy.Sigma is None else symmetrize(policy.Sigma)

    states = np.zeros((horizon + 1, sys.n_x))
    inputs = np.zeros((horizon, sys.n_u))
    noises = np.zeros((horizon, sys.n_x))
    outputs = np.zeros((horizon, perf.n_z)) if perf is not None else np.zeros((0, 0))
    states[0] = x
    for k in range(horizon):
        u = K @ x
        if Sigma is not None:
            u = u + gaussian_sample(Sigma, rng)
        if disturbances is None:
            w = sys.sigma_w * rng.standard_normal(sys.n_x)
        else:
            w = disturbances[k]
        if perf is not None:
            outputs[k] = perf_output(perf, x, u, w)
        x = sys.A @ x + sys.B @ u + w
        states[k + 1], inputs[k], noises[k] = x, u, w
    return Trajectory(states=states, inputs=inputs, noises=noises, perf_outputs=outputs)


def quad_perf_lhs(pc: PerfChannel, traj: Trajectory) -> Tuple[float, float]:
    """
    Left-hand side of the quadratic performance inequality on one trajectory.

    Returns:
        (s_wz, s_ww) with s_wz = sum_k [w_k; z_k]^T P [w_k; z_k], s_ww = sum_k |w_k|^2.
        The caller checks s_wz <= -eps * s_ww.
    """
    if traj.horizon == 0 or traj.perf_outputs.size == 0:
        raise DimensionMismatch("trajectory has no performance outputs")
    wz = np.hstack([traj.noises, traj.perf_outputs])
    s_wz = float(np.einsum("ki,ij,kj->", wz, pc.multiplier, wz))
    s_ww = float(np.sum(traj.noises ** 2))
    return s_wz, s_ww


def empirical_l2_gain(pc: PerfChannel, trajectories: Iterable[Trajectory]) -> float:
    """
    Largest observed sqrt(sum |z|^2 / sum |w|^2) over the trajectories.

    Raises:
        ZeroDisturbance: no trajectory carries disturbance energy
    """
    ratios = []
    for traj in trajectories:
        energy_w = float(np.sum(traj.noises ** 2))
        if energy_w > 0:
            ratios.append(np.sqrt(float(np.sum(traj.perf_outputs ** 2)) / energy_w))
    if not ratios:
        raise ZeroDisturbance("no trajectory with nonzero disturbance energy")
    return float(max(ratios))


def tail_energy_ratio(traj: Trajectory, tail_fraction: float = 0.1) -> float:
    """Share of output energy in the last `tail_fraction` of the run (truncation check)."""
    energy = np.sum(traj.perf_outputs ** 2, axis=1)
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    start = int(np.floor((1.0 - tail_fraction) * traj.horizon))
    return float(np.sum(energy[start:])) / total


def trajectory_rows(traj: Trajectory) -> Tuple[List[str], List[list]]:
    """
    CSV header and rows: k, x[0..], u[0..], w[0..], z[0..].

    The last row carries the terminal state only.
    """
    n_x, n_u = traj.states.shape[1], traj.inputs.shape[1]
    n_z = traj.perf_outputs.shape[1] if traj.perf_outputs.size else 0
    header = (["k"] + [f"x{i}" for i in range(n_x)] + [f"u{i}" for i in range(n_u)]
              + [f"w{i}" for i in range(n_x)] + [f"z{i}" for i in range(n_z)])
    rows = []
    for k in range(traj.horizon):
        z = list(traj.perf_outputs[k]) if n_z else []
        rows.append([k] + list(traj.states[k]) + list(traj.inputs[k]) + list(traj.noises[k]) + z)
    rows.append([traj.horizon] + list(traj.states[-1]) + [""] * (n_u + n_x + n_z))
    return header, rows


class Simulator:
    """
    Owner of the true system.

    The pipeline only calls `run`; validation code may read `truth` to check
    the probabilistic guarantees after the fact.
    """

    def __init__(self, system: LtiSystem):
        self._system = system

    @property
    def n_x(self) -> int:
        return self._system.n_x

    @property
    def n_u(self) -> int:
        return self._system.n_u

    @property
    def sigma_w(self) -> float:
        return self._system.sigma_w

    @property
    def truth(self) -> LtiSystem:
        return self._system

    def run(self, policy: Policy, x0, horizon: int, rng: np.random.Generator,
            perf: Optional[PerfChannel] = None,
            disturbances: Optional[np.ndarray] = None) -> Trajectory:
        return simulate(self._system, policy, x0, horizon, rng, perf=perf, disturbances=disturbances)

    def random_exploration(self, input_std: float, x0, horizon: int,
                           rng: np.random.Generator) -> Trajectory:
        """Open-loop white-noise excitation u_k ~ N(0, input_std^2 I)."""
        policy = Policy(K=np.zeros((self.n_u, self.n_x)), Sigma=input_std ** 2 * np.eye(self.n_u))
        return self.run(policy, x0, horizon, rng)


def stack_trajectories(trajectories: Sequence[Trajectory]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Regressors [x_k; u_k] and successors x_{k+1} of every pair that has one.

    Returns:
        (Phi, X_next) with shapes (N, n_x + n_u) and (N, n_x)
    """
    phis, nexts = [], []
    for traj in trajectories:
        phis.append(np.hstack([traj.states[:-1], traj.inputs]))
        nexts.append(traj.states[1:])
    return np.vstack(phis), np.vstack(nexts)
