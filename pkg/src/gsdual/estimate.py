"""
Least-squares identification and the data-information matrix.

Given pairs (x_k, u_k, x_{k+1}) the least-squares estimate is

    (A_hat, B_hat) = argmin sum_k |x_{k+1} - A x_k - B u_k|^2

and the credibility region holding the truth with probability 1 - delta is

    Theta = {(A, B): E^T D E <= I},   E = [(A_hat - A)^T; (B_hat - B)^T],
    D = (sigma_w^2 c_delta)^{-1} sum_k [x_k; u_k][x_k; u_k]^T,

with c_delta the (1 - delta)-quantile of chi^2 with n_x^2 + n_x n_u dof.

Types:
    Estimate    - (A_hat, B_hat)
    InfoMatrix  - D with the (c_delta, sigma_w, sample_count) it was built from

Functions:
    least_squares(data) -> Estimate
    chi2_quantile(dof, delta) -> float
    confidence_dof(n_x, n_u) -> int
    info_matrix(data, sigma_w, c_delta) -> InfoMatrix
    in_credibility_region(A, B, est, info) -> bool
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import optimize, special

from gsdual.constants import REGION_TOL
from gsdual.errors import DomainError, RankDeficient, ShapeMismatch, SingularInfo
from gsdual.matrix_kit import eig_extremes, is_definite, symmetrize
from gsdual.plant import Trajectory, stack_trajectories
from gsdual.utils import debug_print

DataSet = Union[Trajectory, Sequence[Trajectory]]


def _as_list(data: DataSet) -> list:
    if isinstance(data, Trajectory):
        return [data]
    return list(data)


@dataclass(frozen=True)
class Estimate:
    A_hat: np.ndarray
    B_hat: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        """[A_hat, B_hat]"""
        return np.hstack([self.A_hat, self.B_hat])

    def to_dict(self) -> dict:
        return {"A_hat": self.A_hat.tolist(), "B_hat": self.B_hat.tolist(),
                "n_x": self.A_hat.shape[0], "n_u": self.B_hat.shape[1]}

    @classmethod
    def from_dict(cls, data: dict) -> "Estimate":
        n_x, n_u = int(data["n_x"]), int(data["n_u"])
        return cls(A_hat=np.asarray(data["A_hat"], dtype=float).reshape(n_x, n_x),
                   B_hat=np.asarray(data["B_hat"], dtype=float).reshape(n_x, n_u))


@dataclass(frozen=True)
class InfoMatrix:
    """D = (sigma_w^2 c_delta)^{-1} sum_k [x; u][x; u]^T over `sample_count` pairs."""
    D: np.ndarray
    c_delta: float
    sigma_w: float
    sample_count: int

    def __add__(self, other: "InfoMatrix") -> "InfoMatrix":
        if (self.c_delta, self.sigma_w) != (other.c_delta, other.sigma_w):
            raise DomainError("cannot add information matrices built with different sigma_w / c_delta")
        return InfoMatrix(D=self.D + other.D, c_delta=self.c_delta, sigma_w=self.sigma_w,
                          sample_count=self.sample_count + other.sample_count)

    def inverse(self) -> np.ndarray:
        """D^{-1}; requires D > 0."""
        if not is_definite(self.D, "pos", 0.0):
            raise SingularInfo("information matrix is not positive definite")
        return symmetrize(np.linalg.inv(self.D))

    def to_dict(self) -> dict:
        return {"D": self.D.tolist(), "dim": self.D.shape[0], "c_delta": self.c_delta,
                "sigma_w": self.sigma_w, "sample_count": self.sample_count}

    @classmethod
    def from_dict(cls, data: dict) -> "InfoMatrix":
        dim = int(data["dim"])
        return cls(D=np.asarray(data["D"], dtype=float).reshape(dim, dim),
                   c_delta=float(data["c_delta"]), sigma_w=float(data["sigma_w"]),
                   sample_count=int(data["sample_count"]))


def least_squares(data: DataSet) -> Estimate:
    """
    Least-squares estimate of (A, B) from one or several trajectories.

    Solved with an SVD-based solver on the regressor matrix rather than the
    normal equations.

    Raises:
        RankDeficient: fewer than n_x + n_u pairs, or regressors not exciting
    """
    trajectories = _as_list(data)
    if not trajectories:
        raise RankDeficient("no data")
    phi, x_next = stack_trajectories(trajectories)
    n_x = x_next.shape[1]
    n_reg = phi.shape[1]
    if phi.shape[0] < n_reg:
        raise RankDeficient(f"{phi.shape[0]} samples, need at least {n_reg}")
    theta_t, _, rank, svals = np.linalg.lstsq(phi, x_next, rcond=None)
    if rank < n_reg or svals[-1] <= svals[0] * 1e-10:
        raise RankDeficient(f"regressor matrix has rank {rank} < {n_reg}; input not persistently exciting")
    theta = theta_t.T
    debug_print(f"least squares on {phi.shape[0]} samples, smallest singular value {svals[-1]:.3e}")
    return Estimate(A_hat=theta[:, :n_x], B_hat=theta[:, n_x:])


def confidence_dof(n_x: int, n_u: int) -> int:
    """Degrees of freedom n_x^2 + n_x n_u of the credibility region."""
    return n_x * n_x + n_x * n_u


def chi2_quantile(dof: int, delta: float) -> float:
    """
    c_delta such that P(X <= c_delta) = 1 - delta for X ~ chi^2(dof).

    Obtained by inverting the regularized lower incomplete gamma function and
    polishing the result with a bracketing root finder.

    Raises:
        DomainError: delta outside (0, 1) or dof < 1
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if dof < 1:
        raise DomainError(f"dof must be at least 1, got {dof}")
    a = 0.5 * dof
    target = 1.0 - delta
    guess = 2.0 * special.gammaincinv(a, target)

    def residual(q: float) -> float:
        return special.gammainc(a, 0.5 * q) - target

    lo, hi = 0.5 * guess, 2.0 * guess + 1.0
    while residual(lo) > 0:
        lo *= 0.5
    while residual(hi) < 0:
        hi *= 2.0
    return float(optimize.brentq(residual, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))


def info_matrix(data: DataSet, sigma_w: float, c_delta: float) -> InfoMatrix:
    """
    D = (sigma_w^2 c_delta)^{-1} sum_k [x_k; u_k][x_k; u_k]^T.

    Uses every (x_k, u_k) pair that has a successor state. Additive over
    disjoint data sets.
    """
    if sigma_w <= 0 or c_delta <= 0:
        raise DomainError("sigma_w and c_delta must be positive")
    trajectories = _as_list(data)
    if not trajectories:
        raise ShapeMismatch("info_matrix needs at least one trajectory to know the dimension")
    phi, _ = stack_trajectories(trajectories)
    D = symmetrize(phi.T @ phi / (sigma_w ** 2 * c_delta)) if phi.shape[0] else np.zeros((phi.shape[1],) * 2)
    return InfoMatrix(D=D, c_delta=float(c_delta), sigma_w=float(sigma_w), sample_count=phi.shape[0])


def empty_info(n_x: int, n_u: int, sigma_w: float, c_delta: float) -> InfoMatrix:
    """Zero information matrix (no data)."""
    return InfoMatrix(D=np.zeros((n_x + n_u, n_x + n_u)), c_delta=float(c_delta),
                      sigma_w=float(sigma_w), sample_count=0)


def parameter_error(A, B, est: Estimate) -> np.ndarray:
    """E = [(A_hat - A)^T; (B_hat - B)^T], shape (n_x + n_u) x n_x."""
    return np.vstack([(est.A_hat - np.asarray(A, dtype=float)).T,
                      (est.B_hat - np.asarray(B, dtype=float)).T])


def in_credibility_region(A, B, est: Estimate, info: InfoMatrix, tol: float = REGION_TOL) -> bool:
    """
    Whether (A, B) lies in Theta: E^T D E <= I (closed set, slack tol).

    Raises:
        SingularInfo: info.D is not positive definite
    """
    if not is_definite(info.D, "pos", 0.0):
        raise SingularInfo("credibility region needs a positive definite information matrix")
    E = parameter_error(A, B, est)
    _, worst = eig_extremes(E.T @ info.D @ E)
    return worst <= 1.0 + tol
