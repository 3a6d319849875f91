"""
Ellipsoidal uncertainty sets Delta^T Delta <= P.

    Delta_0 = [A0_hat - A_tr, B0_hat - B_tr]   Delta_0^T Delta_0 <= D_0^{-1}
    Delta_u = [A_tr - AT_hat, B_tr - BT_hat]   Delta_u^T Delta_u <= D_T^{-1}
    Delta_s = [AT_hat - A0_hat, BT_hat - B0_hat] = -(Delta_0 + Delta_u)
              Delta_s^T Delta_s <= (1 + 1/eps) D_0^{-1} + (1 + eps) D_T^{-1}   for any eps > 0

The last bound follows from Young's inequality. Membership and sampling use
closed sets; strict margins are only applied when an LMI is certified.

Functions:
    delta_0_bound(info0) -> DeltaBound
    delta_u_bound(info_T) -> DeltaBound
    delta_s_bound(eps, D0, DT) -> DeltaBound
    ds_feasibility_block(eps, D0, DbarT, Ds)
    sample_delta(bound, rng, boundary_fraction) -> np.ndarray
    scheduling_delta(delta0, delta_u) -> np.ndarray
"""

from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from gsdual.errors import DomainError, ShapeMismatch, SingularInfo
from gsdual.estimate import InfoMatrix
from gsdual.matrix_kit import (assemble, eig_extremes, is_definite, random_orthonormal_rows,
                               sqrt_psd, symmetrize)

MatrixLike = Union[np.ndarray, InfoMatrix]


def _matrix(value: Any) -> Any:
    return value.D if isinstance(value, InfoMatrix) else value


def _pd_inverse(value: MatrixLike, name: str) -> np.ndarray:
    D = symmetrize(_matrix(value))
    if not is_definite(D, "pos", 0.0):
        raise SingularInfo(f"{name} must be positive definite")
    return symmetrize(np.linalg.inv(D))


@dataclass(frozen=True)
class DeltaBound:
    """The set {Delta in R^{rows x dim}: Delta^T Delta <= P}."""
    P: np.ndarray
    rows: int

    def __post_init__(self) -> None:
        P = symmetrize(self.P)
        if not is_definite(P, "pos", 0.0):
            raise SingularInfo("uncertainty bound P must be positive definite")
        if self.rows < 1 or self.rows > P.shape[0]:
            raise ShapeMismatch(f"rows={self.rows} incompatible with bound of size {P.shape[0]}")
        object.__setattr__(self, "P", P)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def normalized_size(self, delta: np.ndarray) -> float:
        """Largest eigenvalue of P^{-1/2} Delta^T Delta P^{-1/2}; <= 1 inside the set."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (self.rows, self.dim):
            raise ShapeMismatch(f"Delta has shape {delta.shape}, expected {(self.rows, self.dim)}")
        root_inv = np.linalg.inv(sqrt_psd(self.P))
        _, worst = eig_extremes(root_inv @ delta.T @ delta @ root_inv)
        return worst

    def contains(self, delta: np.ndarray, tol: float = 1e-9) -> bool:
        return self.normalized_size(delta) <= 1.0 + tol


def delta_0_bound(info0: MatrixLike, rows: int) -> DeltaBound:
    """P = D_0^{-1}."""
    return DeltaBound(P=_pd_inverse(info0, "D_0"), rows=rows)


def delta_u_bound(info_T: MatrixLike, rows: int) -> DeltaBound:
    """P = D_T^{-1}."""
    return DeltaBound(P=_pd_inverse(info_T, "D_T"), rows=rows)


def delta_s_bound(eps: float, D0: MatrixLike, DT: MatrixLike, rows: int) -> DeltaBound:
    """
    P = (1 + 1/eps) D_0^{-1} + (1 + eps) D_T^{-1}.

    Raises:
        DomainError: eps <= 0
    """
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    P = (1.0 + 1.0 / eps) * _pd_inverse(D0, "D_0") + (1.0 + eps) * _pd_inverse(DT, "D_T")
    return DeltaBound(P=P, rows=rows)


def ds_feasibility_block(eps: float, D0: MatrixLike, DbarT: Any, Ds: Any) -> Any:
    """
    [[eps D_0 - (1 + eps) D_s, eps D_0], [eps D_0, Dbar_T + eps D_0]].

    Positive definiteness of this block is equivalent to
    D_s^{-1} > (1 + 1/eps) D_0^{-1} + (1 + eps) Dbar_T^{-1}
    (Woodbury identity followed by a Schur complement). DbarT and Ds may be
    numeric or CVXPY expressions.
    """
    D0 = _matrix(D0)
    DbarT = _matrix(DbarT)
    Ds = _matrix(Ds)
    e_d0 = eps * np.asarray(D0, dtype=float)
    return assemble([[e_d0 - (1.0 + eps) * Ds, e_d0],
                     [e_d0, DbarT + e_d0]])


def sample_delta(bound: DeltaBound, rng: np.random.Generator, boundary_fraction: float = 0.0) -> np.ndarray:
    """
    Random Delta = U S P^{1/2} inside the set.

    U has orthonormal rows and S = diag(s) with s_i uniform on [0, 1]; with
    probability `boundary_fraction` every s_i is 1 and Delta touches the
    boundary of the set.
    """
    if not 0.0 <= boundary_fraction <= 1.0:
        raise DomainError("boundary_fraction must lie in [0, 1]")
    U = random_orthonormal_rows(bound.rows, bound.dim, rng)
    on_boundary = rng.random() < boundary_fraction
    scales = np.ones(bound.dim) if on_boundary else rng.random(bound.dim)
    return (U * scales) @ sqrt_psd(bound.P)


def scaled_delta(U: np.ndarray, scales: np.ndarray, bound: DeltaBound) -> np.ndarray:
    """Delta = U diag(scales) P^{1/2} for given U and scales."""
    return (np.asarray(U) * np.asarray(scales)) @ sqrt_psd(bound.P)


def scheduling_delta(delta0: np.ndarray, delta_u: np.ndarray) -> np.ndarray:
    """Delta_s = -(Delta_0 + Delta_u)."""
    return -(np.asarray(delta0) + np.asarray(delta_u))
