"""
Matrix inequalities of the dual design, as builders over numeric values or
CVXPY variables.

Every builder here is plain arithmetic plus `matrix_kit.assemble`, so the
same function produces the numeric matrix used for certification and the
affine CVXPY expression handed to the solver.

Signals of the gain-scheduled loop (all w^s, w^u, w have n_x entries):

    x+  = (A0 + B0 K) x + (I + B0 K_s) w^s + w^u + w
    z^s = z^u = [x; K x + K_s w^s]
    z   = (C + D K) x + D K_s w^s + D_w w
    w^s = Delta_s z^s,   w^u = Delta_u z^u

Types:
    GainSchedulingData - (A0_hat, B0_hat, perf) of the generalized plant
    ExplorationData    - (A0_hat, B0_hat, D0, Q, R) of the exploration problem
    ClosedLoop         - the matrices of the loop above for fixed (K, K_s)

Functions:
    s1_block(W, Y, Z, Q, R)
    se_block(t_e, Z_e, W_e, Sigma, D0, A0_hat, B0_hat, sigma_w)
    s2_gain_sched(Ks, M, N, lambda_s, lambda_u, Ds, DbarT, gs)
    relaxed_gram_bound(W, Z, V)
    predicted_info(W, Z, Sigma, D0, T, sigma_w, c_delta) -> np.ndarray
    dbar_constraint(W_e, Z_e, Sigma, DbarT, K0, D0, T, sigma_w, c_delta)
    closed_loop_matrices(K, Ks, gs) -> ClosedLoop
    analysis_lmi_fixed(K, Ks, X, lambda_s, lambda_u, Ds, DbarT, gs)
    quadratic_performance_lmi(A, C, D_w, multiplier, X)
"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from gsdual.errors import DimensionMismatch, NotPsd, ShapeMismatch
from gsdual.estimate import InfoMatrix
from gsdual.matrix_kit import IDENTITY, ZERO, assemble, is_definite, sqrt_psd, symmetrize
from gsdual.plant import PerfChannel


def _info(D0: Any) -> np.ndarray:
    return D0.D if isinstance(D0, InfoMatrix) else np.asarray(D0, dtype=float)


@dataclass(frozen=True)
class GainSchedulingData:
    """Initial estimates plus the performance channel."""
    A0_hat: np.ndarray
    B0_hat: np.ndarray
    perf: PerfChannel

    def __post_init__(self) -> None:
        A, B = np.atleast_2d(self.A0_hat), np.atleast_2d(self.B0_hat)
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"inconsistent estimates A0{A.shape}, B0{B.shape}")
        if self.perf.C.shape[1] != A.shape[0] or self.perf.D.shape[1] != B.shape[1]:
            raise DimensionMismatch("performance channel does not match the estimates")
        if self.perf.D_w.shape[1] != A.shape[0]:
            raise DimensionMismatch("D_w must have n_x columns (w enters the state directly)")
        object.__setattr__(self, "A0_hat", A.astype(float))
        object.__setattr__(self, "B0_hat", B.astype(float))

    @property
    def n_x(self) -> int:
        return self.A0_hat.shape[0]

    @property
    def n_u(self) -> int:
        return self.B0_hat.shape[1]

    @property
    def n_z(self) -> int:
        return self.perf.n_z


@dataclass(frozen=True)
class ExplorationData:
    """Initial estimates, D0 and the exploration cost weights Q >= 0, R > 0."""
    A0_hat: np.ndarray
    B0_hat: np.ndarray
    D0: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        A, B = np.atleast_2d(self.A0_hat), np.atleast_2d(self.B0_hat)
        n_x, n_u = A.shape[0], B.shape[1]
        D0 = symmetrize(_info(self.D0))
        Q, R = symmetrize(self.Q), symmetrize(self.R)
        if Q.shape != (n_x, n_x) or R.shape != (n_u, n_u) or D0.shape != (n_x + n_u,) * 2:
            raise DimensionMismatch(f"Q{Q.shape}, R{R.shape}, D0{D0.shape} do not fit n_x={n_x}, n_u={n_u}")
        if not is_definite(Q, "psd"):
            raise NotPsd("Q must be positive semidefinite")
        if not is_definite(R, "pos", 0.0):
            raise NotPsd("R must be positive definite")
        for name, value in (("A0_hat", A), ("B0_hat", B), ("D0", D0), ("Q", Q), ("R", R)):
            object.__setattr__(self, name, np.asarray(value, dtype=float))

    @property
    def n_x(self) -> int:
        return self.A0_hat.shape[0]

    @property
    def n_u(self) -> int:
        return self.B0_hat.shape[1]


def s1_block(W: Any, Y: Any, Z: Any, Q: np.ndarray, R: np.ndarray) -> Any:
    """
    [[Y, [Q^{1/2} W; R^{1/2} Z^T]], [[W Q^{1/2}, Z R^{1/2}], W]] (>= 0 required).

    By a Schur complement Y >= [Q^{1/2} W; R^{1/2} Z^T] W^{-1} [.]^T, so
    tr Y bounds tr(Q W) + tr(R K W K^T) with K = Z^T W^{-1}.
    """
    Qh, Rh = sqrt_psd(Q), sqrt_psd(R)
    n_x, n_u = Qh.shape[0], Rh.shape[0]
    coupling = assemble([[Qh @ W], [Rh @ Z.T]], row_dims=[n_x, n_u], col_dims=[n_x])
    return assemble([[Y, coupling], [coupling.T, W]],
                    row_dims=[n_x + n_u, n_x], col_dims=[n_x + n_u, n_x])


def se_block(t_e: float, Z_e: Any, W_e: Any, Sigma: Any, D0: Any,
             A0_hat: np.ndarray, B0_hat: np.ndarray, sigma_w: float) -> Any:
    """
    Robust Gramian inequality (>= 0 required):

        [[H, F, G], [F^T, W_e - sigma_w^2 I - t_e I, 0], [G^T, 0, t_e D0]]

    H = diag(W_e, Sigma), F = [W_e A0^T + Z_e B0^T; Sigma B0^T],
    G = [[-W_e, -Z_e], [0, -Sigma]].
    """
    D0 = _info(D0)
    n_x, n_u = A0_hat.shape[0], B0_hat.shape[1]
    rows = [n_x, n_u]
    H = assemble([[W_e, ZERO], [ZERO, Sigma]], row_dims=rows, col_dims=rows)
    F = assemble([[W_e @ A0_hat.T + Z_e @ B0_hat.T], [Sigma @ B0_hat.T]],
                 row_dims=rows, col_dims=[n_x])
    G = assemble([[-W_e, -Z_e], [ZERO, -Sigma]], row_dims=rows, col_dims=rows)
    C_e = W_e - (sigma_w ** 2 + t_e) * np.eye(n_x)
    n = n_x + n_u
    return assemble([[H, F, G],
                     [F.T, C_e, ZERO],
                     [G.T, ZERO, t_e * D0]],
                    row_dims=[n, n_x, n], col_dims=[n, n_x, n])


def s2_gain_sched(Ks: Any, M: Any, N: Any, lambda_s: float, lambda_u: float,
                  Ds: Any, DbarT: Any, gs: GainSchedulingData) -> Any:
    """
    Robust gain-scheduling synthesis inequality (< 0 required).

    Upper-left block over (x, w^s, w^u, w):

        [[-N, 0, 0, (CN + DM)^T S_p^T],
         [0, -lambda_s I, 0, (D Ks)^T S_p^T],
         [0, 0, -lambda_u I, 0],
         [S_p (CN + DM), S_p D Ks, 0, Q_p + D_w^T S_p^T + S_p D_w]]

    lower-left block over (x+, z^s, z^u, z):

        [[A0 N + B0 M, I + B0 Ks, I, I],
         [[N; M], [0; Ks], 0, 0],
         [[N; M], [0; Ks], 0, 0],
         [CN + DM, D Ks, 0, D_w]]

    lower-right block diag(-N, -Ds / lambda_s, -DbarT / lambda_u, -R_p^{-1}).
    Ds and DbarT take the places of the inverse multiplier blocks, which keeps
    the inequality affine for fixed (lambda_s, lambda_u).
    """
    if not (lambda_s > 0 and lambda_u > 0):
        raise ShapeMismatch("lambda_s and lambda_u must be positive")
    p = gs.perf
    n_x, n_u, n_z = gs.n_x, gs.n_u, gs.n_z
    A0, B0 = gs.A0_hat, gs.B0_hat
    Sp = p.S_p
    xi = [n_x, n_x, n_x, n_x]
    out = [n_x, n_x + n_u, n_x + n_u, n_z]

    CN_DM = p.C @ N + p.D @ M
    DKs = p.D @ Ks
    psi = assemble([
        [-N, ZERO, ZERO, CN_DM.T @ Sp.T],
        [ZERO, -lambda_s * np.eye(n_x), ZERO, DKs.T @ Sp.T],
        [ZERO, ZERO, -lambda_u * np.eye(n_x), ZERO],
        [Sp @ CN_DM, Sp @ DKs, ZERO, p.Q_p + p.D_w.T @ Sp.T + Sp @ p.D_w],
    ], row_dims=xi, col_dims=xi)

    z_from_x = assemble([[N], [M]], row_dims=[n_x, n_u], col_dims=[n_x])
    z_from_ws = assemble([[ZERO], [Ks]], row_dims=[n_x, n_u], col_dims=[n_x])
    lower = assemble([
        [A0 @ N + B0 @ M, np.eye(n_x) + B0 @ Ks, IDENTITY, IDENTITY],
        [z_from_x, z_from_ws, ZERO, ZERO],
        [z_from_x, z_from_ws, ZERO, ZERO],
        [CN_DM, DKs, ZERO, p.D_w],
    ], row_dims=out, col_dims=xi)

    R_p_inv = symmetrize(np.linalg.inv(p.R_p))
    corner = assemble([
        [-N, ZERO, ZERO, ZERO],
        [ZERO, -(1.0 / lambda_s) * Ds, ZERO, ZERO],
        [ZERO, ZERO, -(1.0 / lambda_u) * DbarT, ZERO],
        [ZERO, ZERO, ZERO, -R_p_inv],
    ], row_dims=out, col_dims=out)

    return assemble([[psi, lower.T], [lower, corner]],
                    row_dims=[sum(xi), sum(out)], col_dims=[sum(xi), sum(out)])


def relaxed_gram_bound(W: Any, Z: Any, V: np.ndarray) -> Any:
    """
    Affine lower bound [W; Z^T] V + V^T [W; Z^T]^T - V^T W V of
    [[W, Z], [Z^T, Z^T W^{-1} Z]], valid for every V and W > 0.

    Tight when [W, Z] = W V, i.e. V = [I, K^T] with Z = W K^T.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n_x = V.shape[0]
    n_u = V.shape[1] - n_x
    stacked = assemble([[W], [Z.T]], row_dims=[n_x, n_u], col_dims=[n_x])
    product = stacked @ V
    return product + product.T - V.T @ W @ V


def exploration_gram(W: np.ndarray, Z: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    """[[W, Z], [Z^T, Z^T W^{-1} Z + Sigma]] = [[W, W K^T], [K W, K W K^T + Sigma]]."""
    W = symmetrize(W)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    quad = Z.T @ np.linalg.solve(W, Z)
    return symmetrize(np.block([[W, Z], [Z.T, quad + np.asarray(Sigma, dtype=float)]]))


def predicted_info(W: np.ndarray, Z: np.ndarray, Sigma: np.ndarray, D0: Any,
                   T: int, sigma_w: float, c_delta: float) -> np.ndarray:
    """
    Information matrix expected after T exploration steps:
    D0 + T / (sigma_w^2 c_delta) [[W, Z], [Z^T, Z^T W^{-1} Z + Sigma]].
    """
    return symmetrize(_info(D0) + T / (sigma_w ** 2 * c_delta) * exploration_gram(W, Z, Sigma))


def dbar_constraint(W_e: Any, Z_e: Any, Sigma: Any, DbarT: Any, K0: np.ndarray, D0: Any,
                    T: int, sigma_w: float, c_delta: float) -> Any:
    """
    T / (sigma_w^2 c_delta) [[W_e, Z_e], [Z_e^T, Z_e^T K0^T + K0 Z_e - K0 W_e K0^T + Sigma]]
    + D0 - DbarT   (> 0 required).

    This is the relaxed Gramian bound with V = [I, K0^T]; it makes DbarT a lower
    bound on the predicted information matrix.
    """
    K0 = np.atleast_2d(np.asarray(K0, dtype=float))
    n_u, n_x = K0.shape
    V = np.hstack([np.eye(n_x), K0.T])
    noise = assemble([[ZERO, ZERO], [ZERO, Sigma]], row_dims=[n_x, n_u], col_dims=[n_x, n_u])
    scale = T / (sigma_w ** 2 * c_delta)
    return scale * (relaxed_gram_bound(W_e, Z_e, V) + noise) + _info(D0) - DbarT


@dataclass(frozen=True)
class ClosedLoop:
    """
    x+ = A x + Bs w^s + w^u + w,  z^s = z^u = Cs x + Dss w^s,  z = Cz x + Dzs w^s + Dzw w.
    """
    A: np.ndarray
    Bs: np.ndarray
    Cs: np.ndarray
    Dss: np.ndarray
    Cz: np.ndarray
    Dzs: np.ndarray
    Dzw: np.ndarray


def closed_loop_matrices(K: np.ndarray, Ks: np.ndarray, gs: GainSchedulingData) -> ClosedLoop:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Ks = np.atleast_2d(np.asarray(Ks, dtype=float))
    if K.shape != (gs.n_u, gs.n_x) or Ks.shape != (gs.n_u, gs.n_x):
        raise ShapeMismatch(f"K{K.shape} and K_s{Ks.shape} must both be {(gs.n_u, gs.n_x)}")
    p = gs.perf
    return ClosedLoop(
        A=gs.A0_hat + gs.B0_hat @ K,
        Bs=np.eye(gs.n_x) + gs.B0_hat @ Ks,
        Cs=np.vstack([np.eye(gs.n_x), K]),
        Dss=np.vstack([np.zeros((gs.n_x, gs.n_x)), Ks]),
        Cz=p.C + p.D @ K,
        Dzs=p.D @ Ks,
        Dzw=p.D_w,
    )


def analysis_lmi_fixed(K: np.ndarray, Ks: np.ndarray, X: Any, lambda_s: Any, lambda_u: Any,
                       Ds: np.ndarray, DbarT: np.ndarray, gs: GainSchedulingData) -> Any:
    """
    Quadratic form F^T diag(P_X, lambda_s P_s, lambda_u P_u, P_p) F over (x, w^s, w^u, w)
    (< 0 required), with

        P_X = [[-X, 0], [0, X]]           on (x, x+)
        P_s = [[-I, 0], [0, Ds^{-1}]]     on (w^s, z^s)
        P_u = [[-I, 0], [0, DbarT^{-1}]]  on (w^u, z^u)
        P_p = [[Q_p, S_p], [S_p^T, R_p]]  on (w, z)

    Affine in (X, lambda_s, lambda_u), so any of them may be CVXPY variables.
    With X = N^{-1} and K = M N^{-1} this is negative definite exactly when
    s2_gain_sched is.
    """
    cl = closed_loop_matrices(K, Ks, gs)
    n_x = gs.n_x
    eye, zero = np.eye(n_x), np.zeros((n_x, n_x))
    select = [np.hstack([eye if j == i else zero for j in range(4)]) for i in range(4)]
    x_next = np.hstack([cl.A, cl.Bs, eye, eye])
    z_sched = np.hstack([cl.Cs, cl.Dss, np.zeros((n_x + gs.n_u, 2 * n_x))])
    z_perf = np.hstack([cl.Cz, cl.Dzs, np.zeros((gs.n_z, n_x)), cl.Dzw])
    Ds_inv = symmetrize(np.linalg.inv(symmetrize(Ds)))
    DbarT_inv = symmetrize(np.linalg.inv(symmetrize(DbarT)))

    storage = x_next.T @ X @ x_next - select[0].T @ X @ select[0]
    sched = lambda_s * (z_sched.T @ Ds_inv @ z_sched - select[1].T @ select[1])
    uncert = lambda_u * (z_sched.T @ DbarT_inv @ z_sched - select[2].T @ select[2])
    wz = np.vstack([select[3], z_perf])
    perf = wz.T @ gs.perf.multiplier @ wz
    return storage + sched + uncert + perf


def quadratic_performance_lmi(A: np.ndarray, C: np.ndarray, D_w: np.ndarray,
                              multiplier: np.ndarray, X: Any) -> Any:
    """
    Dissipation inequality of x+ = A x + w, z = C x + D_w w (< 0 required):

        [[A^T X A - X, A^T X], [X A, X]] + [[0, I], [C, D_w]]^T P [[0, I], [C, D_w]]

    Feasible with X > 0 iff the loop is stable and satisfies quadratic
    performance with multiplier P; with P = [[-gamma I, 0], [0, I / gamma]]
    this is the bounded-real lemma for an L2 gain below gamma.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n_x = A.shape[0]
    state = np.hstack([A, np.eye(n_x)])
    now = np.hstack([np.eye(n_x), np.zeros((n_x, n_x))])
    wz = np.vstack([np.hstack([np.zeros((n_x, n_x)), np.eye(n_x)]),
                    np.hstack([np.atleast_2d(C), np.atleast_2d(D_w)])])
    return state.T @ X @ state - now.T @ X @ now + wz.T @ multiplier @ wz
