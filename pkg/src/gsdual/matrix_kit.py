"""
Dense symmetric/rectangular matrix algebra shared by every gsdual module.

Matrices here are small (at most a few dozen rows), so everything is dense
numpy and definiteness is decided from a full symmetric eigendecomposition,
which also yields reportable margins.

Functions:
    symmetrize(m) -> np.ndarray
        Square check plus (m + m^T) / 2; the SymMatrix constructor
    assemble(blocks, row_dims=None, col_dims=None)
        Concatenate a grid of blocks; ZERO / IDENTITY markers are expanded.
        Works for numpy blocks and for CVXPY expressions alike, so numeric and
        decision-variable versions of an LMI share one assembly routine
    extract_block(m, row_dims, col_dims, i, j) -> np.ndarray
    schur_complement(m, split) -> np.ndarray
    eig_extremes(m) -> (min, max)
    is_definite(m, sense, tol) -> bool
    definiteness_margin(m, sense) -> float
    sqrt_psd(m) -> np.ndarray
    psd_factor(cov) -> np.ndarray
    gaussian_sample(cov, rng) -> np.ndarray
    random_orthonormal_rows(rows, cols, rng) -> np.ndarray
"""

from enum import Enum
from typing import Any, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np
from scipy import linalg

from gsdual.constants import COND_CAP, DEFAULT_TOL, PSD_CLAMP
from gsdual.errors import InvalidMatrix, NotPsd, ShapeMismatch, SingularBlock


class Block(Enum):
    """Placeholders inside a block grid; sized from their slot."""
    ZERO = "zero"
    IDENTITY = "identity"


ZERO = Block.ZERO
IDENTITY = Block.IDENTITY

SENSES = ("pos", "neg", "psd", "nsd")


def symmetrize(m: Any) -> np.ndarray:
    """
    Return (m + m^T) / 2 as a float array.

    Raises:
        ShapeMismatch: m is not a non-empty square matrix
        InvalidMatrix: m contains NaN or inf
    """
    arr = np.atleast_2d(np.asarray(m, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ShapeMismatch(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("matrix contains NaN or inf entries")
    return 0.5 * (arr + arr.T)


def _shape(block: Any) -> Optional[Tuple[int, int]]:
    if isinstance(block, Block):
        return None
    if isinstance(block, cp.Expression):
        shape = block.shape
    else:
        shape = np.shape(block)
    if len(shape) == 0:
        return (1, 1)
    if len(shape) == 1:
        return (shape[0], 1)
    return (int(shape[0]), int(shape[1]))


def _as_2d(block: Any) -> Any:
    if isinstance(block, cp.Expression):
        if block.ndim == 2:
            return block
        return cp.reshape(block, _shape(block), order="F")
    return np.atleast_2d(np.asarray(block, dtype=float)).reshape(_shape(block))


def _infer_dims(blocks: Sequence[Sequence[Any]], axis: int) -> list:
    count = len(blocks) if axis == 0 else len(blocks[0])
    dims = [None] * count
    for i, row in enumerate(blocks):
        for j, block in enumerate(row):
            shape = _shape(block)
            if shape is None:
                continue
            k = i if axis == 0 else j
            if dims[k] is None:
                dims[k] = shape[axis]
    if any(d is None for d in dims):
        raise ShapeMismatch("block grid has a row or column made only of markers; pass explicit dims")
    return dims


def assemble(blocks: Sequence[Sequence[Any]],
             row_dims: Optional[Sequence[int]] = None,
             col_dims: Optional[Sequence[int]] = None) -> Any:
    """
    Concatenate a rectangular grid of blocks into one matrix.

    Blocks may be numpy arrays, scalars, CVXPY expressions or the ZERO /
    IDENTITY markers. If any block is a CVXPY expression the result is a CVXPY
    expression (cp.bmat), otherwise a numpy array.

    Args:
        blocks: Row-major grid of blocks
        row_dims: Height of each block row (inferred when omitted)
        col_dims: Width of each block column (inferred when omitted)

    Raises:
        ShapeMismatch: A block disagrees with its (row_dim, col_dim) slot
    """
    if not blocks or not blocks[0]:
        raise ShapeMismatch("empty block grid")
    width = len(blocks[0])
    if any(len(row) != width for row in blocks):
        raise ShapeMismatch("block grid rows have different lengths")
    row_dims = list(row_dims) if row_dims is not None else _infer_dims(blocks, 0)
    col_dims = list(col_dims) if col_dims is not None else _infer_dims(blocks, 1)

    symbolic = False
    grid = []
    for i, row in enumerate(blocks):
        out_row = []
        for j, block in enumerate(row):
            r, c = row_dims[i], col_dims[j]
            if block is ZERO:
                out_row.append(np.zeros((r, c)))
                continue
            if block is IDENTITY:
                if r != c:
                    raise ShapeMismatch(f"identity marker in non-square slot ({i},{j}): {r}x{c}")
                out_row.append(np.eye(r))
                continue
            if _shape(block) != (r, c):
                raise ShapeMismatch(f"block ({i},{j}) has shape {_shape(block)}, slot expects {(r, c)}")
            symbolic = symbolic or isinstance(block, cp.Expression)
            out_row.append(_as_2d(block))
        grid.append(out_row)

    if symbolic:
        return cp.bmat(grid)
    return np.block(grid)


def extract_block(m: np.ndarray, row_dims: Sequence[int], col_dims: Sequence[int],
                  i: int, j: int) -> np.ndarray:
    """Return block (i, j) of m partitioned by row_dims x col_dims."""
    r0 = int(np.sum(row_dims[:i]))
    c0 = int(np.sum(col_dims[:j]))
    return np.asarray(m)[r0:r0 + row_dims[i], c0:c0 + col_dims[j]]


def schur_complement(m: Any, split: int, cond_cap: float = COND_CAP) -> np.ndarray:
    """
    Schur complement A - B C^{-1} B^T of m = [[A, B], [B^T, C]].

    Args:
        m: Symmetric matrix
        split: Size of the leading block A; C is the trailing block
        cond_cap: Largest tolerated condition number of C

    Raises:
        SingularBlock: C is numerically singular
    """
    m = symmetrize(m)
    n = m.shape[0]
    if not 0 < split < n:
        raise ShapeMismatch(f"split must lie in (0, {n}), got {split}")
    a, b, c = m[:split, :split], m[:split, split:], m[split:, split:]
    if np.linalg.cond(c) > cond_cap:
        raise SingularBlock(f"eliminated block is singular (cond > {cond_cap:.1e})")
    return symmetrize(a - b @ linalg.solve(c, b.T, assume_a="sym"))


def eig_extremes(m: Any) -> Tuple[float, float]:
    """Smallest and largest eigenvalue of the symmetric part of m."""
    eigs = linalg.eigvalsh(symmetrize(m))
    return float(eigs[0]), float(eigs[-1])


def definiteness_margin(m: Any, sense: str) -> float:
    """
    Signed eigenvalue margin of m in the requested sense.

    Positive means satisfied: for "pos"/"psd" it is the smallest eigenvalue,
    for "neg"/"nsd" it is minus the largest.
    """
    if sense not in SENSES:
        raise ValueError(f"unknown sense {sense!r}; expected one of {SENSES}")
    lo, hi = eig_extremes(m)
    return lo if sense in ("pos", "psd") else -hi


def is_definite(m: Any, sense: str = "pos", tol: float = DEFAULT_TOL) -> bool:
    """
    Test definiteness from the eigenvalues of m.

    Strict senses need a margin larger than tol ("pos": min eig > tol),
    non-strict senses allow a slack of tol ("psd": min eig >= -tol).

    Raises:
        InvalidMatrix: m contains NaN
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    margin = definiteness_margin(m, sense)
    if sense in ("pos", "neg"):
        return margin > tol
    return margin >= -tol


def _clamped_eigh(m: Any) -> Tuple[np.ndarray, np.ndarray]:
    m = symmetrize(m)
    eigs, vecs = linalg.eigh(m)
    floor = -PSD_CLAMP * max(1.0, float(np.linalg.norm(m, 2)))
    if eigs[0] < floor:
        raise NotPsd(f"matrix is not PSD: min eigenvalue {eigs[0]:.3e}")
    return np.clip(eigs, 0.0, None), vecs


def sqrt_psd(m: Any) -> np.ndarray:
    """Symmetric PSD square root; tiny negative eigenvalues are clamped to 0."""
    eigs, vecs = _clamped_eigh(m)
    return symmetrize((vecs * np.sqrt(eigs)) @ vecs.T)


def psd_factor(cov: Any) -> np.ndarray:
    """Factor L with L L^T = cov (the symmetric square root)."""
    return sqrt_psd(cov)


def gaussian_sample(cov: Any, rng: np.random.Generator) -> np.ndarray:
    """
    Draw one sample from N(0, cov).

    Always consumes dim(cov) standard normals, also when cov = 0, so the
    stream position does not depend on the covariance.
    """
    factor = psd_factor(cov)
    return factor @ rng.standard_normal(factor.shape[0])


def random_orthonormal_rows(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Random rows x cols matrix with orthonormal rows (rows <= cols)."""
    if rows > cols:
        raise ShapeMismatch(f"cannot have {rows} orthonormal rows in dimension {cols}")
    q, r = np.linalg.qr(rng.standard_normal((cols, rows)))
    # sign fix makes the draw Haar distributed
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    return q.T
