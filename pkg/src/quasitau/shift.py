"""Shift matrices acting on the vector of monomials.

Axis arguments are zero-based: ``axis=0`` is the first coordinate.
Block ``(Lambda_a)_{[k],[k+1]}`` maps level k+1 down to level k and has a
single 1 per row, at the column of ``q + e_a``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .blockmat import BlockMatrix, check_invertible
from .errors import OutOfRange, RankDeficient, SingularPivot
from .mindex import add_unit, enumerate_level, level_offsets, level_size, multinomial_matrix


@lru_cache(maxsize=None)
def shift_index_map(dim: int, axis: int, k: int) -> tuple[int, ...]:
    """Column (in level k+1) of the single 1 in each row of the block."""
    if not 0 <= axis < dim:
        raise ValueError(f"axis {axis} outside 0..{dim - 1}")
    upper = enumerate_level(dim, k + 1).position
    return tuple(upper[add_unit(q, axis)] for q in enumerate_level(dim, k))


def shift_block(dim: int, axis: int, k: int) -> np.ndarray:
    cols = shift_index_map(dim, axis, k)
    out = np.zeros((len(cols), level_size(dim, k + 1)))
    out[np.arange(len(cols)), cols] = 1.0
    return out


def dot_lambda_block(n, k: int) -> np.ndarray:
    """(n . Lambda)_{[k],[k+1]} = sum_a n_a (Lambda_a)_{[k],[k+1]}."""
    n = np.asarray(n, dtype=float)
    dim = n.size
    out = np.zeros((level_size(dim, k), level_size(dim, k + 1)))
    rows = np.arange(out.shape[0])
    for a in range(dim):
        out[rows, shift_index_map(dim, a, k)] += n[a]
    return out


def stacked_lambda_block(directions, k: int) -> np.ndarray:
    """Rows (n_1.Lambda)_{[k],[k+1]}, ..., (n_D.Lambda)_{[k],[k+1]} stacked."""
    return np.vstack([dot_lambda_block(n, k) for n in np.atleast_2d(directions)])


def power_block(kvec, k: int) -> np.ndarray:
    """(Lambda_kvec)_{[k],[k+|kvec|]} as a product of single shifts."""
    kvec = tuple(kvec)
    dim = len(kvec)
    out = np.eye(level_size(dim, k))
    level = k
    for axis, times in enumerate(kvec):
        for _ in range(times):
            out = out @ shift_block(dim, axis, level)
            level += 1
    return out


def lambda_power(kvec, levels: int) -> BlockMatrix:
    """Truncation to ``levels`` levels of Lambda_1^{k_1} ... Lambda_D^{k_D}."""
    kvec = tuple(int(v) for v in kvec)
    dim, degree = len(kvec), sum(kvec)
    if levels < degree + 1:
        raise OutOfRange(f"need at least {degree + 1} levels for shift of degree {degree}")
    off = level_offsets(dim, levels)
    out = np.zeros((off[-1], off[-1]))
    for k in range(levels - degree):
        out[off[k]:off[k + 1], off[k + degree]:off[k + degree + 1]] = power_block(kvec, k)
    return BlockMatrix.from_levels(dim, levels, out)


def dot_lambda(n, levels: int) -> BlockMatrix:
    """Truncation of n . Lambda; nonzero only on the first block superdiagonal."""
    n = np.asarray(n, dtype=float)
    dim = n.size
    off = level_offsets(dim, levels)
    out = np.zeros((off[-1], off[-1]))
    for k in range(levels - 1):
        out[off[k]:off[k + 1], off[k + 1]:off[k + 2]] = dot_lambda_block(n, k)
    return BlockMatrix.from_levels(dim, levels, out)


def projection_block(dim: int, axis: int, power: int, k: int) -> np.ndarray:
    """Diagonal 0/1 matrix (Lambda_a^T)^n Lambda_a^n on level k:
    entry i is 1 when the exponent of the axis is at least ``power``."""
    if power < 1:
        raise ValueError("power must be >= 1")
    exps = enumerate_level(dim, k).exponents
    return np.diag((exps[:, axis] >= power).astype(float))


def right_inverse_dot_lambda(n, k: int) -> np.ndarray:
    """Right inverse of (n.Lambda)_{[k-1],[k]} weighted by the inverse
    multinomial matrix: M^{-1} A^T (A M^{-1} A^T)^{-1}."""
    n = np.asarray(n, dtype=float)
    if k < 1:
        raise ValueError("level must be >= 1")
    if not np.any(n):
        raise ValueError("direction must be nonzero")
    a = dot_lambda_block(n, k - 1)
    minv = np.linalg.inv(multinomial_matrix(n.size, k))
    inner = a @ minv @ a.T
    try:
        check_invertible(inner)
    except SingularPivot:
        raise RankDeficient("(n.Lambda) M^{-1} (n.Lambda)^T is singular") from None
    return minv @ a.T @ np.linalg.inv(inner)
