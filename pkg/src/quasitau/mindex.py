"""Multi-indices, the graded reverse-lexicographic monomial order and
multinomial matrices.

A multi-index is a plain tuple of non-negative integers.  Level ``k`` holds
all multi-indices of total degree ``k``; within a level, an index comes
first when its first differing exponent is larger, so ``x1**k`` leads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, prod

import numpy as np

MultiIndex = tuple[int, ...]


def _descending(dim: int, total: int):
    if dim == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _descending(dim - 1, total - first):
            yield (first,) + rest


@dataclass(frozen=True)
class LevelBasis:
    """Ordered multi-indices of one total degree."""

    dimension: int
    level: int
    indices: tuple[MultiIndex, ...]
    position: dict[MultiIndex, int] = field(compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.indices[i]

    @property
    def exponents(self) -> np.ndarray:
        """Integer array of shape (size, D)."""
        return np.array(self.indices, dtype=int).reshape(len(self.indices), self.dimension)


@lru_cache(maxsize=None)
def enumerate_level(dim: int, k: int) -> LevelBasis:
    if dim < 1:
        raise ValueError("dimension must be positive")
    if k < 0:
        raise ValueError("level must be non-negative")
    indices = tuple(_descending(dim, k))
    return LevelBasis(dim, k, indices, {q: i for i, q in enumerate(indices)})


def level_size(dim: int, k: int) -> int:
    """Number of monomials of total degree k in dim variables."""
    if dim < 1 or k < 0:
        raise ValueError("need dim >= 1 and k >= 0")
    return comb(dim + k - 1, k)


def precedes(p: MultiIndex, q: MultiIndex) -> bool:
    """Strict order: lower degree first, then larger leading exponent."""
    if sum(p) != sum(q):
        return sum(p) < sum(q)
    for a, b in zip(p, q):
        if a != b:
            return a > b
    return False


@lru_cache(maxsize=None)
def level_offsets(dim: int, levels: int) -> tuple[int, ...]:
    """Start of each level inside the flattened vector of all monomials,
    plus the total size as the last entry."""
    offsets = [0]
    for k in range(levels):
        offsets.append(offsets[-1] + level_size(dim, k))
    return tuple(offsets)


def global_index(q: MultiIndex) -> int:
    dim, k = len(q), sum(q)
    return level_offsets(dim, k)[k] + enumerate_level(dim, k).position[q]


def eval_chi_level(basis: LevelBasis, x) -> np.ndarray:
    """Monomials of the level evaluated at x (a point, or an (n, D) array of
    points giving an (n, size) result)."""
    x = np.asarray(x, dtype=float)
    powers = basis.exponents
    pts = np.atleast_2d(x)
    degree = int(powers.max(initial=0))
    out = np.ones((len(pts), len(powers)))
    for a in range(pts.shape[1]):
        table = np.vander(pts[:, a], degree + 1, increasing=True)
        out *= table[:, powers[:, a]]
    return out[0] if x.ndim == 1 else out


def eval_chi(dim: int, levels: int, x) -> list[np.ndarray]:
    """List of monomial vectors for levels 0..levels-1."""
    return [eval_chi_level(enumerate_level(dim, k), x) for k in range(levels)]


@lru_cache(maxsize=None)
def _multinomial_diagonal(dim: int, k: int) -> tuple[int, ...]:
    return tuple(
        factorial(k) // prod(factorial(a) for a in q) for q in enumerate_level(dim, k)
    )


def multinomial_matrix(dim: int, k: int) -> np.ndarray:
    """Diagonal matrix of multinomial coefficients k!/prod(alpha_a!)."""
    return np.diag(np.array(_multinomial_diagonal(dim, k), dtype=float))


def add_unit(q: MultiIndex, axis: int, amount: int = 1) -> MultiIndex:
    return tuple(e + amount if i == axis else e for i, e in enumerate(q))
