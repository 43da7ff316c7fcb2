"""Moment matrices of deformed measures and their exact flow actions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .blockmat import BlockMatrix
from .errors import OutOfRange
from .measure import (
    FlowState, MeasureSpec, QuadratureRule, build_quadrature, check_validity_region, deformed_weight,
)
from .mindex import MultiIndex, enumerate_level, global_index, level_offsets
from .shift import dot_lambda, lambda_power

DEFAULT_BUFFER = 3


@lru_cache(maxsize=32)
def cached_rule(spec: MeasureSpec, order: int | None) -> QuadratureRule:
    return build_quadrature(spec, order)


@lru_cache(maxsize=32)
def _monomial_table(rule: QuadratureRule, max_degree: int) -> np.ndarray:
    """x^alpha at every node for all |alpha| <= max_degree, one row per
    multi-index in global order.  Each row is a lower row times one
    coordinate."""
    dim = rule.dimension
    flat = [q for k in range(max_degree + 1) for q in enumerate_level(dim, k)]
    coords = np.ascontiguousarray(rule.nodes.T)
    table = np.empty((len(flat), len(rule.nodes)))
    table[0] = 1.0
    for row, q in enumerate(flat[1:], start=1):
        axis = next(a for a, e in enumerate(q) if e)
        lower = tuple(e - 1 if a == axis else e for a, e in enumerate(q))
        np.multiply(table[global_index(lower)], coords[axis], out=table[row])
    table.setflags(write=False)
    return table


def compensated_sum(terms: np.ndarray) -> np.ndarray:
    """Row sums by pairwise reduction with error-free two-sum transforms.

    The rounding error of every pairwise addition is recovered exactly and
    accumulated separately, so the result is as accurate as summing in
    twice the working precision.  The reduction order is fixed.
    """
    x = np.ascontiguousarray(terms, dtype=float)
    if x.ndim == 1:
        return compensated_sum(x[None, :])[0]
    rows, n = x.shape
    width = 1 << max(n - 1, 0).bit_length()
    if width != n:
        x = np.concatenate([x, np.zeros((rows, width - n))], axis=1)
    half = max(width // 2, 1)
    errors = np.zeros((rows, half))
    sums = [np.empty((rows, half)), np.empty((rows, half))]
    bv, tmp = np.empty((rows, half)), np.empty((rows, half))
    step = 0
    while width > 1:
        width //= 2
        a, b = x[:, :width], x[:, width:2 * width]
        s, v, t = sums[step % 2][:, :width], bv[:, :width], tmp[:, :width]
        np.add(a, b, out=s)
        np.subtract(s, a, out=v)
        np.subtract(b, v, out=t)
        errors[:, :width] += t
        np.subtract(s, v, out=t)
        np.subtract(a, t, out=t)
        errors[:, :width] += t
        x, step = s, step + 1
    # the recovered errors are tiny, so summing them plainly loses nothing
    return x[:, 0] + errors.sum(axis=1)


@lru_cache(maxsize=16)
def _tensor_positions(dim: int, max_degree: int) -> np.ndarray:
    """Flat index into the (max_degree+1)^dim exponent grid of every
    multi-index of total degree <= max_degree, in global order."""
    flat = [q for k in range(max_degree + 1) for q in enumerate_level(dim, k)]
    return np.ravel_multi_index(np.array(flat).T, (max_degree + 1,) * dim)


def _tensor_moments(rule: QuadratureRule, w: np.ndarray, max_degree: int) -> np.ndarray:
    """Moments on a tensor grid by contracting one axis at a time, last
    axis first.  Every contraction is a compensated sum over that axis."""
    dim = rule.dimension
    powers = [np.vander(x, max_degree + 1, increasing=True) for x in rule.axes]
    f = w.reshape(tuple(len(x) for x in rule.axes))
    for a in reversed(range(dim)):
        # f: (n_0..n_a, P_{a+1}..P_{D-1}); contract n_a against x_a^p
        f = np.moveaxis(f, a, -1)
        terms = f[..., None, :] * powers[a].T
        head = terms.shape[:-1]
        f = compensated_sum(terms.reshape(-1, terms.shape[-1])).reshape(head)
        f = np.moveaxis(f, -1, a)
    return f.ravel()[_tensor_positions(dim, max_degree)]


def moment_vector(rule: QuadratureRule, state: FlowState, max_degree: int) -> np.ndarray:
    """All moments of total degree <= max_degree in global order."""
    w = rule.weights * deformed_weight(rule.nodes, state)
    if rule.axes is not None:
        return _tensor_moments(rule, w, max_degree)
    return compensated_sum(_monomial_table(rule, max_degree) * w[None, :])


@lru_cache(maxsize=16)
def _moment_positions(dim: int, levels: int) -> np.ndarray:
    """Global index of q_i + q_j for every entry of the moment matrix."""
    flat = [q for k in range(levels) for q in enumerate_level(dim, k)]
    pos = np.empty((len(flat), len(flat)), dtype=int)
    for i, p in enumerate(flat):
        for j, q in enumerate(flat[i:], start=i):
            pos[i, j] = pos[j, i] = global_index(tuple(a + b for a, b in zip(p, q)))
    return pos


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """Moment matrix stored with ``buffer`` extra levels beyond the usable
    level count."""

    G: BlockMatrix
    levels: int
    buffer: int
    spec: MeasureSpec
    state: FlowState
    rule: QuadratureRule

    @property
    def total_levels(self) -> int:
        return self.levels + self.buffer

    @property
    def dimension(self) -> int:
        return self.spec.dimension


def moment_matrix(
    spec: MeasureSpec,
    state: FlowState,
    levels: int,
    buffer: int = DEFAULT_BUFFER,
    order: int | None = None,
    rule: QuadratureRule | None = None,
) -> MomentMatrix:
    """G = int chi chi^T d(mu deformed by state), blocks up to levels+buffer."""
    if spec.dimension != state.dimension:
        raise ValueError("measure and flow state dimensions differ")
    check_validity_region(spec, state)
    rule = rule or cached_rule(spec, order)
    total = levels + buffer
    moments = moment_vector(rule, state, 2 * (total - 1))
    g = moments[_moment_positions(spec.dimension, total)]
    g = 0.5 * (g + g.T)
    return MomentMatrix(BlockMatrix.from_levels(spec.dimension, total, g), levels, buffer, spec, state, rule)


def moment_time_derivative(mm: MomentMatrix, q_time: MultiIndex) -> BlockMatrix:
    """d G / d t_q = Lambda_q G, exact on the first total - |q| levels."""
    degree = sum(q_time)
    if degree > mm.buffer:
        raise OutOfRange(f"time of degree {degree} needs buffer >= {degree}")
    total = mm.total_levels
    product = lambda_power(q_time, total) @ mm.G
    return product.truncate(total - degree)


def discrete_step_matrix(mm: MomentMatrix, axis: int) -> BlockMatrix:
    """T_a G = (n_a . Lambda - q_a) G, exact on the first total - 1 levels."""
    if mm.buffer < 1:
        raise OutOfRange("a discrete step needs buffer >= 1")
    total = mm.total_levels
    n = mm.state.directions[axis]
    q = mm.state.offsets[axis]
    op = dot_lambda(n, total).data - q * np.eye(mm.G.shape[0])
    product = BlockMatrix(op @ mm.G.data, mm.G.row_sizes)
    return product.truncate(total - 1)


def flat_size(dim: int, levels: int) -> int:
    return level_offsets(dim, levels)[-1]
