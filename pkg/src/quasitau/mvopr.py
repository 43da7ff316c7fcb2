"""Orthogonal polynomials from the block factorization: evaluation, second
kind functions, Jacobi matrices, recursion and kernel identities."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .blockmat import BlockMatrix, CholeskyFactors, block_ldl_factorize, schur_complement
from .errors import DegenerateDirection, OutOfRange, TooCloseToSupport
from .measure import FlowState, MeasureSpec, deformed_weight
from .mindex import enumerate_level, eval_chi_level, level_offsets
from .moments import DEFAULT_BUFFER, MomentMatrix, compensated_sum, moment_matrix
from .shift import dot_lambda_block, lambda_power

CAUCHY_MIN_DISTANCE = 1e-6
DIRECTION_MIN = 1e-8


@dataclass(frozen=True, eq=False)
class PolynomialSystem:
    """Factorization of a moment matrix truncated at ``levels`` levels."""

    moments: MomentMatrix
    factors: CholeskyFactors

    @property
    def levels(self) -> int:
        return self.factors.levels

    @property
    def dimension(self) -> int:
        return self.moments.dimension

    @property
    def H(self) -> tuple[np.ndarray, ...]:
        return self.factors.H

    @property
    def beta(self) -> tuple[np.ndarray | None, ...]:
        return self.factors.beta

    @property
    def S(self) -> BlockMatrix:
        return self.factors.S

    @property
    def spec(self) -> MeasureSpec:
        return self.moments.spec

    @property
    def state(self) -> FlowState:
        return self.moments.state

    @cached_property
    def H_inv(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linalg.inv(h) for h in self.H)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        return level_offsets(self.dimension, self.levels)

    @cached_property
    def measure_weights(self) -> np.ndarray:
        """Quadrature weights of the deformed measure."""
        rule = self.moments.rule
        return rule.weights * deformed_weight(rule.nodes, self.state)

    @cached_property
    def node_values(self) -> np.ndarray:
        """All polynomials at all quadrature nodes, shape (nodes, total)."""
        return poly_values(self, self.moments.rule.nodes)

    def beta2(self, k: int) -> np.ndarray:
        """Second subdiagonal block S_{[k],[k-2]}."""
        return self.S.block(k, k - 2)

    def level_slice(self, k: int) -> slice:
        return slice(self.offsets[k], self.offsets[k + 1])


def factorize(mm: MomentMatrix) -> PolynomialSystem:
    return PolynomialSystem(mm, block_ldl_factorize(mm.G.truncate(mm.levels)))


def build_system(
    spec: MeasureSpec,
    state: FlowState | None = None,
    levels: int = 5,
    buffer: int = DEFAULT_BUFFER,
    order: int | None = None,
) -> PolynomialSystem:
    state = state or FlowState.zero(spec.dimension)
    return factorize(moment_matrix(spec, state, levels, buffer, order))


def _chi_flat(dim: int, levels: int, x: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [eval_chi_level(enumerate_level(dim, k), x) for k in range(levels)], axis=-1
    )


def poly_values(sys: PolynomialSystem, x) -> np.ndarray:
    """P(x) = S chi(x) for all stored levels, flattened along the last axis."""
    return _chi_flat(sys.dimension, sys.levels, np.asarray(x, dtype=float)) @ sys.S.data.T


def eval_P(sys: PolynomialSystem, k: int, x) -> np.ndarray:
    if not 0 <= k < sys.levels:
        raise OutOfRange(f"level {k} outside 0..{sys.levels - 1}")
    x = np.asarray(x, dtype=float)
    chi = _chi_flat(sys.dimension, k + 1, x)
    rows = sys.S.data[sys.offsets[k]:sys.offsets[k + 1], :sys.offsets[k + 1]]
    return chi @ rows.T


def eval_P_quasideterminant(mm: MomentMatrix, ell: int, x) -> np.ndarray:
    """chi_[l](x) - (G_{[l],[0]} ... G_{[l],[l-1]}) (G^{[l]})^{-1} chi^{[l]}(x),
    as the last quasi-determinant of the moment truncation bordered by chi."""
    dim = mm.dimension
    off = level_offsets(dim, ell + 1)
    chi = _chi_flat(dim, ell + 1, np.asarray(x, dtype=float))
    g = mm.G.data[:off[ell], :off[ell]]
    row = mm.G.data[off[ell]:off[ell + 1], :off[ell]]
    bordered = np.block([[g, chi[:off[ell], None]], [row, chi[off[ell]:, None]]])
    return schur_complement(bordered, off[ell])[:, 0]


def orthogonality_residuals(sys: PolynomialSystem) -> dict[tuple[int, int], float]:
    """max |int P_k P_l^T dmu - delta_{kl} H_k| / ||H_k|| for l <= k."""
    values = sys.node_values
    w = sys.measure_weights
    out = {}
    for k in range(sys.levels):
        pk = values[:, sys.level_slice(k)]
        scale = np.linalg.norm(sys.H[k])
        for ell in range(k + 1):
            pl = values[:, sys.level_slice(ell)]
            terms = (pk[:, :, None] * pl[:, None, :] * w[:, None, None]).reshape(len(w), -1)
            gram = compensated_sum(terms.T).reshape(pk.shape[1], pl.shape[1])
            target = sys.H[k] if ell == k else 0.0
            out[(k, ell)] = float(np.max(np.abs(gram - target)) / scale)
    return out


@dataclass(frozen=True, eq=False)
class JacobiTruncation:
    """n . J on levels 0..levels-1 (one fewer than the factorization)."""

    direction: np.ndarray
    J: BlockMatrix

    @property
    def levels(self) -> int:
        return self.J.nblocks[0]


def jacobi_blocks(sys: PolynomialSystem, n, k: int) -> tuple[np.ndarray | None, np.ndarray, np.ndarray]:
    """Sub-diagonal, diagonal and super-diagonal blocks of row k of n.J."""
    if k + 1 >= sys.levels:
        raise OutOfRange(f"row {k} of the Jacobi matrix needs beta_[{k + 1}]")
    n = np.asarray(n, dtype=float)
    up = dot_lambda_block(n, k)
    diag = -up @ sys.beta[k + 1]
    sub = None
    if k > 0:
        down = dot_lambda_block(n, k - 1)
        diag = diag + sys.beta[k] @ down
        sub = sys.H[k] @ down.T @ sys.H_inv[k - 1]
    return sub, diag, up


def jacobi_matrix(sys: PolynomialSystem, n) -> JacobiTruncation:
    """Block tridiagonal n.J assembled from H, beta and shift blocks."""
    n = np.asarray(n, dtype=float)
    size = sys.levels - 1
    if size < 1:
        raise OutOfRange("need at least two factorized levels")
    off = level_offsets(sys.dimension, size)
    out = np.zeros((off[-1], off[-1]))
    for k in range(size):
        sub, diag, up = jacobi_blocks(sys, n, k)
        out[off[k]:off[k + 1], off[k]:off[k + 1]] = diag
        if sub is not None:
            out[off[k]:off[k + 1], off[k - 1]:off[k]] = sub
        if k + 1 < size:
            out[off[k]:off[k + 1], off[k + 1]:off[k + 2]] = up
    return JacobiTruncation(n, BlockMatrix.from_levels(sys.dimension, size, out))


def jacobi_dense(sys: PolynomialSystem, kvec) -> BlockMatrix:
    """S Lambda_k S^{-1} restricted to the levels where the truncated
    product is exact."""
    degree = sum(kvec)
    size = sys.levels - degree
    if size < 1:
        raise OutOfRange("not enough levels for this shift")
    s = sys.S.data
    s_inv = np.linalg.inv(s)
    full = s @ lambda_power(kvec, sys.levels).data @ s_inv
    off = sys.offsets
    return BlockMatrix.from_levels(sys.dimension, size, full[:off[size], :off[size]])


def three_term_residual(sys: PolynomialSystem, n, k: int, x) -> float:
    """|(n.x) P_k - [H_k (nL)^T H_{k-1}^{-1} P_{k-1} + (b_k nL - nL b_{k+1}) P_k + nL P_{k+1}]|.
    At k = 0 the first term is absent."""
    if not 0 <= k <= sys.levels - 2:
        raise OutOfRange("three-term relation needs levels k-1..k+1")
    n = np.asarray(n, dtype=float)
    x = np.asarray(x, dtype=float)
    p = [eval_P(sys, j, x) if j >= 0 else None for j in (k - 1, k, k + 1)]
    sub, diag, up = jacobi_blocks(sys, n, k)
    rhs = diag @ p[1] + up @ p[2]
    if sub is not None:
        rhs = rhs + sub @ p[0]
    return float(np.linalg.norm((n @ x) * p[1] - rhs))


def cd_kernel(sys: PolynomialSystem, ell: int, x, y) -> float:
    if not 0 <= ell <= sys.levels:
        raise OutOfRange(f"kernel order {ell} outside 0..{sys.levels}")
    return float(sum(eval_P(sys, k, x) @ sys.H_inv[k] @ eval_P(sys, k, y) for k in range(ell)))


def cd_kernel_at_nodes(sys: PolynomialSystem, ell: int, x) -> np.ndarray:
    """K^(l)(x, y_j) for every quadrature node y_j."""
    px = poly_values(sys, x)
    values = sys.node_values
    out = np.zeros(len(values))
    for k in range(ell):
        s = sys.level_slice(k)
        out += values[:, s] @ (sys.H_inv[k] @ px[s])
    return out


def cd_formula_rhs(sys: PolynomialSystem, ell: int, n, x, y) -> float:
    n = np.asarray(n, dtype=float)
    denom = float(n @ (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if abs(denom) < DIRECTION_MIN:
        raise DegenerateDirection("n.(x - y) is too close to zero")
    a = dot_lambda_block(n, ell - 1)
    hinv = sys.H_inv[ell - 1]
    px_up, py_up = eval_P(sys, ell, x), eval_P(sys, ell, y)
    px, py = eval_P(sys, ell - 1, x), eval_P(sys, ell - 1, y)
    return float(((a @ px_up) @ hinv @ py - px @ hinv @ (a @ py_up)) / denom)


def cd_formula_residual(sys: PolynomialSystem, ell: int, n, x, y) -> float:
    if not 1 <= ell <= sys.levels - 1:
        raise OutOfRange("kernel formula needs P_[l]")
    return abs(cd_kernel(sys, ell, x, y) - cd_formula_rhs(sys, ell, n, x, y))


def reproducing_residual(sys: PolynomialSystem, ell: int, x, y) -> float:
    """|int K(x,z) K(z,y) dmu(z) - K(x,y)|."""
    kx = cd_kernel_at_nodes(sys, ell, x)
    ky = cd_kernel_at_nodes(sys, ell, y)
    integral = compensated_sum(kx * ky * sys.measure_weights)
    return abs(float(integral) - cd_kernel(sys, ell, x, y))


def projection_residual(sys: PolynomialSystem, ell: int, coefficients: np.ndarray, x) -> float:
    """|int K(x,y) p(y) dmu(y) - p(x)| for p = coefficients . chi^{[l]}."""
    dim = sys.dimension
    coefficients = np.asarray(coefficients, dtype=float)
    p_nodes = _chi_flat(dim, ell, sys.moments.rule.nodes) @ coefficients
    p_x = _chi_flat(dim, ell, np.asarray(x, dtype=float)) @ coefficients
    kx = cd_kernel_at_nodes(sys, ell, x)
    return abs(float(compensated_sum(kx * p_nodes * sys.measure_weights)) - p_x)


def _cauchy_weights(sys: PolynomialSystem, z, axes, weights=None) -> np.ndarray:
    """w_j / prod_{a in axes} (z_a - y_{j,a})."""
    z = np.asarray(z, dtype=float)
    nodes = sys.moments.rule.nodes
    w = sys.measure_weights if weights is None else weights
    if not axes:
        return w
    lo, hi = np.asarray(sys.spec.lower)[axes], np.asarray(sys.spec.upper)[axes]
    za = z[list(axes)]
    clearance = np.maximum(lo - za, za - hi)
    if np.min(clearance) <= CAUCHY_MIN_DISTANCE:
        raise TooCloseToSupport("every used coordinate of z must lie outside the support interval")
    gaps = np.prod(za[None, :] - nodes[:, list(axes)], axis=1)
    return w / gaps


def eval_C(sys: PolynomialSystem, k: int, z) -> np.ndarray:
    """Second kind function int P_k(y) / prod_a (z_a - y_a) dmu(y)."""
    return eval_C_reduced(sys, k, (), z)


def eval_C_reduced(sys: PolynomialSystem, k: int, removed_axes, z) -> np.ndarray:
    """Cauchy transform with the listed axes dropped from the denominator;
    the corresponding coordinates of z are ignored."""
    removed = set(removed_axes)
    axes = [a for a in range(sys.dimension) if a not in removed]
    cw = _cauchy_weights(sys, z, axes)
    values = sys.node_values[:, sys.level_slice(k)]
    return compensated_sum((values * cw[:, None]).T)


def eval_C_all(sys: PolynomialSystem, z, removed_axes=()) -> np.ndarray:
    """Flattened second kind functions for every stored level."""
    removed = set(removed_axes)
    axes = [a for a in range(sys.dimension) if a not in removed]
    cw = _cauchy_weights(sys, z, axes)
    return compensated_sum((sys.node_values * cw[:, None]).T)


def eval_monomial_cauchy(sys: PolynomialSystem, z) -> np.ndarray:
    """Cauchy transforms of all monomials; C = S Gamma."""
    cw = _cauchy_weights(sys, z, list(range(sys.dimension)))
    chi = _chi_flat(sys.dimension, sys.levels, sys.moments.rule.nodes)
    return compensated_sum((chi * cw[:, None]).T)


def reduced_direction_sum(sys: PolynomialSystem, n, z) -> np.ndarray:
    """n . C_hat(z) = sum_a n_a C_hat_a(z), flattened over levels."""
    n = np.asarray(n, dtype=float)
    out = np.zeros(sys.offsets[-1])
    for a, na in enumerate(n):
        if na:
            out += na * eval_C_all(sys, z, (a,))
    return out


def secondkind_three_term_residual(sys: PolynomialSystem, n, k: int, z, reduced_sign: float = 1.0) -> float:
    """|(n.z) C_k - [n.J C]_k - s n.C_hat_k| with s = reduced_sign.

    The identity holds with s = +1: from Lambda_a Gamma = z_a Gamma - Gamma_hat_a
    one gets J_a C = z_a C - C_hat_a.
    """
    if not 0 <= k <= sys.levels - 2:
        raise OutOfRange("recursion needs levels k-1..k+1")
    n = np.asarray(n, dtype=float)
    z = np.asarray(z, dtype=float)
    c = eval_C_all(sys, z)
    chat = reduced_direction_sum(sys, n, z)
    sub, diag, up = jacobi_blocks(sys, n, k)
    s = sys.level_slice
    rhs = diag @ c[s(k)] + up @ c[s(k + 1)] + reduced_sign * chat[s(k)]
    if sub is not None:
        rhs = rhs + sub @ c[s(k - 1)]
    return float(np.linalg.norm((n @ z) * c[s(k)] - rhs))


def q_kernel(sys: PolynomialSystem, ell: int, x, y) -> float:
    cx, cy = eval_C_all(sys, x), eval_C_all(sys, y)
    s = sys.level_slice
    return float(sum(cx[s(k)] @ sys.H_inv[k] @ cy[s(k)] for k in range(ell)))


def q_kernel_rhs(sys: PolynomialSystem, ell: int, n, x, y) -> float:
    n = np.asarray(n, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    denom = float(n @ (x - y))
    if abs(denom) < DIRECTION_MIN:
        raise DegenerateDirection("n.(x - y) is too close to zero")
    cx, cy = eval_C_all(sys, x), eval_C_all(sys, y)
    hx, hy = reduced_direction_sum(sys, n, x), reduced_direction_sum(sys, n, y)
    s = sys.level_slice
    a = dot_lambda_block(n, ell - 1)
    hinv = sys.H_inv[ell - 1]
    top = (a @ cx[s(ell)]) @ hinv @ cy[s(ell - 1)] - cx[s(ell - 1)] @ hinv @ (a @ cy[s(ell)])
    reduced = sum(hx[s(k)] @ sys.H_inv[k] @ cy[s(k)] - cx[s(k)] @ sys.H_inv[k] @ hy[s(k)] for k in range(ell))
    return float((top + reduced) / denom)


def q_kernel_residual(sys: PolynomialSystem, ell: int, n, x, y) -> float:
    if not 1 <= ell <= sys.levels - 1:
        raise OutOfRange("second kind kernel formula needs C_[l]")
    return abs(q_kernel(sys, ell, x, y) - q_kernel_rhs(sys, ell, n, x, y))


@dataclass(frozen=True)
class BakerFunctions:
    """Flattened Baker vectors over the stored levels."""

    psi1: np.ndarray
    psi2: np.ndarray
    psi1_adjoint: np.ndarray
    psi2_adjoint: np.ndarray


def h_inverse_apply(sys: PolynomialSystem, v: np.ndarray) -> np.ndarray:
    s = sys.level_slice
    return np.concatenate([sys.H_inv[k] @ v[s(k)] for k in range(sys.levels)])


def baker_functions(sys: PolynomialSystem, z) -> BakerFunctions:
    """psi1 = e^{t(z)} prod (n_a.z - q_a)^{m_a} P(z); psi2 = C(z);
    psi2* = H^{-1} P(z); psi1* = H^{-1} times the Cauchy transform of P
    against the undeformed measure."""
    z = np.asarray(z, dtype=float)
    p = poly_values(sys, z)
    psi1 = deformed_weight(z, sys.state) * p
    psi2 = eval_C_all(sys, z)
    raw = sys.moments.rule.weights
    cw = _cauchy_weights(sys, z, list(range(sys.dimension)), weights=raw)
    undeformed = compensated_sum((sys.node_values * cw[:, None]).T)
    return BakerFunctions(psi1, psi2, h_inverse_apply(sys, undeformed), h_inverse_apply(sys, p))
