"""Discrete flows: connection matrices, resolvents, sample-matrix Christoffel
formulas, quasi-tau quotients and lattice integrability residuals."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .blockmat import BlockMatrix, check_invertible, pseudo_inverse_full_column_rank, schur_complement
from .errors import DegeneratePoint, OutOfRange, PoisednessFailure
from .measure import FlowState, MeasureSpec
from .mindex import level_offsets, level_size
from .mvopr import PolynomialSystem, build_system, eval_C_all, jacobi_matrix, poly_values
from .shift import dot_lambda_block, shift_block, stacked_lambda_block

POISED_RCOND = 1e-8
DEFAULT_RETRIES = 50
POINT_MIN = 1e-10


@dataclass(frozen=True)
class Hyperplane:
    """The affine hyperplane n . x = q."""

    normal: tuple[float, ...]
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", tuple(float(v) for v in self.normal))
        object.__setattr__(self, "offset", float(self.offset))
        if not any(self.normal):
            raise ValueError("hyperplane normal must be nonzero")

    @property
    def n(self) -> np.ndarray:
        return np.array(self.normal)

    def factor(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.n - self.offset


def default_hyperplanes(spec: MeasureSpec, count: int, seed: int = 0, margin: float = 0.75) -> list[Hyperplane]:
    """Random unit normals with offsets placing every hyperplane at distance
    ``margin`` (>= 0.5) below the box along its normal."""
    rng = np.random.default_rng(seed)
    out = []
    corners = spec.corners
    for _ in range(count):
        n = rng.normal(size=spec.dimension)
        n /= np.linalg.norm(n)
        out.append(Hyperplane(n, float(np.min(corners @ n)) - margin))
    return out


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Nodes on a list of hyperplanes, ``nodes[i]`` lying on ``hyperplanes[i]``."""

    hyperplanes: tuple[Hyperplane, ...]
    nodes: tuple[np.ndarray, ...]
    seed: int
    rcond: float = float("nan")

    @property
    def points(self) -> np.ndarray:
        return np.vstack(self.nodes)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rcond": self.rcond,
            "hyperplanes": [{"normal": list(h.normal), "offset": h.offset} for h in self.hyperplanes],
            "nodes": [p.tolist() for p in self.nodes],
        }


def reciprocal_condition(a: np.ndarray) -> float:
    s = np.linalg.svd(a, compute_uv=False)
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


def hyperplane_points(plane: Hyperplane, count: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random points q n/|n|^2 + tangential combinations in [-scale, scale]."""
    n = plane.n
    base = plane.offset * n / (n @ n)
    if n.size == 1:
        return np.tile(base, (count, 1))
    tangent = np.linalg.svd(n[None, :])[2][1:]
    coeffs = rng.uniform(-scale, scale, size=(count, n.size - 1))
    return base + coeffs @ tangent


def poised_nodes(hyperplanes, counts, sample, seed: int = 0, scale: float = 1.0,
                 retries: int = DEFAULT_RETRIES) -> NodeSet:
    """Draw counts[i] nodes on hyperplanes[i] until the square sample matrix
    ``sample(list_of_node_arrays)`` has reciprocal condition above the
    threshold."""
    hyperplanes = tuple(hyperplanes)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(retries):
        nodes = tuple(hyperplane_points(h, c, rng, scale) for h, c in zip(hyperplanes, counts))
        rcond = reciprocal_condition(sample(nodes))
        if rcond > POISED_RCOND:
            return NodeSet(hyperplanes, nodes, seed, rcond)
        best = max(best, rcond)
    raise PoisednessFailure(f"no poised node set after {retries} draws (best rcond {best:.3g})")


def _level_values(sys: PolynomialSystem, points: np.ndarray, levels: range) -> np.ndarray:
    """Rows P_[k](p) for k in levels stacked, columns indexed by points."""
    values = poly_values(sys, points)
    return np.vstack([values[:, sys.level_slice(k)].T for k in levels])


def _product_lambda(normals, k: int) -> np.ndarray:
    """(prod_i n^(i).Lambda)_{[k],[k+m]}."""
    out = np.eye(level_size(len(normals[0]), k))
    for i, n in enumerate(normals):
        out = out @ dot_lambda_block(n, k + i)
    return out


@dataclass(frozen=True, eq=False)
class ChristoffelTransform:
    """Sample-matrix description of the transformation of a measure by the
    product Q(x) of the hyperplane factors.

    For each level k the node set carries |[k+i]| nodes on hyperplane i, and
    the stacked sample matrix has rows P_[k] .. P_[k+m-1] evaluated there.
    """

    system: PolynomialSystem
    hyperplanes: tuple[Hyperplane, ...]
    node_sets: tuple[NodeSet, ...]

    @property
    def steps(self) -> int:
        return len(self.hyperplanes)

    @property
    def levels(self) -> int:
        return len(self.node_sets)

    def _check_level(self, k: int):
        if not 0 <= k < self.levels:
            raise OutOfRange(f"transformed level {k} outside 0..{self.levels - 1}")

    def Q(self, x) -> float:
        return float(np.prod([h.factor(x) for h in self.hyperplanes]))

    def sample(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(stacked sample matrix, top-level sample row block)."""
        pts = self.node_sets[k].points
        m = self.steps
        return _level_values(self.system, pts, range(k, k + m)), _level_values(self.system, pts, range(k + m, k + m + 1))

    def leading_block(self, k: int) -> np.ndarray:
        return _product_lambda([h.n for h in self.hyperplanes], k)

    @cached_property
    def _coefficients(self) -> tuple[np.ndarray, ...]:
        out = []
        for k in range(self.levels):
            sigma, top = self.sample(k)
            check_invertible(sigma, "sample matrix")
            out.append(np.linalg.solve(sigma.T, top.T).T)
        return tuple(out)

    def resolvent_row(self, k: int) -> list[np.ndarray]:
        """Blocks omega_{[k],[k+j]}, j = 0..m."""
        self._check_level(k)
        lead = self.leading_block(k)
        flat = -lead @ self._coefficients[k]
        sizes = [level_size(self.system.dimension, k + j) for j in range(self.steps)]
        cuts = np.cumsum(sizes)[:-1]
        return list(np.split(flat, cuts, axis=1)) + [lead]

    def _bordered(self, k: int, column: np.ndarray) -> np.ndarray:
        """Last quasi-determinant of [[Sigma, v_low], [Sigma_top, v_top]]."""
        sigma, top = self.sample(k)
        low = column[:sigma.shape[0]]
        high = column[sigma.shape[0]:]
        bordered = np.block([[sigma, low[:, None]], [top, high[:, None]]])
        return schur_complement(bordered, sigma.shape[0])[:, 0]

    def _stack(self, flat: np.ndarray, k: int) -> np.ndarray:
        off = self.system.offsets
        return flat[off[k]:off[k + self.steps + 1]]

    def TP(self, k: int, x) -> np.ndarray:
        self._check_level(k)
        qx = self.Q(x)
        if abs(qx) < POINT_MIN:
            raise DegeneratePoint("evaluation point lies on a transformation hyperplane")
        column = self._stack(poly_values(self.system, x), k)
        return self.leading_block(k) @ self._bordered(k, column) / qx

    def TC(self, k: int, z) -> np.ndarray:
        self._check_level(k)
        column = self._stack(eval_C_all(self.system, z), k)
        return self.leading_block(k) @ self._bordered(k, column)

    def TH(self, k: int) -> np.ndarray:
        return self.resolvent_row(k)[0] @ self.system.H[k]

    def T_beta(self, k: int) -> np.ndarray:
        """Subleading coefficient of TP_[k] from omega S = TS (Q(Lambda)),
        solved level by level; only for a single step."""
        if self.steps != 1:
            raise ValueError("coefficient recovery implemented for one step")
        row = self._coefficient_row(k)
        return row[k - 1]

    def _coefficient_row(self, k: int) -> list[np.ndarray]:
        """Blocks (TS)_{[k],[j]}, j <= k, for a single hyperplane: from
        (TS)_{k,j}(-q) + (TS)_{k,j-1}(n.Lambda)_{j-1,j} = (omega S)_{k,j}."""
        sys = self.system
        plane = self.hyperplanes[0]
        omega = self.resolvent_row(k)
        s = sys.S
        out = []
        for j in range(k + 1):
            rhs = omega[0] @ s.block(k, j) + omega[1] @ s.block(k + 1, j)
            if j > 0:
                rhs = rhs - out[j - 1] @ dot_lambda_block(plane.n, j - 1)
            out.append(rhs / -plane.offset)
        return out


def christoffel_transform(sys: PolynomialSystem, hyperplanes, seed: int = 0,
                          levels: int | None = None, retries: int = DEFAULT_RETRIES) -> ChristoffelTransform:
    """Build node sets for transformed levels 0..levels-1 (default: as many
    as the factorization supports)."""
    hyperplanes = tuple(hyperplanes)
    m = len(hyperplanes)
    levels = sys.levels - m if levels is None else levels
    if levels < 1 or levels + m > sys.levels:
        raise OutOfRange("not enough factorized levels for this transformation")
    dim = sys.dimension
    node_sets = []
    for k in range(levels):
        counts = [level_size(dim, k + i) for i in range(m)]

        def sample(nodes, k=k):
            return _level_values(sys, np.vstack(nodes), range(k, k + m))

        node_sets.append(poised_nodes(hyperplanes, counts, sample, seed=seed + 7919 * k, retries=retries))
    return ChristoffelTransform(sys, hyperplanes, tuple(node_sets))


def elementary_darboux(sys: PolynomialSystem, plane: Hyperplane, seed: int = 0, levels: int | None = None) -> ChristoffelTransform:
    return christoffel_transform(sys, [plane], seed, levels)


def m_step_christoffel(sys: PolynomialSystem, planes, seed: int = 0, levels: int | None = None) -> ChristoffelTransform:
    return christoffel_transform(sys, planes, seed, levels)


def hyperplane_state(planes, dim: int, steps=None) -> FlowState:
    """Flow state whose directions are the given hyperplanes, completed with
    unit vectors so that the direction matrix stays invertible."""
    normals = [h.n for h in planes]
    offsets = [h.offset for h in planes]
    for axis in range(dim):
        if len(normals) == dim:
            break
        candidate = np.eye(dim)[axis]
        if np.linalg.matrix_rank(np.vstack(normals + [candidate])) == len(normals) + 1:
            normals.append(candidate)
            offsets.append(-1e3)
    if len(normals) != dim:
        raise ValueError("hyperplane normals are linearly dependent")
    steps = steps if steps is not None else [1] * len(planes) + [0] * (dim - len(planes))
    return FlowState(np.vstack(normals), np.array(offsets), tuple(steps))


# Connection matrices M_a and resolvents omega_a


@dataclass(frozen=True, eq=False)
class ConnectionMatrices:
    """rho_{a,[k]} (subdiagonal of M_a) and alpha_{a,[k]} (diagonal of
    omega_a), each by two routes."""

    direction: np.ndarray
    offset: float
    rho_from_H: dict[int, np.ndarray]
    rho_from_beta: dict[int, np.ndarray]
    alpha_from_H: dict[int, np.ndarray]
    alpha_from_beta: dict[int, np.ndarray]

    @property
    def rho(self) -> dict[int, np.ndarray]:
        return self.rho_from_H

    @property
    def alpha(self) -> dict[int, np.ndarray]:
        return self.alpha_from_H

    def route_residuals(self) -> tuple[float, float]:
        r = max((np.max(np.abs(self.rho_from_H[k] - self.rho_from_beta[k])) for k in self.rho_from_beta), default=0.0)
        a = max(np.max(np.abs(self.alpha_from_H[k] - self.alpha_from_beta[k])) for k in self.alpha_from_beta)
        return float(r), float(a)

    def M(self, levels: int) -> BlockMatrix:
        """Lower unitriangular bidiagonal M_a on ``levels`` levels."""
        dim = self.direction.size
        off = level_offsets(dim, levels)
        out = np.eye(off[-1])
        for k in range(1, levels):
            out[off[k]:off[k + 1], off[k - 1]:off[k]] = self.rho[k]
        return BlockMatrix.from_levels(dim, levels, out)

    def omega(self, levels: int) -> BlockMatrix:
        """Upper bidiagonal omega_a on ``levels`` levels."""
        dim = self.direction.size
        off = level_offsets(dim, levels)
        out = np.zeros((off[-1], off[-1]))
        for k in range(levels):
            out[off[k]:off[k + 1], off[k]:off[k + 1]] = self.alpha[k]
            if k + 1 < levels:
                out[off[k]:off[k + 1], off[k + 1]:off[k + 2]] = dot_lambda_block(self.direction, k)
        return BlockMatrix.from_levels(dim, levels, out)


def connection_matrices(sys: PolynomialSystem, stepped: PolynomialSystem, axis: int) -> ConnectionMatrices:
    """M_a = S (T_a S)^{-1} and omega_a = (T_a H) M_a^T H^{-1} blockwise."""
    n = sys.state.directions[axis]
    q = float(sys.state.offsets[axis])
    levels = min(sys.levels, stepped.levels)
    rho_h, rho_b, alpha_h, alpha_b = {}, {}, {}, {}
    for k in range(levels):
        alpha_h[k] = stepped.H[k] @ sys.H_inv[k]
        if k >= 1:
            down = dot_lambda_block(n, k - 1)
            rho_h[k] = sys.H[k] @ down.T @ stepped.H_inv[k - 1]
            rho_b[k] = -(stepped.beta[k] - sys.beta[k])
        if k + 1 < levels:
            value = -dot_lambda_block(n, k) @ sys.beta[k + 1] - q * np.eye(len(sys.H[k]))
            if k >= 1:
                value = value + stepped.beta[k] @ dot_lambda_block(n, k - 1)
            alpha_b[k] = value
    return ConnectionMatrices(np.asarray(n), q, rho_h, rho_b, alpha_h, alpha_b)


def resolvent_quasideterminant(sys: PolynomialSystem, n, q: float, k: int) -> tuple[np.ndarray | None, np.ndarray]:
    """(rho_[k], alpha_[k]) from last quasi-determinants of truncations of
    n.J - q, with no translated data."""
    jac = jacobi_matrix(sys, n).J
    if k + 1 > jac.nblocks[0]:
        raise OutOfRange("Jacobi truncation too short for this level")
    shifted = jac.data - q * np.eye(jac.shape[0])
    off = level_offsets(sys.dimension, k + 2)

    def last_qd(levels: int) -> np.ndarray:
        top = shifted[:off[levels], :off[levels]]
        return schur_complement(top, off[levels - 1])

    alpha = last_qd(k + 1)
    rho = None
    if k >= 1:
        pivot = last_qd(k)
        check_invertible(pivot, "quasi-determinant pivot")
        rho = jac.block(k, k - 1) @ np.linalg.inv(pivot)
    return rho, alpha


def lu_ul_residuals(sys: PolynomialSystem, stepped: PolynomialSystem, axis: int) -> tuple[float, float]:
    """||(n.J - q) - M omega|| and ||T(n.J) - q - omega M|| on the rows where
    both sides are exact."""
    conn = connection_matrices(sys, stepped, axis)
    n, q = conn.direction, conn.offset
    size = sys.levels - 1
    jac = jacobi_matrix(sys, n).J.data
    tjac = jacobi_matrix(stepped, n).J.data
    eye = np.eye(jac.shape[0])
    lu = conn.M(size).data @ conn.omega(size).data
    off = sys.offsets
    cut = off[size - 1]
    ul = conn.omega(size + 1).data @ conn.M(size + 1).data
    ul = ul[:off[size], :off[size]]
    r_lu = np.max(np.abs(jac - q * eye - lu))
    r_ul = np.max(np.abs((tjac - q * eye - ul)[:cut, :cut]))
    return float(r_lu), float(r_ul)


# Quasi-tau quotient formulas


def stepped_system(sys: PolynomialSystem, steps, order: int | None = None) -> PolynomialSystem:
    """Fresh quadrature and factorization of the measure at another lattice site."""
    mm = sys.moments
    state = sys.state.at_steps(tuple(steps))
    return build_system(mm.spec, state, sys.levels, mm.buffer, order if order is not None else mm.rule.order[0])


def unit_steps(sys: PolynomialSystem, signs=1) -> list[PolynomialSystem]:
    """The D systems T_a(sys) (or their inverses for signs=-1)."""
    base = np.array(sys.state.steps)
    eye = np.eye(sys.dimension, dtype=int)
    return [stepped_system(sys, base + signs * eye[a]) for a in range(sys.dimension)]


def tau_quotient_P(sys: PolynomialSystem, stepped: list[PolynomialSystem], k: int) -> np.ndarray:
    """P_[k](N^{-1} q) = (-1)^k prod_{j=k-1..0} [N Lambda]_j^+ [T H]_j H_[j]^{-1}."""
    if k >= sys.levels:
        raise OutOfRange("level beyond the factorization")
    directions = sys.state.directions
    value = np.ones(1)
    for j in range(k):
        stacked_h = np.vstack([s.H[j] for s in stepped])
        left = pseudo_inverse_full_column_rank(stacked_lambda_block(directions, j))
        value = left @ stacked_h @ sys.H_inv[j] @ value
    return (-1) ** k * value


def inverse_chain(sys: PolynomialSystem) -> list[PolynomialSystem]:
    """U_a = (prod_{j >= a} T_j^{-1}) sys for a = 0..D-1, then sys itself."""
    base = np.array(sys.state.steps)
    dim = sys.dimension
    chain = []
    for a in range(dim):
        steps = base.copy()
        steps[a:] -= 1
        chain.append(stepped_system(sys, steps))
    chain.append(sys)
    return chain


def tau_quotient_C(sys: PolynomialSystem, chain: list[PolynomialSystem], k: int) -> np.ndarray:
    """C_[k](q) for N = I as the sum over 1 <= a_1 <= ... <= a_k <= D of
    rho^(a_k)_[k] ... rho^(a_1)_[1] T^{-1} H_[0], with
    rho^(a)_[j] = U_a H_[j] (Lambda_a)^T U_{a+1} H_[j-1]^{-1}."""
    dim = sys.dimension
    if not np.allclose(sys.state.directions, np.eye(dim)):
        raise ValueError("second kind quotient formula assumes N = I")
    start = chain[0].H[0][:, 0]
    # partial[a]: sum over sequences whose last index is a
    partial = None
    for j in range(1, k + 1):
        new = []
        for a in range(dim):
            rho = chain[a].H[j] @ shift_block(dim, a, j - 1).T @ chain[a + 1].H_inv[j - 1]
            incoming = start if partial is None else sum(partial[:a + 1])
            new.append(rho @ incoming)
        partial = new
    total = start if partial is None else sum(partial)
    return (-1) ** (k + dim) * total


# Christoffel-Darboux kernels before and after the transformation


def _kernel(sys: PolynomialSystem, ell: int, px: np.ndarray, py: np.ndarray) -> float:
    s = sys.level_slice
    return float(sum(px[s(k)] @ sys.H_inv[k] @ py[s(k)] for k in range(ell)))


def cd_transform_residual(sys: PolynomialSystem, stepped: PolynomialSystem, ell: int, x, y, axis: int = 0) -> float:
    """|K^(l)(x,y) - (n.x - q)(TK)^(l-1)(x,y) - P_[l-1](x)^T H_[l-1]^{-1} (TP)_[l-1](y)|."""
    if not 1 <= ell <= min(sys.levels, stepped.levels):
        raise OutOfRange("kernel order outside the factorized range")
    n = sys.state.directions[axis]
    q = sys.state.offsets[axis]
    px, py = poly_values(sys, x), poly_values(sys, y)
    tpx, tpy = poly_values(stepped, x), poly_values(stepped, y)
    s = sys.level_slice
    rhs = (np.asarray(x) @ n - q) * _kernel(stepped, ell - 1, tpx, tpy)
    rhs += px[s(ell - 1)] @ sys.H_inv[ell - 1] @ tpy[s(ell - 1)]
    return abs(_kernel(sys, ell, px, py) - rhs)


def cd_transform_m_residual(sys: PolynomialSystem, transformed: PolynomialSystem, christoffel: ChristoffelTransform,
                            ell: int, x, y) -> float:
    """|K^(l+m)(x,y) - Q(x) TK^(l)(x,y)
        - sum_{k=l}^{l+m-1} sum_{j=k}^{l+m-1} TP_[k](y)^T (TH_[k])^{-1} omega_{[k],[j]} P_[j](x)|."""
    m = christoffel.steps
    if ell < 0 or ell + m - 1 >= christoffel.levels:
        raise OutOfRange("kernel order outside the transformed range")
    px, py = poly_values(sys, x), poly_values(sys, y)
    tpx, tpy = poly_values(transformed, x), poly_values(transformed, y)
    s = sys.level_slice
    rhs = christoffel.Q(x) * _kernel(transformed, ell, tpx, tpy)
    for k in range(ell, ell + m):
        omega = christoffel.resolvent_row(k)
        left = tpy[s(k)] @ transformed.H_inv[k]
        for j in range(k, ell + m):
            rhs += left @ omega[j - k] @ px[s(j)]
    return abs(_kernel(sys, ell + m, px, py) - rhs)


# Lattice identities on 2x2 patches


@dataclass(frozen=True, eq=False)
class LatticePatch:
    """Factorizations at m, m + e_a, m + e_b and m + e_a + e_b."""

    a: int
    b: int
    corners: dict[tuple[int, int], PolynomialSystem] = field(default_factory=dict)

    def at(self, da: int, db: int) -> PolynomialSystem:
        return self.corners[(da, db)]


def lattice_patch(sys: PolynomialSystem, a: int, b: int) -> LatticePatch:
    base = np.array(sys.state.steps)
    eye = np.eye(sys.dimension, dtype=int)
    corners = {}
    for da, db in product((0, 1), repeat=2):
        if (da, db) == (0, 0):
            corners[(0, 0)] = sys
        elif a == b and (da, db) != (1, 0):
            continue
        else:
            corners[(da, db)] = stepped_system(sys, base + da * eye[a] + db * eye[b])
    if a == b:
        corners[(0, 1)] = corners[(1, 0)]
        corners[(1, 1)] = stepped_system(sys, base + 2 * eye[a])
    return LatticePatch(a, b, corners)


def discrete_toda_residuals(patch: LatticePatch, k: int) -> dict[str, float]:
    """Residuals of the discrete Toda equations at level k.

    ``h_form``: Delta_b((Delta_a H_k) H_k^{-1}) against
        (n_a.L) H_{k+1} (n_b.L)^T (T_b H_k)^{-1} - (T_a H_k)(n_b.L)^T (T_a T_b H_{k-1})^{-1} (n_a.L).
    ``beta_form``: alpha_{b,k}(Delta_a beta_k) = (T_b Delta_a beta_k)(T_a alpha_{b,k-1}),
        with alpha written through beta.
    """
    sys = patch.at(0, 0)
    a, b = patch.a, patch.b
    ta, tb, tab = patch.at(1, 0), patch.at(0, 1), patch.at(1, 1)
    if not 1 <= k <= sys.levels - 2:
        raise OutOfRange("discrete Toda needs levels k-1..k+1")
    na, nb = sys.state.directions[a], sys.state.directions[b]
    qb = sys.state.offsets[b]
    up_a, down_a = dot_lambda_block(na, k), dot_lambda_block(na, k - 1)
    up_b, down_b = dot_lambda_block(nb, k), dot_lambda_block(nb, k - 1)

    lhs = (tab.H[k] @ tb.H_inv[k] - tb.H[k] @ tb.H_inv[k]) - (ta.H[k] @ sys.H_inv[k] - np.eye(len(sys.H[k])))
    rhs = up_a @ sys.H[k + 1] @ up_b.T @ tb.H_inv[k] - ta.H[k] @ down_b.T @ tab.H_inv[k - 1] @ down_a
    h_form = float(np.max(np.abs(lhs - rhs)))

    def alpha_b(s_from: PolynomialSystem, s_to: PolynomialSystem, j: int) -> np.ndarray:
        value = -dot_lambda_block(nb, j) @ s_from.beta[j + 1] - qb * np.eye(len(s_from.H[j]))
        if j >= 1:
            value = value + s_to.beta[j] @ dot_lambda_block(nb, j - 1)
        return value

    delta_a = ta.beta[k] - sys.beta[k]
    tb_delta_a = tab.beta[k] - tb.beta[k]
    beta_form = float(np.max(np.abs(alpha_b(sys, tb, k) @ delta_a - tb_delta_a @ alpha_b(ta, tab, k - 1))))
    return {"h_form": h_form, "beta_form": beta_form}


def discrete_toda_literal_beta(patch: LatticePatch, k: int) -> float | None:
    """The beta equation with both resolvent factors at level k.  Only
    dimensionally meaningful for D = 1; returns None otherwise."""
    sys = patch.at(0, 0)
    if sys.dimension != 1:
        return None
    b = patch.b
    ta, tb, tab = patch.at(1, 0), patch.at(0, 1), patch.at(1, 1)
    qb = sys.state.offsets[b]
    nb = sys.state.directions[b]

    def alpha_b(s_from, s_to):
        return s_to.beta[k] @ dot_lambda_block(nb, k - 1) - dot_lambda_block(nb, k) @ s_from.beta[k + 1] - qb

    delta_a = ta.beta[k] - sys.beta[k]
    tb_delta_a = tab.beta[k] - tb.beta[k]
    return float(np.max(np.abs(alpha_b(sys, tb) @ delta_a - tb_delta_a @ alpha_b(ta, tab))))


def discrete_laxzs_residuals(patch: LatticePatch) -> dict[str, float]:
    """Discrete Lax and Zakharov-Shabat residuals on truncation interiors.

    Products of a lower and an upper bidiagonal factor are exact on rows up
    to the truncation size minus one; the Lax comparisons therefore use one
    level less than the Jacobi truncation.
    """
    sys = patch.at(0, 0)
    a, b = patch.a, patch.b
    ta, tb, tab = patch.at(1, 0), patch.at(0, 1), patch.at(1, 1)
    na = sys.state.directions[a]
    size = sys.levels - 1
    off = sys.offsets
    cut = off[size - 1]

    conn_b = connection_matrices(sys, tb, b)
    conn_a = connection_matrices(sys, ta, a)
    conn_b_at_a = connection_matrices(ta, tab, b)
    conn_a_at_b = connection_matrices(tb, tab, a)

    jac = jacobi_matrix(sys, na).J.data
    tjac = jacobi_matrix(tb, na).J.data
    omega_b = conn_b.omega(size).data
    m_b = conn_b.M(size).data

    lax_omega = np.max(np.abs((tjac @ omega_b - omega_b @ jac)[:cut, :cut]))
    lax_m = np.max(np.abs((m_b @ tjac - jac @ m_b)[:cut, :cut]))

    full = sys.levels
    zs_omega = conn_b_at_a.omega(full).data @ conn_a.omega(full).data - conn_a_at_b.omega(full).data @ conn_b.omega(full).data
    zs_m = conn_a.M(full).data @ conn_b_at_a.M(full).data - conn_b.M(full).data @ conn_a_at_b.M(full).data
    return {
        "lax_omega": float(lax_omega),
        "lax_M": float(lax_m),
        "zs_omega": float(np.max(np.abs(zs_omega))),
        "zs_M": float(np.max(np.abs(zs_m))),
    }


def kernel_polynomial_1d_residual(sys: PolynomialSystem, christoffel: ChristoffelTransform, k: int, x) -> float:
    """TP_{k-1}(x) P_{k-1}(q) against (P_k(x) P_{k-1}(q) - P_k(q) P_{k-1}(x)) / (x - q) in one variable."""
    if sys.dimension != 1:
        raise ValueError("one-variable identity")
    q = christoffel.hyperplanes[0].offset / christoffel.hyperplanes[0].normal[0]
    px = poly_values(sys, [x])
    pq = poly_values(sys, [q])
    lhs = christoffel.TP(k - 1, [x])[0] * pq[k - 1]
    rhs = (px[k] * pq[k - 1] - pq[k] * px[k - 1]) / (x - q)
    return float(abs(lhs - rhs))
