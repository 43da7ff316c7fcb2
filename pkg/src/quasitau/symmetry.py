"""Symmetric tensor powers of linear isometries and the invariance of
orthogonal polynomial data under isometries that preserve the measure."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import block_diag

from .errors import NotOrthogonal
from .measure import FlowState
from .mindex import add_unit, enumerate_level, eval_chi_level, multinomial_matrix
from .moments import moment_matrix
from .mvopr import PolynomialSystem, cd_kernel, factorize, jacobi_matrix, poly_values
from .shift import dot_lambda, dot_lambda_block, shift_block

ORTHOGONALITY_TOL = 1e-10
INVARIANT_TIME_TOL = 1e-10


def _check_orthogonal(R: np.ndarray) -> np.ndarray:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1]:
        raise NotOrthogonal("isometry must be a square matrix")
    if np.linalg.norm(R.T @ R - np.eye(len(R))) > ORTHOGONALITY_TOL:
        raise NotOrthogonal("R^T R differs from the identity")
    return R


def symmetric_power_matrix(R, k: int) -> np.ndarray:
    """Matrix of the k-th symmetric power of R in the monomial basis e^q.

    Column i expands (R e_1)^{alpha_1} ... (R e_D)^{alpha_D} for the i-th
    multi-index alpha of level k.  Symmetric tensors multiply like
    commuting monomials, so each column is built by multiplying out the
    linear forms R e_a one factor at a time.
    """
    R = _check_orthogonal(R)
    dim = len(R)
    basis = enumerate_level(dim, k)
    out = np.zeros((len(basis), len(basis)))
    for col, alpha in enumerate(basis):
        poly = {(0,) * dim: 1.0}
        for a, power in enumerate(alpha):
            for _ in range(power):
                grown: dict[tuple[int, ...], float] = {}
                for q, c in poly.items():
                    for j in range(dim):
                        if R[j, a] != 0.0:
                            key = add_unit(q, j)
                            grown[key] = grown.get(key, 0.0) + c * R[j, a]
                poly = grown
        for q, c in poly.items():
            out[basis.position[q], col] = c
    return out


@dataclass(frozen=True, eq=False)
class IsometryAction:
    """An orthogonal map R with its symmetric powers on levels 0..levels-1."""

    R: np.ndarray
    levels: int

    def __post_init__(self):
        object.__setattr__(self, "R", _check_orthogonal(self.R))
        if self.levels < 1:
            raise ValueError("need at least one level")

    @property
    def dimension(self) -> int:
        return len(self.R)

    @cached_property
    def powers(self) -> tuple[np.ndarray, ...]:
        return tuple(symmetric_power_matrix(self.R, k) for k in range(self.levels))

    @cached_property
    def eta(self) -> tuple[np.ndarray, ...]:
        """Per-level M^{-1} [R^k] M with M the multinomial matrix."""
        out = []
        for k, power in enumerate(self.powers):
            m = np.diag(multinomial_matrix(self.dimension, k))
            out.append(power * m[None, :] / m[:, None])
        return tuple(out)

    @cached_property
    def eta_inv(self) -> tuple[np.ndarray, ...]:
        """Inverse blocks, equal to the transposed symmetric powers."""
        return tuple(p.T for p in self.powers)

    def eta_full(self, levels: int | None = None) -> np.ndarray:
        return block_diag(*self.eta[: levels or self.levels])

    def eta_inv_full(self, levels: int | None = None) -> np.ndarray:
        return block_diag(*self.eta_inv[: levels or self.levels])

    def invariant_residuals(self) -> dict[str, float]:
        """Defects of the structural identities of eta, maximized over levels."""
        orth = np.linalg.norm(self.R.T @ self.R - np.eye(self.dimension))
        metric = inverse = canonical = 0.0
        for k, (eta, power) in enumerate(zip(self.eta, self.powers)):
            m = multinomial_matrix(self.dimension, k)
            minv = np.linalg.inv(m)
            metric = max(metric, np.max(np.abs(eta.T @ m @ eta - m)))
            canonical = max(canonical, np.max(np.abs(power.T @ minv @ power - minv)))
            inverse = max(inverse, np.max(np.abs(eta @ power.T - np.eye(len(eta)))))
        return {"orthogonality": float(orth), "metric": float(metric),
                "canonical_metric": float(canonical), "inverse": float(inverse)}


def representation_residuals(R1, R2, levels: int) -> dict[str, float]:
    """eta_{R1 R2} = eta_{R1} eta_{R2} and eta_{R^-1} = eta_R^{-1}."""
    a, b = IsometryAction(R1, levels), IsometryAction(R2, levels)
    ab = IsometryAction(np.asarray(R1) @ np.asarray(R2), levels)
    a_inv = IsometryAction(np.asarray(R1).T, levels)
    product = max(np.max(np.abs(x - y @ z)) for x, y, z in zip(ab.eta, a.eta, b.eta))
    inverse = max(np.max(np.abs(x - np.linalg.inv(y))) for x, y in zip(a_inv.eta, a.eta))
    return {"product": float(product), "inverse": float(inverse)}


def chi_equivariance_residual(action: IsometryAction, x) -> float:
    """max_k |chi_k(R x) - eta_k chi_k(x)|."""
    x = np.asarray(x, dtype=float)
    rx = action.R @ x
    return float(max(
        np.max(np.abs(eval_chi_level(enumerate_level(action.dimension, k), rx)
                      - eta @ eval_chi_level(enumerate_level(action.dimension, k), x)))
        for k, eta in enumerate(action.eta)
    ))


def shift_conjugation_residual(action: IsometryAction, n) -> float:
    """|(R n).Lambda - eta (n.Lambda) eta^{-1}| on the truncation."""
    n = np.asarray(n, dtype=float)
    lhs = dot_lambda(action.R @ n, action.levels).data
    rhs = action.eta_full() @ dot_lambda(n, action.levels).data @ action.eta_inv_full()
    return float(np.max(np.abs(lhs - rhs)))


def isometry_right_inverse(action: IsometryAction, axis: int, k: int) -> np.ndarray:
    """eta_k (Lambda_axis^T)_{[k],[k-1]} eta_{k-1}^{-1}, a right inverse of
    (R e_axis . Lambda)_{[k-1],[k]}."""
    if not 1 <= k < action.levels:
        raise ValueError("level must lie in 1..levels-1")
    return action.eta[k] @ shift_block(action.dimension, axis, k - 1).T @ action.eta_inv[k - 1]


def right_inverse_residual(action: IsometryAction, axis: int) -> float:
    """max_k |(n.Lambda)_{[k-1],[k]} X_k - I| with n = R e_axis."""
    n = action.R[:, axis]
    return float(max(
        np.max(np.abs(dot_lambda_block(n, k - 1) @ isometry_right_inverse(action, axis, k)
                      - np.eye(len(action.eta[k - 1]))))
        for k in range(1, action.levels)
    ))


def _relative(diff: np.ndarray, ref: np.ndarray) -> float:
    scale = np.max(np.abs(ref))
    return float(np.max(np.abs(diff)) / (scale if scale > 0 else 1.0))


def measure_invariance_residuals(sys: PolynomialSystem, action: IsometryAction, seed: int = 0,
                                 samples: int = 5) -> dict[str, float]:
    """Relative residuals of the seven consequences of an R-invariant measure.

    Only the residuals are reported; a large value means the measure is not
    invariant under R.  Sample points are drawn from the measure's box.
    """
    L = sys.levels
    if action.levels < L or action.dimension != sys.dimension:
        raise ValueError("isometry action must cover the system's levels and dimension")
    eta, eta_inv = action.eta_full(L), action.eta_inv_full(L)
    G = sys.moments.G.truncate(L).data
    S = sys.S.data
    H = block_diag(*sys.H)
    out = {
        "moments": _relative(eta @ G @ eta.T - G, G),
        "S": _relative(eta @ S @ eta_inv - S, S),
        "H": _relative(eta @ H @ eta.T - H, H),
        "beta": max(_relative(action.eta[k] @ sys.beta[k] - sys.beta[k] @ action.eta[k - 1], sys.H[k])
                    for k in range(1, L)),
    }
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(sys.spec.lower), np.asarray(sys.spec.upper)
    pts = rng.uniform(lo, hi, size=(2 * samples, sys.dimension))
    R = action.R
    out["P"] = max(_relative(poly_values(sys, R @ x) - eta @ poly_values(sys, x), poly_values(sys, x))
                   for x in pts)
    n = rng.standard_normal(sys.dimension)
    jn = jacobi_matrix(sys, n).J.data
    jrn = jacobi_matrix(sys, R @ n).J.data
    m = jn.shape[0]
    out["jacobi"] = _relative(jrn - eta[:m, :m] @ jn @ eta_inv[:m, :m], jn)
    kernel = 0.0
    for x, y in zip(pts[:samples], pts[samples:]):
        for ell in range(1, L + 1):
            ref = cd_kernel(sys, ell, x, y)
            kernel = max(kernel, abs(cd_kernel(sys, ell, R @ x, R @ y) - ref) / max(abs(ref), 1.0))
    out["kernel"] = float(kernel)
    return out


@dataclass(frozen=True)
class TimeInvariance:
    invariant: bool
    defect: float
    flowed_residuals: dict[str, float] | None = None


def invariant_time_check(action: IsometryAction, times, sys: PolynomialSystem | None = None) -> TimeInvariance:
    """Whether the row vectors t_[k] satisfy t_[k] eta_k = t_[k].

    When a system is given and the times are invariant, the measure of that
    system is deformed by e^{t(x)} and the invariance residuals of the
    deformed factorization are returned as well.
    """
    blocks = [np.asarray(t, dtype=float).ravel() for t in times]
    if len(blocks) >= action.levels:
        raise ValueError("time levels must stay below the action's level count")
    defect = max((float(np.max(np.abs(t @ action.eta[k] - t))) if t.size else 0.0
                  for k, t in enumerate(blocks, start=1)), default=0.0)
    invariant = defect < INVARIANT_TIME_TOL
    flowed = None
    if sys is not None and invariant:
        base = sys.state
        state = FlowState(base.directions, base.offsets, base.steps, tuple(blocks))
        moments = moment_matrix(sys.spec, state, sys.levels, sys.moments.buffer, rule=sys.moments.rule)
        flowed = measure_invariance_residuals(factorize(moments), action)
    return TimeInvariance(invariant, defect, flowed)
