"""Measures on boxes, tensor Gauss-Legendre quadrature and the discrete and
continuous deformations of a measure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import PoleOnSupport, ValidityRegion, WeightEvaluation
from .mindex import MultiIndex, enumerate_level, eval_chi_level

POLE_TOL = 1e-13
WEIGHT_KINDS = ("constant", "jacobi", "callback", "nodes")


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """A measure on the box prod [lower_i, upper_i].

    ``kind`` selects the weight: ``constant``; ``jacobi`` with per-axis
    exponents (1 - u)^alpha (1 + u)^beta in the coordinate u mapped to
    [-1, 1]; ``callback`` with a vectorized function of an (n, D) array;
    ``nodes`` with an explicit node/weight list that bypasses quadrature.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    kind: str = "constant"
    alpha: tuple[float, ...] = ()
    beta: tuple[float, ...] = ()
    callback: Callable[[np.ndarray], np.ndarray] | None = None
    nodes: np.ndarray | None = None
    weights: np.ndarray | None = None
    description: str = ""

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("box bounds must have equal, positive length")
        if not all(np.isfinite(self.lower)) or not all(np.isfinite(self.upper)):
            raise ValueError("box bounds must be finite")
        if any(a >= b for a, b in zip(self.lower, self.upper)):
            raise ValueError("each lower bound must be below its upper bound")
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "jacobi" and (len(self.alpha) != self.dimension or len(self.beta) != self.dimension):
            raise ValueError("jacobi weight needs one alpha and one beta per axis")
        if self.kind == "callback" and self.callback is None:
            raise ValueError("callback weight needs a callback")
        if self.kind == "nodes" and (self.nodes is None or self.weights is None):
            raise ValueError("explicit rule needs nodes and weights")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*zip(self.lower, self.upper), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return (2.0 * x - (lo + hi)) / (hi - lo)

    def weight(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "constant":
            return np.ones(len(x))
        if self.kind == "jacobi":
            u = self.to_unit(x)
            a, b = np.asarray(self.alpha), np.asarray(self.beta)
            return np.prod((1.0 - u) ** a * (1.0 + u) ** b, axis=1)
        if self.kind == "callback":
            return np.asarray(self.callback(x), dtype=float).reshape(len(x))
        raise ValueError("explicit node rules carry their own weights")


def lebesgue(dim: int, radius: float = 1.0) -> MeasureSpec:
    return MeasureSpec((-radius,) * dim, (radius,) * dim, description=f"Lebesgue on [-{radius},{radius}]^{dim}")


def jacobi_box(dim: int, alpha: float = 0.5, beta: float = 0.5) -> MeasureSpec:
    return MeasureSpec(
        (-1.0,) * dim, (1.0,) * dim, kind="jacobi",
        alpha=(alpha,) * dim, beta=(beta,) * dim,
        description=f"Jacobi({alpha},{beta}) product weight on [-1,1]^{dim}",
    )


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: tuple[int, ...]
    axes: tuple[np.ndarray, ...] | None = None  # per-axis nodes of a tensor grid

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]


def default_order(dim: int) -> int:
    return 64 if dim <= 2 else 32


def build_quadrature(spec: MeasureSpec, per_axis_order: int | None = None) -> QuadratureRule:
    """Tensor Gauss-Legendre rule on the box with the weight folded into the
    quadrature weights.  The last axis varies fastest."""
    if spec.kind == "nodes":
        nodes = np.atleast_2d(np.asarray(spec.nodes, dtype=float))
        weights = np.asarray(spec.weights, dtype=float).ravel()
        return QuadratureRule(nodes, weights, (len(weights),))
    order = per_axis_order or default_order(spec.dimension)
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    t, w = np.polynomial.legendre.leggauss(order)
    axes_x, axes_w = [], []
    for lo, hi in zip(spec.lower, spec.upper):
        axes_x.append(0.5 * (hi - lo) * t + 0.5 * (hi + lo))
        axes_w.append(0.5 * (hi - lo) * w)
    grid_x = np.meshgrid(*axes_x, indexing="ij")
    grid_w = np.meshgrid(*axes_w, indexing="ij")
    nodes = np.stack([g.ravel() for g in grid_x], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in grid_w], axis=1), axis=1)
    values = spec.weight(nodes)
    if not np.all(np.isfinite(values)):
        raise WeightEvaluation("weight is not finite at some quadrature node")
    return QuadratureRule(nodes, weights * values, (order,) * spec.dimension, tuple(axes_x))


@dataclass(frozen=True, eq=False)
class FlowState:
    """Position on the discrete lattice and in continuous time.

    ``directions`` holds the vectors n_a as rows, ``offsets`` the q_a,
    ``steps`` the integers m_a and ``times[k-1]`` the coefficient vector of
    level k, so that t(x) = sum_k times[k-1] . chi_[k](x).
    """

    directions: np.ndarray
    offsets: np.ndarray
    steps: tuple[int, ...]
    times: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        n = np.atleast_2d(np.asarray(self.directions, dtype=float))
        q = np.asarray(self.offsets, dtype=float).ravel()
        dim = n.shape[0]
        if n.shape != (dim, dim):
            raise ValueError("direction matrix must be square")
        if abs(np.linalg.det(n)) < 1e-12:
            raise ValueError("direction matrix must be invertible")
        if q.size != dim or np.any(q == 0.0):
            raise ValueError("offsets q_a must be nonzero, one per direction")
        if len(self.steps) != dim:
            raise ValueError("need one step count per direction")
        times = tuple(np.asarray(t, dtype=float).ravel() for t in self.times)
        for k, t in enumerate(times, start=1):
            if t.size != len(enumerate_level(dim, k)):
                raise ValueError(f"time block of level {k} has wrong length {t.size}")
        object.__setattr__(self, "directions", n)
        object.__setattr__(self, "offsets", q)
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        object.__setattr__(self, "times", times)

    @classmethod
    def zero(cls, dim: int, offsets=None, directions=None, max_level: int = 3) -> "FlowState":
        n = np.eye(dim) if directions is None else directions
        q = np.full(dim, -3.0) if offsets is None else offsets
        times = tuple(np.zeros(len(enumerate_level(dim, k))) for k in range(1, max_level + 1))
        return cls(n, q, (0,) * dim, times)

    @property
    def dimension(self) -> int:
        return self.directions.shape[0]

    def step(self, axis: int, amount: int = 1) -> "FlowState":
        steps = list(self.steps)
        steps[axis] += amount
        return replace(self, steps=tuple(steps))

    def at_steps(self, steps) -> "FlowState":
        return replace(self, steps=tuple(steps))

    def with_times(self, times) -> "FlowState":
        return replace(self, times=tuple(times))

    def shift_time(self, q: MultiIndex, delta: float) -> "FlowState":
        """Add delta to the time coefficient of the monomial x^q."""
        k = sum(q)
        if k < 1:
            raise ValueError("level-0 time is a trivial rescaling and is not stored")
        times = list(self.times)
        while len(times) < k:
            times.append(np.zeros(len(enumerate_level(self.dimension, len(times) + 1))))
        block = times[k - 1].copy()
        block[enumerate_level(self.dimension, k).position[tuple(q)]] += delta
        times[k - 1] = block
        return replace(self, times=tuple(times))

    def time_function(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros(len(x))
        for k, t in enumerate(self.times, start=1):
            if np.any(t):
                out += eval_chi_level(enumerate_level(self.dimension, k), x) @ t
        return out


def deformed_weight(x, state: FlowState) -> np.ndarray:
    """e^{t(x)} prod_a (n_a . x - q_a)^{m_a} at one point or at each row of x."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.exp(state.time_function(pts))
    for n, q, m in zip(state.directions, state.offsets, state.steps):
        if m == 0:
            continue
        factor = pts @ n - q
        if m < 0 and np.any(np.abs(factor) < POLE_TOL):
            raise PoleOnSupport("negative-power Darboux factor vanishes at a node")
        out = out * factor ** m
    return out if np.ndim(x) > 1 else out[0]


def check_validity_region(spec: MeasureSpec, state: FlowState) -> None:
    """Geronimus steps need |n_a . x| < |q_a| on the whole box."""
    corners = spec.corners
    for n, q, m in zip(state.directions, state.offsets, state.steps):
        if m < 0 and np.max(np.abs(corners @ n)) >= abs(q):
            raise ValidityRegion("support box is not inside |n_a . x| < |q_a|")


def integrate(rule: QuadratureRule, state: FlowState, f: Callable[[np.ndarray], np.ndarray]):
    """Quadrature of f against the deformed measure.  f maps the (n, D) node
    array to n values, or to an (n, m) array for m integrals at once.
    Sums are exactly rounded (math.fsum) and so independent of node order."""
    w = rule.weights * deformed_weight(rule.nodes, state)
    values = np.asarray(f(rule.nodes), dtype=float)
    if values.ndim == 1:
        return math.fsum(w * values)
    terms = w[:, None] * values.reshape(len(w), -1)
    return np.array([math.fsum(col) for col in terms.T]).reshape(values.shape[1:])
