"""Continuous flows: finite-difference time derivatives of the factorization,
Lax and Toda equations, Miwa shifts and KP-type linear problems."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .errors import OutOfRange, StencilInstability, ValidityRegion
from .measure import FlowState, MeasureSpec, deformed_weight
from .mindex import MultiIndex, enumerate_level, eval_chi_level, multinomial_matrix
from .moments import DEFAULT_BUFFER, cached_rule, moment_matrix
from .blockmat import pseudo_inverse_full_column_rank
from .mvopr import PolynomialSystem, eval_C_all, factorize, jacobi_dense, poly_values
from .shift import dot_lambda_block, shift_block, stacked_lambda_block

# Default steps per total derivative order; Richardson extrapolation on top.
DEFAULT_STEPS = {1: 1e-4, 2: 1e-3, 3: 1e-2}
INSTABILITY_FACTOR = 1e2

# 1D central stencils (offset multiples of h, weight), error O(h^2)
_STENCILS = {
    1: ((1, 0.5), (-1, -0.5)),
    2: ((1, 1.0), (0, -2.0), (-1, 1.0)),
    3: ((2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)),
}


def unit_time(dim: int, axis: int) -> MultiIndex:
    return tuple(1 if a == axis else 0 for a in range(dim))


def pair_time(dim: int, *axes: int) -> MultiIndex:
    """Multi-index e_a + e_b (+ e_c ...)."""
    counts = Counter(axes)
    return tuple(counts.get(a, 0) for a in range(dim))


@dataclass(frozen=True)
class FlowDerivativeConfig:
    steps: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_STEPS))
    richardson: bool = True

    def __post_init__(self):
        if any(h <= 0 for h in self.steps.values()):
            raise ValueError("finite-difference steps must be positive")

    def step(self, order: int) -> float:
        return self.steps.get(order, DEFAULT_STEPS[min(order, 3)])


class FlowEngine:
    """Factorizations at perturbed times around a base flow state, cached by
    the perturbation so that stencils sharing points reuse them."""

    def __init__(self, spec: MeasureSpec, state: FlowState, levels: int,
                 buffer: int = DEFAULT_BUFFER, order: int | None = None,
                 config: FlowDerivativeConfig | None = None):
        self.spec = spec
        self.state = state
        self.levels = levels
        self.buffer = buffer
        self.order = order
        self.config = config or FlowDerivativeConfig()
        self.rule = cached_rule(spec, order)
        self._systems: dict[tuple, PolynomialSystem] = {}

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def system(self, shifts: Sequence[tuple[MultiIndex, float]] = ()) -> PolynomialSystem:
        total: dict[MultiIndex, float] = {}
        for q, delta in shifts:
            total[q] = total.get(q, 0.0) + delta
        key = tuple(sorted((q, d) for q, d in total.items() if d != 0.0))
        if key not in self._systems:
            state = self.state
            for q, delta in key:
                state = state.shift_time(q, delta)
            mm = moment_matrix(self.spec, state, self.levels, self.buffer, rule=self.rule)
            self._systems[key] = factorize(mm)
        return self._systems[key]

    @property
    def base(self) -> PolynomialSystem:
        return self.system()

    def stepped(self, axis: int, amount: int = 1) -> "FlowEngine":
        engine = FlowEngine(self.spec, self.state.step(axis, amount), self.levels, self.buffer, self.order, self.config)
        engine.rule = self.rule
        return engine

    def _difference(self, g: Callable[[list], np.ndarray], groups: list[tuple[MultiIndex, int]], h: float) -> np.ndarray:
        total = None
        for combo in product(*(_STENCILS[c] for _, c in groups)):
            weight = 1.0
            shifts = []
            for (q, c), (offset, w) in zip(groups, combo):
                weight *= w
                shifts.append((q, offset * h))
            term = weight * np.asarray(g(shifts), dtype=float)
            total = term if total is None else total + term
        order = sum(c for _, c in groups)
        return total / h ** order

    def derivative(self, f: Callable[[PolynomialSystem], np.ndarray], times: Sequence[MultiIndex],
                   step: float | None = None, richardson: bool | None = None) -> np.ndarray:
        """d^r f / dt_{times[0]} ... dt_{times[r-1]} by tensor central differences."""
        return self.shift_derivative(lambda shifts: f(self.system(shifts)), times, step, richardson)

    def shift_derivative(self, g: Callable[[list], np.ndarray], times: Sequence[MultiIndex],
                         step: float | None = None, richardson: bool | None = None) -> np.ndarray:
        """As ``derivative`` for a function of the time perturbation list,
        so that quantities combining several engines can be differentiated."""
        counts = Counter(tuple(t) for t in times)
        if any(c > 3 for c in counts.values()):
            raise OutOfRange("at most third derivatives in a single time")
        groups = sorted(counts.items())
        order = len(times)
        h = step if step is not None else self.config.step(order)
        richardson = self.config.richardson if richardson is None else richardson
        coarse = self._difference(g, groups, h)
        if not richardson:
            return coarse
        fine = self._difference(g, groups, h / 2)
        estimate = (4.0 * fine - coarse) / 3.0
        scale = max(1.0, float(np.max(np.abs(fine))))
        expected = h ** 2 * scale + np.finfo(float).eps * scale / (h / 2) ** order
        if float(np.max(np.abs(fine - coarse))) > INSTABILITY_FACTOR * expected:
            raise StencilInstability("Richardson levels disagree beyond the expected truncation error")
        return estimate


# Selectors for factor quantities


def select(quantity: str, k: int) -> Callable[[PolynomialSystem], np.ndarray]:
    if quantity == "H":
        return lambda s: s.H[k]
    if quantity == "beta":
        return lambda s: s.beta[k]
    if quantity == "beta2":
        return lambda s: s.beta2(k)
    if quantity == "beta3":
        return lambda s: s.S.block(k, k - 3)
    if quantity == "S":
        return lambda s: s.S.data
    raise ValueError(f"unknown quantity {quantity!r}")


def factor_time_derivative(engine: FlowEngine, quantity: str, k: int, times: Sequence[MultiIndex],
                           step: float | None = None, richardson: bool | None = None) -> np.ndarray:
    return engine.derivative(select(quantity, k), times, step, richardson)


def _max(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


# Lax equations and first-order relations


def lax_residuals(engine: FlowEngine, axis: int, step: float | None = None, richardson: bool | None = None) -> dict[str, float]:
    """Residuals of the first-order flow relations for the time t_{e_axis}.

    ``lax_S``: dS/dt S^{-1} + (J_a)_- on rows 0..L-2.
    ``beta``: dbeta_k/dt + H_k (Lambda_a)^T H_{k-1}^{-1}.
    ``H``: dH_k/dt H_k^{-1} - (beta_k Lambda_a - Lambda_a beta_{k+1}).
    ``beta2``, ``beta3``: higher subdiagonals of S.
    ``beta_as_stated``: dbeta_k/dt - (J_a)_{[k],[k-1]}, which does not vanish.
    """
    sys = engine.base
    dim, levels = sys.dimension, sys.levels
    t = unit_time(dim, axis)
    off = sys.offsets
    ds = engine.derivative(select("S", 0), [t], step, richardson)
    s_inv = np.linalg.inv(sys.S.data)
    jac = jacobi_dense(sys, t).data
    cut = off[levels - 1]
    # only the block strictly lower part of J enters
    mask = np.zeros((cut, cut), dtype=bool)
    for k in range(levels - 1):
        mask[off[k]:off[k + 1], :off[k]] = True
    lax_s = (ds @ s_inv)[:cut, :cut] + np.where(mask, jac[:cut, :cut], 0.0)

    out = {"lax_S": _max(lax_s)}
    beta, stated, hres, b2, b3 = [], [], [], [], []
    dbeta = {k: engine.derivative(select("beta", k), [t], step, richardson) for k in range(1, levels)}
    for k in range(1, levels):
        sub = sys.H[k] @ shift_block(dim, axis, k - 1).T @ sys.H_inv[k - 1]
        beta.append(_max(dbeta[k] + sub))
        stated.append(_max(dbeta[k] - sub))
    for k in range(levels - 1):
        dh = engine.derivative(select("H", k), [t], step, richardson)
        rhs = -shift_block(dim, axis, k) @ sys.beta[k + 1]
        if k >= 1:
            rhs = rhs + sys.beta[k] @ shift_block(dim, axis, k - 1)
        hres.append(_max(dh @ sys.H_inv[k] - rhs))
    for k in range(2, levels):
        d2 = engine.derivative(select("beta2", k), [t], step, richardson)
        b2.append(_max(d2 - dbeta[k] @ sys.beta[k - 1]))
    for k in range(3, levels):
        d3 = engine.derivative(select("beta3", k), [t], step, richardson)
        d2 = engine.derivative(select("beta2", k), [t], step, richardson)
        rhs = d2 @ sys.beta[k - 2] + dbeta[k] @ sys.beta2(k - 1) - dbeta[k] @ sys.beta[k - 1] @ sys.beta[k - 2]
        b3.append(_max(d3 - rhs))
    out.update(beta=max(beta), H=max(hres), beta_as_stated=max(stated))
    if b2:
        out["beta2"] = max(b2)
    if b3:
        out["beta3"] = max(b3)
    return out


def beta_derivative_defect(engine: FlowEngine, axis: int, k: int, step: float, richardson: bool = False) -> float:
    """|dbeta_k/dt_a + (J_a)-type block| for a convergence study in h."""
    sys = engine.base
    t = unit_time(sys.dimension, axis)
    dbeta = engine.derivative(select("beta", k), [t], step, richardson)
    sub = sys.H[k] @ shift_block(sys.dimension, axis, k - 1).T @ sys.H_inv[k - 1]
    return _max(dbeta + sub)


# Toda equations


def _log_derivative(engine: FlowEngine, k: int, t: MultiIndex) -> np.ndarray:
    sys = engine.base
    return engine.derivative(select("H", k), [t]) @ sys.H_inv[k]


def toda_equation_residual(engine: FlowEngine, a: int, b: int, k: int,
                           stepped_b: FlowEngine | None = None) -> dict[str, float]:
    """2D Toda residuals at level k for times t_{e_a}, t_{e_b}.

    ``H_form``: d/dt_b(dH_k/dt_a H_k^{-1}) against
        L_a H_{k+1} L_b^T H_k^{-1} - H_k L_b^T H_{k-1}^{-1} L_a.
    ``beta_form``: d^2 beta_k/dt_a dt_b against
        d/dt_a(beta_k L_b beta_k) - dbeta_k/dt_a beta_{k-1} L_b - L_b beta_{k+1} dbeta_k/dt_a.
    ``beta_form_as_stated``: the same with the right-hand side negated.
    With ``stepped_b`` (the engine after one discrete step in direction b)
    the two mixed difference-differential forms are added.
    """
    sys = engine.base
    dim, levels = sys.dimension, sys.levels
    if not 1 <= k <= levels - 2:
        raise OutOfRange("Toda equation needs levels k-1..k+1")
    ta, tb = unit_time(dim, a), unit_time(dim, b)
    la_up, la_down = shift_block(dim, a, k), shift_block(dim, a, k - 1)
    lb_up, lb_down = shift_block(dim, b, k), shift_block(dim, b, k - 1)
    h, hinv = sys.H, sys.H_inv

    dh_a = engine.derivative(select("H", k), [ta])
    dh_b = engine.derivative(select("H", k), [tb])
    dh_ab = engine.derivative(select("H", k), [ta, tb])
    lhs = dh_ab @ hinv[k] - dh_a @ hinv[k] @ dh_b @ hinv[k]
    rhs = la_up @ h[k + 1] @ lb_up.T @ hinv[k] - h[k] @ lb_down.T @ hinv[k - 1] @ la_down
    out = {"H_form": _max(lhs - rhs)}

    beta = sys.beta
    db_a = engine.derivative(select("beta", k), [ta])
    d2 = engine.derivative(select("beta", k), [ta, tb])
    rhs_beta = db_a @ lb_down @ beta[k] + beta[k] @ lb_down @ db_a - lb_up @ beta[k + 1] @ db_a
    if k >= 2:
        rhs_beta = rhs_beta - db_a @ beta[k - 1] @ shift_block(dim, b, k - 2)
    out["beta_form"] = _max(d2 - rhs_beta)
    out["beta_form_as_stated"] = _max(d2 + rhs_beta)

    if stepped_b is not None:
        tsys = stepped_b.base
        nb = sys.state.directions[b]
        nb_up, nb_down = dot_lambda_block(nb, k), dot_lambda_block(nb, k - 1)
        delta_log = _log_derivative(stepped_b, k, ta) - dh_a @ hinv[k]
        rhs1 = la_up @ h[k + 1] @ nb_up.T @ tsys.H_inv[k] - h[k] @ nb_down.T @ tsys.H_inv[k - 1] @ la_down
        out["difference_of_derivative"] = _max(delta_log - rhs1)

        d_ratio = engine.shift_derivative(
            lambda sh: stepped_b.system(sh).H[k] @ engine.system(sh).H_inv[k], [ta])
        rhs2 = nb_up @ h[k + 1] @ la_up.T @ hinv[k] - tsys.H[k] @ la_down.T @ tsys.H_inv[k - 1] @ nb_down
        out["derivative_of_difference"] = _max(d_ratio - rhs2)
    return out


def beta_tau_chain(engine: FlowEngine, k: int) -> dict[str, float]:
    """beta_{k+1} from logarithmic derivatives of H: one recurrence step
    (using the factorized beta_k) and the fully telescoped chain from
    beta_1 = -(grad H_0) H_0^{-1}."""
    sys = engine.base
    dim = sys.dimension
    if not 0 <= k <= sys.levels - 2:
        raise OutOfRange("chain needs beta_{k+1}")
    eye = np.eye(dim)
    grads = {}

    def grad_log(j):
        if j not in grads:
            stacked = np.vstack([engine.derivative(select("H", j), [unit_time(dim, a)]) for a in range(dim)])
            grads[j] = stacked @ sys.H_inv[j]
        return grads[j]

    def step(j, beta_j):
        left = pseudo_inverse_full_column_rank(stacked_lambda_block(eye, j))
        value = -left @ grad_log(j)
        if j >= 1:
            value = value + left @ np.kron(eye, beta_j) @ stacked_lambda_block(eye, j - 1)
        return value

    one_step = step(k, sys.beta[k] if k >= 1 else None)
    chained = None
    for j in range(k + 1):
        chained = step(j, chained)
    return {"recurrence": _max(one_step - sys.beta[k + 1]), "telescoped": _max(chained - sys.beta[k + 1])}


# Miwa shifts


def miwa_shift_vector(n, q: float, max_level: int) -> list[np.ndarray]:
    """Level blocks (1/k) M_[k] chi_[k](n/q), k = 1..max_level, so that
    t(x) = -log(1 - n.x/q)."""
    if q == 0:
        raise ValueError("q must be nonzero")
    n = np.asarray(n, dtype=float)
    dim = n.size
    return [
        multinomial_matrix(dim, k) @ eval_chi_level(enumerate_level(dim, k), n / q) / k
        for k in range(1, max_level + 1)
    ]


def miwa_consistency_check(spec: MeasureSpec, n, q: float, max_level: int, levels: int = 4,
                           order: int | None = None) -> float:
    """Max relative deviation between H blocks of the measure deformed by
    the truncated Miwa times and by the exact factor (1 - n.x/q)^{-1}."""
    n = np.asarray(n, dtype=float)
    dim = spec.dimension
    if not np.any(n):
        return 0.0
    reach = float(np.max(np.abs(spec.corners @ n)))
    if reach >= abs(q):
        raise ValidityRegion("need |n.x| < |q| on the box")
    rule = cached_rule(spec, order)
    base = FlowState.zero(dim)
    miwa = base.with_times(miwa_shift_vector(n, q, max_level))
    shifted = factorize(moment_matrix(spec, miwa, levels, 0, rule=rule))
    directions = np.vstack([n] + [e for e in np.eye(dim) if np.linalg.matrix_rank(np.vstack([n, e])) == 2][: dim - 1])
    offsets = np.array([q] + [-1e3] * (dim - 1))
    exact_state = FlowState(directions, offsets, (-1,) + (0,) * (dim - 1))
    exact = factorize(moment_matrix(spec, exact_state, levels, 0, rule=rule))
    # (n.x - q)^{-1} = -(1/q)(1 - n.x/q)^{-1}
    scale = -q
    return max(
        float(np.linalg.norm(shifted.H[k] - scale * exact.H[k]) / np.linalg.norm(scale * exact.H[k]))
        for k in range(levels)
    )


@dataclass(frozen=True)
class MiwaConvergence:
    orders: tuple[int, ...]
    deviations: tuple[float, ...]
    expected_rate: float
    rate: float
    plain_rate: float

    @property
    def relative_rate_error(self) -> float:
        return abs(self.rate / self.expected_rate - 1.0)


def miwa_convergence(spec: MeasureSpec, n, q: float, orders=tuple(range(2, 15, 2)), levels: int = 4,
                     order: int | None = None) -> MiwaConvergence:
    """Deviation of the truncated Miwa deformation against the number of
    retained levels K, with its geometric rate per unit K.

    ``rate`` comes from fitting log dev = K log rho + p log K + c, which
    absorbs the algebraic prefactor left by the series tail and by the
    measure near its extreme points; ``plain_rate`` drops the log K term.
    Even orders are the default because a measure symmetric about the
    origin pairs consecutive orders into plateaus.
    """
    n = np.asarray(n, dtype=float)
    orders = tuple(int(k) for k in orders)
    if len(orders) < 3:
        raise ValueError("need at least three truncation orders")
    reach = float(np.max(np.abs(spec.corners @ n)))
    dev = np.array([miwa_consistency_check(spec, n, q, k, levels, order) for k in orders])
    ks = np.array(orders, dtype=float)
    logs = np.log(dev)
    design = np.stack([ks, np.log(ks), np.ones_like(ks)], axis=1)
    rate = float(np.linalg.lstsq(design, logs, rcond=None)[0][0])
    plain = float(np.polyfit(ks, logs, 1)[0])
    return MiwaConvergence(orders, tuple(float(d) for d in dev), float(np.log(reach / abs(q))), rate, plain)


# KP-type linear problems and nonlinear equations at a fixed level


def _V(dbeta_a: np.ndarray, dim: int, b: int, k: int) -> np.ndarray:
    """(V_{a,b})_[k] = dbeta_k/dt_a (Lambda_b)_{[k-1],[k]}."""
    return dbeta_a @ shift_block(dim, b, k - 1)


def baker_psi1(z) -> Callable[[PolynomialSystem], np.ndarray]:
    """Psi_1(z) = e^{t(z)} prod (n.z - q)^m P(z) as a function of the system."""
    z = np.asarray(z, dtype=float)
    return lambda s: deformed_weight(z, s.state) * poly_values(s, z)


def baker_psi2(z) -> Callable[[PolynomialSystem], np.ndarray]:
    """Psi_2(z): the second-kind functions C(z), z off the support."""
    z = np.asarray(z, dtype=float)
    return lambda s: eval_C_all(s, z)


def schrodinger_residual(engine: FlowEngine, a: int, b: int, k: int, psi: Callable[[PolynomialSystem], np.ndarray]) -> float:
    """|dPsi_k/dt_(a,b) - d^2Psi_k/dt_a dt_b - U_{a,b} Psi_k|, U = -V_{a,b} - V_{b,a}."""
    sys = engine.base
    dim = sys.dimension
    if not 1 <= k < sys.levels:
        raise OutOfRange("potential needs beta_k")
    sl = sys.level_slice(k)
    comp = lambda s: psi(s)[sl]
    ta, tb, tab = unit_time(dim, a), unit_time(dim, b), pair_time(dim, a, b)
    d_ab = engine.derivative(comp, [tab])
    d_a_b = engine.derivative(comp, [ta, tb])
    db_a = engine.derivative(select("beta", k), [ta])
    db_b = engine.derivative(select("beta", k), [tb])
    u = -_V(db_a, dim, b, k) - _V(db_b, dim, a, k)
    return _max(d_ab - d_a_b - u @ comp(sys))


def polynomial_second_order_residual(engine: FlowEngine, a: int, b: int, k: int, x) -> float:
    """The second-order flow written for P: dP/dt_(a,b) = d^2P/dt_a dt_b
    + x_a dP/dt_b + x_b dP/dt_a - (V_{a,b} + V_{b,a}) P."""
    sys = engine.base
    dim = sys.dimension
    x = np.asarray(x, dtype=float)
    sl = sys.level_slice(k)
    p = lambda s: poly_values(s, x)[sl]
    ta, tb, tab = unit_time(dim, a), unit_time(dim, b), pair_time(dim, a, b)
    db_a = engine.derivative(select("beta", k), [ta])
    db_b = engine.derivative(select("beta", k), [tb])
    rhs = (engine.derivative(p, [ta, tb]) + x[a] * engine.derivative(p, [tb]) + x[b] * engine.derivative(p, [ta])
           - (_V(db_a, dim, b, k) + _V(db_b, dim, a, k)) @ p(sys))
    return _max(engine.derivative(p, [tab]) - rhs)


def normal_derivative(engine: FlowEngine, f, axis: int) -> np.ndarray:
    """d/dn_a = sum_b n_{a,b} d/dt_b."""
    sys = engine.base
    n = sys.state.directions[axis]
    return sum(n[b] * engine.derivative(f, [unit_time(sys.dimension, b)]) for b in range(sys.dimension) if n[b])


def discrete_continuous_residuals(engine: FlowEngine, stepped: FlowEngine, axis: int, k: int, x) -> dict[str, float]:
    """Link between d/dn_a and the discrete step T_a at level k.

    ``psi1``: dPsi_1/dn_a = T_a Psi_1 + (q_a - (Delta_a beta)(n_a.Lambda)) Psi_1.
    ``polynomial``: dP_k/dn_a = (n_a.x - q_a) Delta_a P_k - (Delta_a beta_k)(n_a.Lambda)_{[k-1],[k]} P_k.
    """
    sys, tsys = engine.base, stepped.base
    x = np.asarray(x, dtype=float)
    n = sys.state.directions[axis]
    q = sys.state.offsets[axis]
    sl = sys.level_slice(k)
    delta_beta = tsys.beta[k] - sys.beta[k]
    coupling = delta_beta @ dot_lambda_block(n, k - 1)
    psi = baker_psi1(x)
    lhs = normal_derivative(engine, lambda s: psi(s)[sl], axis)
    psi0 = psi(sys)[sl]
    rhs = psi(tsys)[sl] + q * psi0 - coupling @ psi0
    p = lambda s: poly_values(s, x)[sl]
    lhs_p = normal_derivative(engine, p, axis)
    rhs_p = (x @ n - q) * (p(tsys) - p(sys)) - coupling @ p(sys)
    return {"psi1": _max(lhs - rhs), "polynomial": _max(lhs_p - rhs_p)}


def link_equation_residual(engine: FlowEngine, a: int, b: int, k: int,
                  corners: dict[tuple[int, int], FlowEngine]) -> float:
    """Delta_b[dbeta/dn_a + (Delta_a beta)(q_a + (n_a.L) beta)](n_b.L)
    - Delta_a[dbeta/dn_b + (Delta_b beta)(q_b + (n_b.L) beta)](n_a.L) at level k.
    ``corners`` maps (da, db) to engines at m + da e_a + db e_b."""
    sys = engine.base
    if not 1 <= k <= sys.levels - 2:
        raise OutOfRange("needs beta_{k}")
    n = sys.state.directions
    q = sys.state.offsets

    def bracket(e: FlowEngine, stepped: FlowEngine, c: int) -> np.ndarray:
        base = e.base
        d = normal_derivative(e, select("beta", k), c)
        delta = stepped.base.beta[k] - base.beta[k]
        inner = q[c] * np.eye(delta.shape[1]) + dot_lambda_block(n[c], k - 1) @ base.beta[k]
        return d + delta @ inner

    left = (bracket(corners[(0, 1)], corners[(1, 1)], a) - bracket(corners[(0, 0)], corners[(1, 0)], a)) @ dot_lambda_block(n[b], k - 1)
    right = (bracket(corners[(1, 0)], corners[(1, 1)], b) - bracket(corners[(0, 0)], corners[(0, 1)], b)) @ dot_lambda_block(n[a], k - 1)
    return _max(left - right)


def flow_corners(engine: FlowEngine, a: int, b: int) -> dict[tuple[int, int], FlowEngine]:
    ea = engine.stepped(a)
    corners = {(0, 0): engine, (1, 0): ea}
    if a == b:
        corners[(0, 1)] = ea
        corners[(1, 1)] = ea.stepped(a)
    else:
        corners[(0, 1)] = engine.stepped(b)
        corners[(1, 1)] = ea.stepped(b)
    return corners


def _compatibility_terms(engine: FlowEngine, a: int, b: int, c: int, d: int, k: int):
    """Building blocks of the fourth-index equation at level k, with
    P_xy = d_x beta L_y + d_y beta L_x and L_x = (Lambda_x)_{[k-1],[k]}."""
    sys = engine.base
    dim = sys.dimension
    if not 1 <= k < sys.levels:
        raise OutOfRange("needs beta_k")
    beta = sys.beta[k]
    lam = {x: shift_block(dim, x, k - 1) for x in {a, b, c, d}}
    t = {x: unit_time(dim, x) for x in {a, b, c, d}}
    sel = select("beta", k)
    first = {x: engine.derivative(sel, [t[x]]) for x in {a, b, c, d}}

    def d2(x, y):
        return engine.derivative(sel, [t[x], t[y]])

    def flow_of_p(time, x, y):
        return engine.derivative(sel, [time, t[x]]) @ lam[y] + engine.derivative(sel, [time, t[y]]) @ lam[x]

    def second_of_p(u, v, x, y):
        return engine.derivative(sel, [t[u], t[v], t[x]]) @ lam[y] + engine.derivative(sel, [t[u], t[v], t[y]]) @ lam[x]

    def comm(x, y):
        return lam[x] @ beta @ lam[y] - lam[y] @ beta @ lam[x]

    lhs = flow_of_p(pair_time(dim, c, d), a, b) - flow_of_p(pair_time(dim, a, b), c, d)
    p_ab = first[a] @ lam[b] + first[b] @ lam[a]
    p_cd = first[c] @ lam[d] + first[d] @ lam[c]
    third = second_of_p(a, b, c, d) - second_of_p(c, d, a, b)
    mixed = (d2(b, c) @ comm(d, a) + d2(b, d) @ comm(c, a)
             + d2(a, c) @ comm(d, b) + d2(a, d) @ comm(c, b))
    return lhs, third, mixed, p_ab @ p_cd - p_cd @ p_ab


def flow_compatibility_residual(engine: FlowEngine, a: int, b: int, c: int, d: int, k: int) -> float:
    """Compatibility of the second-order flows t_(a,b) and t_(c,d) on Psi_1:
    d_(c,d) P_ab - d_(a,b) P_cd = -(d_a d_b P_cd - d_c d_d P_ab) - mixed + [P_ab, P_cd]."""
    lhs, third, mixed, comm = _compatibility_terms(engine, a, b, c, d, k)
    return _max(lhs - (-third - mixed + comm))


def flow_compatibility_flipped_residual(engine: FlowEngine, a: int, b: int, c: int, d: int, k: int) -> float:
    """The same equation with + on the third-order and mixed terms.  Kept
    as a diagnostic; it does not vanish in general."""
    lhs, third, mixed, comm = _compatibility_terms(engine, a, b, c, d, k)
    return _max(lhs - (third + mixed + comm))


def two_variable_compatibility_residual(engine: FlowEngine, A: int, B: int, k: int) -> float:
    """Two-variable form with x = t_A, y = t_B, s = t_(A,A), t = t_(B,B):
    beta_tx L_A - beta_sy L_B = -beta_xxy L_B + beta_xyy L_A
    + 2[beta_x L_A, beta_y L_B] - 2 beta_xy (L_B beta L_A - L_A beta L_B)."""
    sys = engine.base
    dim = sys.dimension
    if A == B:
        raise ValueError("the reduced form needs two distinct axes")
    if not 1 <= k < sys.levels:
        raise OutOfRange("needs beta_k")
    beta = sys.beta[k]
    la, lb = shift_block(dim, A, k - 1), shift_block(dim, B, k - 1)
    x, y = unit_time(dim, A), unit_time(dim, B)
    s, t = pair_time(dim, A, A), pair_time(dim, B, B)
    sel = select("beta", k)
    dv = lambda *times: engine.derivative(sel, list(times))
    bx, by = dv(x), dv(y)
    lhs = dv(t, x) @ la - dv(s, y) @ lb
    rhs = (-dv(x, x, y) @ lb + dv(x, y, y) @ la
           + 2.0 * (bx @ la @ by @ lb - by @ lb @ bx @ la)
           - 2.0 * dv(x, y) @ (lb @ beta @ la - la @ beta @ lb))
    return _max(lhs - rhs)


def _V3(dbeta_a: np.ndarray, beta: tuple, dim: int, b: int, c: int, k: int) -> np.ndarray:
    """(V_{a,b,c})_[k] = dbeta_k/dt_a (beta_{k-1} L_b - L_b beta_k) L_c."""
    middle = -shift_block(dim, b, k - 1) @ beta[k]
    if k >= 2:
        middle = middle + beta[k - 1] @ shift_block(dim, b, k - 2)
    return dbeta_a @ middle @ shift_block(dim, c, k - 1)


def third_order_residual(engine: FlowEngine, a: int, b: int, c: int, k: int,
                         psi: Callable[[PolynomialSystem], np.ndarray]) -> float:
    """Third-order linear flow for t_(a,b,c) on a Baker component at level k."""
    sys = engine.base
    dim = sys.dimension
    if not 1 <= k < sys.levels:
        raise OutOfRange("needs beta_k")
    sl = sys.level_slice(k)
    comp = lambda s: psi(s)[sl]
    t = {x: unit_time(dim, x) for x in {a, b, c}}
    sel = select("beta", k)
    first = {x: engine.derivative(sel, [t[x]]) for x in {a, b, c}}

    def V(x, y):
        return _V(first[x], dim, y, k)

    def dV(z, x, y):
        return engine.derivative(sel, [t[z], t[x]]) @ shift_block(dim, y, k - 1)

    psi0 = comp(sys)
    lhs = engine.derivative(comp, [pair_time(dim, a, b, c)])
    rhs = (engine.derivative(comp, [t[a], t[b], t[c]])
           - V(a, b) @ engine.derivative(comp, [t[c]])
           - V(c, a) @ engine.derivative(comp, [t[b]])
           - V(b, c) @ engine.derivative(comp, [t[a]])
           - (dV(c, a, b) + dV(a, b, c) + dV(b, c, a)
              + _V3(first[a], sys.beta, dim, b, c, k)
              + _V3(first[b], sys.beta, dim, c, a, k)
              + _V3(first[c], sys.beta, dim, a, b, k)) @ psi0)
    return _max(lhs - rhs)


def v3_forms_residual(engine: FlowEngine, a: int, b: int, c: int, k: int) -> float:
    """The two expressions of V_{a,b,c}: via beta_{k-1} and via d beta^(2)/dt_a."""
    sys = engine.base
    dim = sys.dimension
    if not 2 <= k < sys.levels:
        raise OutOfRange("needs beta^(2)_k")
    ta = unit_time(dim, a)
    db = engine.derivative(select("beta", k), [ta])
    db2 = engine.derivative(select("beta2", k), [ta])
    lb, lc = shift_block(dim, b, k - 1), shift_block(dim, c, k - 1)
    second = db2 @ shift_block(dim, b, k - 2) @ lc - db @ lb @ sys.beta[k] @ lc
    return _max(_V3(db, sys.beta, dim, b, c, k) - second)


def beta2_system_residuals(engine: FlowEngine, a: int, b: int, k: int) -> dict[str, float]:
    """First equation of the beta / beta^(2) system,
    d_a d_b beta^(2) L_a = d_b[d_a beta L_a beta - 1/2 d_a^2 beta + c d beta/dt_(a,a)],
    with c = 1/2 (``first``) and with c = 1/4 (``first_quarter``, which does
    not vanish in general)."""
    sys = engine.base
    dim = sys.dimension
    if not 2 <= k < sys.levels:
        raise OutOfRange("needs beta^(2)_k")
    ta, tb, taa = unit_time(dim, a), unit_time(dim, b), pair_time(dim, a, a)
    la = shift_block(dim, a, k - 1)
    sel = select("beta", k)
    lhs = engine.derivative(select("beta2", k), [ta, tb]) @ shift_block(dim, a, k - 2)
    quadratic = (engine.derivative(sel, [ta, tb]) @ la @ sys.beta[k]
                 + engine.derivative(sel, [ta]) @ la @ engine.derivative(sel, [tb]))
    rest = lhs - quadratic + 0.5 * engine.derivative(sel, [ta, ta, tb])
    second_flow = engine.derivative(sel, [taa, tb])
    return {"first": _max(rest - 0.5 * second_flow), "first_quarter": _max(rest - 0.25 * second_flow)}
