"""Named identity suites.  Each suite builds the systems it needs from a run
configuration and returns one Check per identity, holding the largest
residual over the levels and sample points it visited."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.linalg import block_diag

from . import darboux as dx
from . import symmetry as sm
from . import toda as td
from .blockmat import last_quasi_determinant
from .config import SUITE_NAMES, RunConfig
from .measure import FlowState, MeasureSpec
from .mindex import level_size
from .mvopr import (
    PolynomialSystem, build_system, cd_formula_residual, eval_C, eval_C_all, eval_monomial_cauchy, eval_P,
    eval_P_quasideterminant, orthogonality_residuals, poly_values, projection_residual, q_kernel_residual,
    reproducing_residual, secondkind_three_term_residual, three_term_residual,
)

SAMPLE_POINTS = 20
TIME_AMPLITUDE = 0.3


@dataclass(frozen=True)
class Check:
    identity: str
    anchor: str
    residual: float
    tolerance: float
    levels: int

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual < self.tolerance)


def _scaled(residual: float, scale: float) -> float:
    """Absolute for O(1) quantities, relative for large ones."""
    return float(residual) / max(1.0, float(scale))


@dataclass(eq=False)
class SuiteContext:
    config: RunConfig
    suite: str
    checks: list[Check] = field(default_factory=list)

    @property
    def spec(self) -> MeasureSpec:
        return self.config.spec

    @property
    def dim(self) -> int:
        return self.config.dimension

    @property
    def levels(self) -> int:
        return self.config.levels

    @cached_property
    def rng(self) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, SUITE_NAMES.index(self.suite)])

    def build(self, state: FlowState | None = None, levels: int | None = None) -> PolynomialSystem:
        return build_system(self.spec, state or self.config.state, levels or self.levels,
                            self.config.buffer, self.config.quadrature_order)

    @cached_property
    def system(self) -> PolynomialSystem:
        return self.build()

    def inside(self, count: int) -> np.ndarray:
        lo, hi = np.asarray(self.spec.lower), np.asarray(self.spec.upper)
        return self.rng.uniform(lo, hi, size=(count, self.dim))

    def outside(self, count: int) -> np.ndarray:
        """Points with every coordinate 0.5 to 2 outside the box interval."""
        lo, hi = np.asarray(self.spec.lower), np.asarray(self.spec.upper)
        gap = self.rng.uniform(0.5, 2.0, size=(count, self.dim))
        above = self.rng.random((count, self.dim)) < 0.5
        return np.where(above, hi + gap, lo - gap)

    def generic_times(self) -> tuple[np.ndarray, ...]:
        """The configured times, or seeded ones when none are nonzero, so
        that flow identities are not trivially satisfied at a symmetric
        point."""
        times = self.config.state.times
        if any(np.any(t) for t in times):
            return times
        rng = np.random.default_rng([self.config.seed, 1000])
        return tuple(TIME_AMPLITUDE * rng.uniform(-1, 1, level_size(self.dim, k)) for k in range(1, 4))

    def engine(self, state: FlowState | None = None, steps: dict | None = None) -> td.FlowEngine:
        state = (state or self.config.state).with_times(self.generic_times())
        cfg = td.FlowDerivativeConfig(steps) if steps else None
        return td.FlowEngine(self.spec, state, self.levels, self.config.buffer, self.config.quadrature_order, cfg)

    def add(self, identity: str, anchor: str, residual: float, tolerance: float, levels: int | None = None):
        self.checks.append(Check(identity, anchor, float(residual), tolerance * self.config.tolerance_scale,
                                 levels or self.levels))


def _max(values) -> float:
    values = list(values)
    return float(max(values)) if values else 0.0


def suite_orthogonality(ctx: SuiteContext):
    sys = ctx.system
    G = sys.moments.G.truncate(sys.levels).data
    S = sys.S.data
    H = block_diag(*sys.H)
    ctx.add("factorization S G S^T = H", "block Cholesky factorization of the moment matrix",
            np.linalg.norm(S @ G @ S.T - H) / np.linalg.norm(G), 1e-11)
    ctx.add("orthogonality of P", "orthogonality relations with norms H",
            _max(orthogonality_residuals(sys).values()), 1e-10)


def suite_quasidet(ctx: SuiteContext):
    sys = ctx.system
    G = sys.moments.G
    ctx.add("H_k as last quasi-determinant", "quasi-tau matrices as quasi-determinants",
            _max(np.max(np.abs(sys.H[k] - last_quasi_determinant(G.truncate(k + 1)))) / np.linalg.norm(sys.H[k])
                 for k in range(sys.levels)), 1e-10)
    worst = 0.0
    for x in ctx.inside(5):
        for ell in range(sys.levels):
            p = eval_P(sys, ell, x)
            worst = max(worst, _scaled(np.max(np.abs(p - eval_P_quasideterminant(sys.moments, ell, x))),
                                       np.max(np.abs(p))))
    ctx.add("P_k as quasi-determinant", "MVOPR as last quasi-determinants of bordered truncations", worst, 1e-10)


def suite_three_term(ctx: SuiteContext):
    sys = ctx.system
    first = second = 0.0
    for x, z in zip(ctx.inside(SAMPLE_POINTS), ctx.outside(SAMPLE_POINTS)):
        n = ctx.rng.standard_normal(ctx.dim)
        pv, cv = poly_values(sys, x), eval_C_all(sys, z)
        for k in range(sys.levels - 1):
            first = max(first, _scaled(three_term_residual(sys, n, k, x), np.max(np.abs(pv))))
            second = max(second, _scaled(secondkind_three_term_residual(sys, n, k, z), np.max(np.abs(cv))))
    ctx.add("three-term relation for P", "three-term relations with the Jacobi matrix", first, 1e-10)
    ctx.add("three-term relation for C", "three-term relations for second kind functions", second, 1e-8)


def _random_pairs(ctx: SuiteContext, count: int):
    """Pairs (x, y) with n.(x - y) bounded away from zero."""
    out = []
    while len(out) < count:
        x, y = ctx.inside(2)
        n = ctx.rng.standard_normal(ctx.dim)
        if abs(n @ (x - y)) > 0.1:
            out.append((n, x, y))
    return out


def suite_cd(ctx: SuiteContext):
    sys = ctx.system
    formula = reproducing = projection = 0.0
    for n, x, y in _random_pairs(ctx, 5):
        for ell in range(1, sys.levels):
            formula = max(formula, cd_formula_residual(sys, ell, n, x, y))
        for ell in range(1, sys.levels + 1):
            reproducing = max(reproducing, reproducing_residual(sys, ell, x, y))
            coeffs = ctx.rng.standard_normal(sys.offsets[ell])
            projection = max(projection, _scaled(projection_residual(sys, ell, coeffs, x), np.abs(coeffs).sum()))
    ctx.add("Christoffel-Darboux formula", "Christoffel-Darboux formula for the kernel", formula, 1e-9)
    ctx.add("kernel reproducing property", "reproducing property of the kernel", reproducing, 1e-9)
    ctx.add("projection onto degree < l", "kernel as projector onto lower degree polynomials", projection, 1e-9)


def suite_secondkind(ctx: SuiteContext):
    sys = ctx.system
    routes = kernel = 0.0
    zs = ctx.outside(10)
    for z in zs:
        c = eval_C_all(sys, z)
        routes = max(routes, _scaled(np.max(np.abs(c - sys.S.data @ eval_monomial_cauchy(sys, z))),
                                     np.max(np.abs(c))))
    for z, w in zip(zs[:5], zs[5:]):
        n = ctx.rng.standard_normal(ctx.dim)
        if abs(n @ (z - w)) < 0.1:
            continue
        for ell in range(1, sys.levels):
            kernel = max(kernel, q_kernel_residual(sys, ell, n, z, w))
    ctx.add("C as S times monomial Cauchy transforms", "second kind functions as Cauchy transforms", routes, 1e-10)
    ctx.add("second kind Christoffel-Darboux formula", "Christoffel-Darboux formula for second kind functions",
            kernel, 1e-7)


def _hyperplane_setup(ctx: SuiteContext):
    planes = dx.default_hyperplanes(ctx.spec, ctx.dim, seed=ctx.config.seed)
    state = dx.hyperplane_state(planes, ctx.dim, steps=[0] * ctx.dim)
    return planes, ctx.build(state)


def _reach(spec: MeasureSpec) -> np.ndarray:
    return np.max(np.abs(np.stack([spec.lower, spec.upper])), axis=0)


def suite_darboux(ctx: SuiteContext):
    planes, sys = _hyperplane_setup(ctx)
    routes = luul = resolvent = cdt = 0.0
    for a in range(ctx.dim):
        stepped = dx.stepped_system(sys, np.eye(ctx.dim, dtype=int)[a], ctx.config.quadrature_order)
        conn = dx.connection_matrices(sys, stepped, a)
        routes = max(routes, *conn.route_residuals())
        luul = max(luul, *dx.lu_ul_residuals(sys, stepped, a))
        n, q = sys.state.directions[a], sys.state.offsets[a]
        for k in range(sys.levels - 1):
            rho, alpha = dx.resolvent_quasideterminant(sys, n, q, k)
            resolvent = max(resolvent, np.max(np.abs(alpha - conn.alpha[k])))
            if rho is not None:
                resolvent = max(resolvent, np.max(np.abs(rho - conn.rho[k])))
        for _, x, y in _random_pairs(ctx, 3):
            for ell in range(1, sys.levels - 1):
                cdt = max(cdt, dx.cd_transform_residual(sys, stepped, ell, x, y, a))
    ctx.add("connection coefficients by two routes", "resolvents from H and from beta", routes, 1e-8)
    ctx.add("LU and UL factorizations", "LU factorization of n.J - q and its UL interchange", luul, 1e-8)
    ctx.add("resolvents as quasi-determinants", "quasi-determinants of truncated n.J - q", resolvent, 1e-8)
    ctx.add("kernel before and after one step", "translated and non translated kernels", cdt, 1e-9)

    reach = _reach(ctx.spec)
    kmax = min(3, ctx.levels - 1)
    p_state = FlowState(np.eye(ctx.dim), -2.0 * reach, (0,) * ctx.dim)
    p_sys = ctx.build(p_state)
    point = -2.0 * reach
    ptau = _max(_scaled(np.max(np.abs(dx.tau_quotient_P(p_sys, dx.unit_steps(p_sys), k) - eval_P(p_sys, k, point))),
                        np.max(np.abs(eval_P(p_sys, k, point))))
                for k in range(kmax + 1))
    ctx.add("P at N^-1 q from quasi-tau quotients", "MVOPR through quasi-tau matrices", ptau, 1e-8, kmax + 1)
    c_state = FlowState(np.eye(ctx.dim), -3.0 * reach, (0,) * ctx.dim)
    c_sys = ctx.build(c_state, min(ctx.levels, 4))
    chain = dx.inverse_chain(c_sys)
    cpoint = -3.0 * reach
    kc = min(2, c_sys.levels - 1)
    ctau = _max(_scaled(np.max(np.abs(dx.tau_quotient_C(c_sys, chain, k) - eval_C(c_sys, k, cpoint))),
                        np.max(np.abs(eval_C(c_sys, k, cpoint))))
                for k in range(kc + 1))
    ctx.add("C at q from quasi-tau quotients", "second kind functions through quasi-tau matrices", ctau, 1e-6, kc + 1)


def suite_christoffel(ctx: SuiteContext):
    planes, sys = _hyperplane_setup(ctx)
    seed = ctx.config.seed
    tp = th = tb = tc = nodes = 0.0
    xs, zs = ctx.inside(3), ctx.outside(3)
    for a, plane in enumerate(planes):
        stepped = dx.stepped_system(sys, np.eye(ctx.dim, dtype=int)[a], ctx.config.quadrature_order)
        ch = dx.elementary_darboux(sys, plane, seed=seed)
        other = dx.elementary_darboux(sys, plane, seed=seed + 1)
        for k in range(ch.levels):
            th = max(th, np.max(np.abs(ch.TH(k) - stepped.H[k])) / np.linalg.norm(stepped.H[k]))
            if k >= 1:
                tb = max(tb, _scaled(np.max(np.abs(ch.T_beta(k) - stepped.beta[k])), np.max(np.abs(stepped.beta[k]))))
            for x, z in zip(xs, zs):
                direct = eval_P(stepped, k, x)
                tp = max(tp, _scaled(np.max(np.abs(ch.TP(k, x) - direct)), np.max(np.abs(direct))))
                nodes = max(nodes, _scaled(np.max(np.abs(ch.TP(k, x) - other.TP(k, x))), np.max(np.abs(direct))))
                cz = eval_C(stepped, k, z)
                tc = max(tc, _scaled(np.max(np.abs(ch.TC(k, z) - cz)), np.max(np.abs(cz))))
    anchor = "quasi-determinantal Christoffel formula"
    ctx.add("elementary step: TP", anchor, tp, 1e-8)
    ctx.add("elementary step: TH", anchor, th, 1e-8)
    ctx.add("elementary step: T beta", anchor, tb, 1e-8)
    ctx.add("elementary step: TC", anchor, tc, 1e-8)
    ctx.add("independence of the node set", "sample matrix trick with poised nodes", nodes, 1e-7)

    if ctx.dim >= 2 and ctx.levels >= 4:
        pair = planes[:2]
        steps = [1, 1] + [0] * (ctx.dim - 2)
        stepped2 = dx.stepped_system(sys, steps, ctx.config.quadrature_order)
        ch2 = dx.m_step_christoffel(sys, pair, seed=seed)
        two = two_th = kernel = 0.0
        for k in range(ch2.levels):
            two_th = max(two_th, np.max(np.abs(ch2.TH(k) - stepped2.H[k])) / np.linalg.norm(stepped2.H[k]))
            for x in xs:
                direct = eval_P(stepped2, k, x)
                two = max(two, _scaled(np.max(np.abs(ch2.TP(k, x) - direct)), np.max(np.abs(direct))))
        for _, x, y in _random_pairs(ctx, 3):
            for ell in range(0, ch2.levels - 1):
                kernel = max(kernel, dx.cd_transform_m_residual(sys, stepped2, ch2, ell, x, y))
        ctx.add("two steps: TP", anchor, two, 1e-7)
        ctx.add("two steps: TH", anchor, two_th, 1e-7)
        ctx.add("kernel before and after two steps", "kernels after and before m elementary steps", kernel, 1e-7)
    if ctx.dim == 1:
        ch = dx.elementary_darboux(sys, planes[0], seed=seed)
        kp = _max(dx.kernel_polynomial_1d_residual(sys, ch, k, x[0]) for k in range(1, ch.levels) for x in xs)
        ctx.add("one-variable kernel polynomials", "kernel polynomials in one variable", kp, 1e-10)


def suite_discrete_toda(ctx: SuiteContext):
    sys = ctx.system
    b = 1 if ctx.dim >= 2 else 0
    patch = dx.lattice_patch(sys, 0, b)
    res = [dx.discrete_toda_residuals(patch, k) for k in range(1, sys.levels - 2)]
    ctx.add("discrete Toda, H form", "discrete Toda equations", _max(r["h_form"] for r in res), 1e-8)
    ctx.add("discrete Toda, beta form", "discrete Toda equations", _max(r["beta_form"] for r in res), 1e-8)
    lax = dx.discrete_laxzs_residuals(patch)
    ctx.add("discrete Lax equations", "discrete Lax equations", max(lax["lax_omega"], lax["lax_M"]), 1e-8)
    ctx.add("discrete Zakharov-Shabat equations", "discrete Zakharov-Shabat equations",
            max(lax["zs_omega"], lax["zs_M"]), 1e-8)


def suite_lax(ctx: SuiteContext):
    engine = ctx.engine()
    res = [td.lax_residuals(engine, a) for a in range(ctx.dim)]
    anchor = "Lax equations for the continuous flows"
    ctx.add("dS/dt S^-1 = -(J_a)_-", anchor, _max(r["lax_S"] for r in res), 1e-6)
    ctx.add("dbeta/dt_a", "differential relations for beta", _max(r["beta"] for r in res), 1e-6)
    ctx.add("dH/dt_a H^-1", "differential relations for H", _max(r["H"] for r in res), 1e-6)
    if ctx.levels >= 3:
        ctx.add("dbeta2/dt_a", "higher subdiagonals of S", _max(r["beta2"] for r in res), 1e-6)
    if ctx.levels >= 4:
        ctx.add("dbeta3/dt_a", "higher subdiagonals of S", _max(r["beta3"] for r in res), 1e-6)


def suite_toda(ctx: SuiteContext):
    engine = ctx.engine()
    b = 1 if ctx.dim >= 2 else 0
    stepped = engine.stepped(b)
    res = [td.toda_equation_residual(engine, 0, b, k, stepped) for k in range(1, ctx.levels - 1)]
    anchor = "2D Toda lattice type equations"
    ctx.add("2D Toda, H form", anchor, _max(r["H_form"] for r in res), 1e-5)
    ctx.add("2D Toda, beta form", anchor, _max(r["beta_form"] for r in res), 1e-5)
    ctx.add("difference of a time derivative", "mixed difference-differential equations",
            _max(r["difference_of_derivative"] for r in res), 1e-5)
    ctx.add("time derivative of a difference", "mixed difference-differential equations",
            _max(r["derivative_of_difference"] for r in res), 1e-5)
    chain = [td.beta_tau_chain(engine, k) for k in range(ctx.levels - 1)]
    ctx.add("beta from log-derivatives of H", "beta through quasi-tau matrices",
            _max(max(c.values()) for c in chain), 1e-6)
    k = min(2, ctx.levels - 1)
    defects = [td.beta_derivative_defect(engine, 0, k, h) for h in (0.08, 0.04, 0.02)]
    ratios = [defects[i] / defects[i + 1] for i in range(2)]
    ctx.add("order-2 convergence of dbeta/dt (|ratio - 4|)", "differential relations for beta",
            max(abs(r - 4.0) for r in ratios), 0.5, k + 1)
    ctx.add("dbeta/dt defect at h = 1e-4", "differential relations for beta",
            td.beta_derivative_defect(engine, 0, k, 1e-4), 1e-6, k + 1)


def suite_miwa(ctx: SuiteContext):
    n = ctx.config.state.directions[0]
    n = n / np.linalg.norm(n)
    reach = float(np.max(np.abs(ctx.spec.corners @ n)))
    q = 3.0 * reach
    conv = td.miwa_convergence(ctx.spec, n, q, levels=min(4, ctx.levels), order=ctx.config.quadrature_order)
    at8 = conv.deviations[conv.orders.index(8)]
    ctx.add("truncated Miwa shift at K = 8", "Miwa shifts as continuous Darboux steps", at8, 1e-3)
    ctx.add("geometric rate vs log(r/|q|) (relative)", "Miwa shifts as continuous Darboux steps",
            conv.relative_rate_error, 0.2)


def suite_kp(ctx: SuiteContext):
    engine = ctx.engine()
    dim = ctx.dim
    b = 1 if dim >= 2 else 0
    x = ctx.inside(1)[0]
    z = ctx.outside(1)[0]
    top = ctx.levels - 1
    pairs = [(0, 0), (0, b)] if b else [(0, 0)]
    schr = poly = 0.0
    for a, c in pairs:
        for k in range(1, top):
            schr = max(schr, td.schrodinger_residual(engine, a, c, k, td.baker_psi1(x)),
                       td.schrodinger_residual(engine, a, c, k, td.baker_psi2(z)))
            poly = max(poly, td.polynomial_second_order_residual(engine, a, c, k, x))
    ctx.add("second-order flow on Psi_1 and Psi_2", "Schrodinger type linear equations", schr, 1e-5)
    ctx.add("second-order flow on P", "Schrodinger type equations for the MVOPR", poly, 1e-5)
    link = _max(max(td.discrete_continuous_residuals(engine, engine.stepped(a), a, k, x).values())
                for a in range(dim) for k in range(1, top))
    ctx.add("normal derivative and discrete step", "derivative along n and the Darboux step", link, 1e-5)
    corners = td.flow_corners(engine, 0, b)
    link_eq = _max(td.link_equation_residual(engine, 0, b, k, corners) for k in range(1, min(top, 4)))
    ctx.add("nonlinear equation for beta from the discrete link", "equation for beta from congruences", link_eq, 1e-5)
    kmax = min(top, 4)
    quads = [(0, 0, b, b), (0, b, b, b)] if b else [(0, 0, 0, 0)]
    compat = _max(td.flow_compatibility_residual(engine, *quad, k) for quad in quads for k in range(1, kmax))
    anchor4 = "compatibility of second-order flows"
    ctx.add("fourth-index equation for beta", anchor4, compat, 1e-4)
    if b:
        reduced = _max(td.two_variable_compatibility_residual(engine, 0, b, k) for k in range(1, kmax))
        ctx.add("two-variable form of the fourth-index equation", anchor4, reduced, 1e-4)
    triples = [(0, b, b), (0, 0, 0)]
    third = _max(max(td.third_order_residual(engine, *t, k, td.baker_psi1(x)),
                     td.third_order_residual(engine, *t, k, td.baker_psi2(z)))
                 for t in triples for k in range(1, kmax))
    ctx.add("third-order flow on Psi_1 and Psi_2", "third order linear equations", third, 1e-4)
    if ctx.levels >= 3:
        v3 = _max(td.v3_forms_residual(engine, 0, b, 0, k) for k in range(2, top + 1))
        ctx.add("two expressions of V_abc", "third order potentials", v3, 1e-6)
        first = _max(td.beta2_system_residuals(engine, a, c, k)["first"]
                     for a, c in pairs for k in range(2, kmax))
        ctx.add("beta / beta2 system, first equation", "equations for beta and beta2", first, 1e-5)


def _box_symmetries(spec: MeasureSpec) -> list[tuple[str, np.ndarray]]:
    """Reflections, coordinate swaps and quarter-turns that map the box and weight onto
    themselves exactly."""
    dim = spec.dimension
    if spec.kind not in ("constant", "jacobi"):
        return []
    lo, hi = np.asarray(spec.lower), np.asarray(spec.upper)
    alpha = np.asarray(spec.alpha) if spec.kind == "jacobi" else np.zeros(dim)
    beta = np.asarray(spec.beta) if spec.kind == "jacobi" else np.zeros(dim)
    out = []
    for a in range(dim):
        if lo[a] == -hi[a] and alpha[a] == beta[a]:
            flip = np.eye(dim)
            flip[a, a] = -1.0
            out.append((f"reflection of axis {a}", flip))
        for c in range(a + 1, dim):
            same = lo[a] == lo[c] and hi[a] == hi[c] and alpha[a] == alpha[c] and beta[a] == beta[c]
            if not same:
                continue
            swap = np.eye(dim)
            swap[[a, c]] = swap[[c, a]]
            out.append((f"swap of axes {a},{c}", swap))
            centred = lo[a] == -hi[a] and alpha[a] == beta[a]
            if centred:
                turn = np.eye(dim)
                turn[a, a] = turn[c, c] = 0.0
                turn[a, c], turn[c, a] = -1.0, 1.0
                out.append((f"quarter-turn in axes {a},{c}", turn))
    return out


def _random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def suite_symmetry(ctx: SuiteContext):
    L = ctx.levels
    r1, r2 = _random_orthogonal(ctx.rng, ctx.dim), _random_orthogonal(ctx.rng, ctx.dim)
    action = sm.IsometryAction(r1, L)
    inv = action.invariant_residuals()
    ctx.add("eta preserves the multinomial metric", "eta_R = M^-1 [R] M", max(inv["metric"], inv["canonical_metric"]), 1e-10)
    ctx.add("inverse of eta is [R]^T", "relations between eta_R and [R]", inv["inverse"], 1e-10)
    rep = sm.representation_residuals(r1, r2, L)
    ctx.add("eta is a representation", "eta_R = M^-1 [R] M", max(rep.values()), 1e-10)
    x = ctx.inside(1)[0]
    n = ctx.rng.standard_normal(ctx.dim)
    ctx.add("chi(Rx) = eta chi(x)", "monomials under isometries", sm.chi_equivariance_residual(action, x), 1e-11)
    ctx.add("shift conjugation by eta", "monomials under isometries", sm.shift_conjugation_residual(action, n), 1e-10)
    ctx.add("right inverse of n.Lambda through eta", "right inverse via an isometry",
            sm.right_inverse_residual(action, 0), 1e-10)
    sys = ctx.system
    for name, R in _box_symmetries(ctx.spec):
        res = sm.measure_invariance_residuals(sys, sm.IsometryAction(R, L), seed=ctx.config.seed)
        for key, value in res.items():
            ctx.add(f"{name}: {key} invariance", "consequences of an invariant measure", value, 1e-10)
    sym = sorted(_box_symmetries(ctx.spec), key=lambda item: not item[0].startswith("swap"))
    if sym:
        name, R = sym[0]
        act = sm.IsometryAction(R, L)
        times = _invariant_times(act, ctx.dim)
        check = sm.invariant_time_check(act, times, sys)
        ctx.add(f"{name}: flow with invariant times", "time flows that keep the invariance",
                max(check.defect, *check.flowed_residuals.values()), 1e-10)
        lo, hi = ctx.spec.lower, ctx.spec.upper
        skew = MeasureSpec(lo, hi, kind="jacobi", alpha=(0.0,) * ctx.dim, beta=tuple(2.0 * (i + 1) for i in range(ctx.dim)))
        control = sm.measure_invariance_residuals(build_system(skew, levels=L, order=ctx.config.quadrature_order), act)
        ctx.add(f"{name}: asymmetric weight detected (1e-3 / P residual)", "negative control",
                1e-3 / max(control["P"], 1e-300), 1.0)


def _invariant_times(action: sm.IsometryAction, dim: int) -> list[np.ndarray]:
    """Average a fixed time vector over eta^0..eta^3, which gives t eta = t
    for the swaps and quarter-turns used here (both have order dividing 4)."""
    out = []
    for k in range(1, min(3, action.levels - 1) + 1):
        t = 0.1 * np.arange(1, level_size(dim, k) + 1, dtype=float)
        acc, power = np.zeros_like(t), np.eye(len(t))
        for _ in range(4):
            acc += t @ power
            power = power @ action.eta[k]
        out.append(acc / 4.0)
    return out


SUITES: dict[str, Callable[[SuiteContext], None]] = {
    "orthogonality": suite_orthogonality,
    "quasidet": suite_quasidet,
    "three-term": suite_three_term,
    "cd": suite_cd,
    "secondkind": suite_secondkind,
    "darboux": suite_darboux,
    "christoffel": suite_christoffel,
    "discrete-toda": suite_discrete_toda,
    "lax": suite_lax,
    "toda": suite_toda,
    "miwa": suite_miwa,
    "kp": suite_kp,
    "symmetry": suite_symmetry,
}


def run_suite(config: RunConfig, name: str) -> list[Check]:
    ctx = SuiteContext(config, name)
    SUITES[name](ctx)
    return ctx.checks
