import numpy as np
import pytest

from quasitau import darboux as dx
from quasitau.errors import PoisednessFailure
from quasitau.measure import FlowState, jacobi_box, lebesgue
from quasitau.mvopr import build_system, eval_C, eval_P


@pytest.fixture(scope="module")
def plane_system():
    spec = jacobi_box(2)
    planes = dx.default_hyperplanes(spec, 2, seed=3)
    sys = build_system(spec, dx.hyperplane_state(planes, 2, steps=[0, 0]), levels=5)
    return planes, sys


def test_one_variable_oracle():
    # (x + 2) dx on [-1, 1]: TH_0 = 4, mean 1/6, TH_1 = int (x - 1/6)^2 (x + 2) dx = 11/9
    sys = build_system(lebesgue(1), levels=4)
    ch = dx.elementary_darboux(sys, dx.Hyperplane((1.0,), -2.0))
    assert ch.TH(0)[0, 0] == pytest.approx(4.0, rel=1e-13)
    assert ch.TP(0, [0.37])[0] == pytest.approx(1.0, rel=1e-13)
    assert ch.TH(1)[0, 0] == pytest.approx(11 / 9, rel=1e-12)
    assert ch.TP(1, [0.0])[0] == pytest.approx(-1 / 6, rel=1e-12)


def test_one_variable_kernel_polynomials():
    sys = build_system(lebesgue(1), levels=5)
    ch = dx.elementary_darboux(sys, dx.Hyperplane((1.0,), -1.5))
    for k in range(1, ch.levels):
        for x in (-0.8, 0.1, 0.9):
            assert dx.kernel_polynomial_1d_residual(sys, ch, k, x) < 1e-10


def test_default_hyperplanes_stay_below_the_box():
    spec = lebesgue(3)
    for plane in dx.default_hyperplanes(spec, 4, seed=1):
        values = spec.corners @ plane.n - plane.offset
        assert np.linalg.norm(plane.n) == pytest.approx(1.0)
        assert np.min(values) == pytest.approx(0.75)


def test_hyperplane_state_completion():
    planes = dx.default_hyperplanes(lebesgue(3), 1, seed=2)
    st = dx.hyperplane_state(planes, 3)
    assert st.steps == (1, 0, 0)
    assert np.all(st.offsets[1:] == -1e3)
    assert abs(np.linalg.det(st.directions)) > 1e-6


def test_christoffel_formula_matches_direct_factorization(plane_system, rng):
    planes, sys = plane_system
    for a, plane in enumerate(planes):
        stepped = dx.stepped_system(sys, np.eye(2, dtype=int)[a])
        ch = dx.elementary_darboux(sys, plane, seed=7)
        other = dx.elementary_darboux(sys, plane, seed=8)
        for k in range(ch.levels):
            assert np.allclose(ch.TH(k), stepped.H[k], rtol=1e-9, atol=1e-12)
            for x in rng.uniform(-1, 1, (3, 2)):
                direct = eval_P(stepped, k, x)
                assert np.allclose(ch.TP(k, x), direct, atol=1e-9)
                assert np.allclose(other.TP(k, x), direct, atol=1e-9)
            z = np.array([1.9, -2.3])
            assert np.allclose(ch.TC(k, z), eval_C(stepped, k, z), atol=1e-9)


def test_two_step_christoffel(plane_system, rng):
    planes, sys = plane_system
    stepped = dx.stepped_system(sys, [1, 1])
    ch = dx.m_step_christoffel(sys, planes, seed=5)
    for k in range(ch.levels):
        assert np.max(np.abs(ch.TH(k) - stepped.H[k])) / np.linalg.norm(stepped.H[k]) < 1e-7
        x = rng.uniform(-1, 1, 2)
        assert np.allclose(ch.TP(k, x), eval_P(stepped, k, x), atol=1e-8)


def test_node_sets_are_recorded(plane_system):
    planes, sys = plane_system
    ch = dx.elementary_darboux(sys, planes[0], seed=11)
    record = ch.node_sets[0].to_dict()
    assert record["seed"] == 11
    for node in np.vstack(record["nodes"]):
        assert planes[0].factor(node) == pytest.approx(0.0, abs=1e-12)


def test_poisedness_failure_is_reported():
    plane = dx.Hyperplane((1.0, 0.0), -2.0)
    with pytest.raises(PoisednessFailure):
        # a single repeated point can never give an invertible 2 x 2 sample matrix
        dx.poised_nodes([plane], [2], lambda nodes: np.ones((2, 2)), retries=3)


def test_connection_routes_and_lu_ul(plane_system):
    planes, sys = plane_system
    for a in range(2):
        stepped = dx.stepped_system(sys, np.eye(2, dtype=int)[a])
        conn = dx.connection_matrices(sys, stepped, a)
        assert max(conn.route_residuals()) < 1e-9
        assert max(dx.lu_ul_residuals(sys, stepped, a)) < 1e-9
        n, q = sys.state.directions[a], sys.state.offsets[a]
        for k in range(sys.levels - 1):
            rho, alpha = dx.resolvent_quasideterminant(sys, n, q, k)
            assert np.allclose(alpha, conn.alpha[k], atol=1e-9)


def test_kernel_transformation(plane_system, rng):
    planes, sys = plane_system
    stepped = dx.stepped_system(sys, [1, 0])
    for _ in range(3):
        x, y = rng.uniform(-1, 1, (2, 2))
        for ell in range(1, sys.levels - 1):
            assert dx.cd_transform_residual(sys, stepped, ell, x, y, 0) < 1e-10


@pytest.mark.parametrize("dim", [1, 2])
def test_quasi_tau_quotient_for_polynomials(dim):
    st = FlowState(np.eye(dim), np.full(dim, -2.0), (0,) * dim)
    sys = build_system(lebesgue(dim), st, levels=5)
    point = np.full(dim, -2.0)
    steps = dx.unit_steps(sys)
    for k in range(4):
        direct = eval_P(sys, k, point)
        assert np.allclose(dx.tau_quotient_P(sys, steps, k), direct, rtol=1e-9, atol=1e-12)


def test_quasi_tau_quotient_for_second_kind_functions():
    st = FlowState(np.eye(2), np.full(2, -3.0), (0, 0))
    sys = build_system(jacobi_box(2), st, levels=4)
    chain = dx.inverse_chain(sys)
    point = np.full(2, -3.0)
    for k in range(3):
        direct = eval_C(sys, k, point)
        assert np.max(np.abs(dx.tau_quotient_C(sys, chain, k) - direct)) < 1e-6 * max(1.0, np.max(np.abs(direct)))


def test_discrete_integrability_on_a_patch():
    planes = dx.default_hyperplanes(lebesgue(2), 2, seed=0)
    sys = build_system(lebesgue(2), dx.hyperplane_state(planes, 2, steps=[0, 0]), levels=5)
    patch = dx.lattice_patch(sys, 0, 1)
    for k in range(1, sys.levels - 2):
        res = dx.discrete_toda_residuals(patch, k)
        assert res["h_form"] < 1e-8 and res["beta_form"] < 1e-8
    lax = dx.discrete_laxzs_residuals(patch)
    assert max(lax.values()) < 1e-8


def test_literal_level_k_beta_form_is_a_control():
    planes = dx.default_hyperplanes(lebesgue(1), 1, seed=0)
    sys = build_system(lebesgue(1), dx.hyperplane_state(planes, 1, steps=[0]), levels=5)
    patch = dx.lattice_patch(sys, 0, 0)
    for k in (1, 2):
        correct = dx.discrete_toda_residuals(patch, k)["beta_form"]
        assert correct < 1e-12
        assert dx.discrete_toda_literal_beta(patch, k) > 1e4 * max(correct, 1e-16)
    two_d = build_system(lebesgue(2), dx.hyperplane_state(dx.default_hyperplanes(lebesgue(2), 2), 2, steps=[0, 0]), levels=4)
    assert dx.discrete_toda_literal_beta(dx.lattice_patch(two_d, 0, 1), 1) is None
