import math

import numpy as np
import pytest

import oracles
from quasitau.errors import PoleOnSupport, ValidityRegion
from quasitau.measure import (
    FlowState, build_quadrature, deformed_weight, integrate, jacobi_box, lebesgue,
)
from quasitau.mindex import enumerate_level
from quasitau.moments import (
    _monomial_table, compensated_sum, discrete_step_matrix, moment_matrix, moment_time_derivative,
    moment_vector,
)


def test_gauss_legendre_integrates_polynomials_exactly():
    rule = build_quadrature(lebesgue(2), 8)
    st = FlowState.zero(2)
    # int x^4 y^6 over [-1,1]^2 = (2/5)(2/7)
    assert integrate(rule, st, lambda p: p[:, 0] ** 4 * p[:, 1] ** 6) == pytest.approx(4 / 35, rel=1e-14)


def test_jacobi_half_weight_mass():
    # int sqrt(1-x^2) dx = pi/2 per axis; Gauss-Legendre converges slowly at the endpoints
    rule = build_quadrature(jacobi_box(1), 64)
    assert integrate(rule, FlowState.zero(1), lambda p: np.ones(len(p))) == pytest.approx(math.pi / 2, rel=1e-4)


def test_quadrature_order_doubling_changes_moments_negligibly():
    spec = lebesgue(2)
    st = FlowState.zero(2).with_times([np.array([0.2, -0.1]), np.array([0.05, 0.1, -0.05])])
    a = moment_vector(build_quadrature(spec, 32), st, 12)
    b = moment_vector(build_quadrature(spec, 64), st, 12)
    assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)) < 1e-12


def test_tensor_contraction_matches_node_table():
    for spec in (lebesgue(3), jacobi_box(2)):
        rule = build_quadrature(spec, 12)
        dim = spec.dimension
        st = FlowState.zero(dim).with_times([0.3 * np.ones(dim)])
        w = rule.weights * deformed_weight(rule.nodes, st)
        direct = compensated_sum(_monomial_table(rule, 8) * w[None, :])
        assert np.allclose(moment_vector(rule, st, 8), direct, rtol=1e-14, atol=1e-16)


def test_compensated_sum_is_exactly_rounded(rng):
    for n in (1, 2, 5, 100, 4097):
        x = rng.standard_normal((4, n)) * 10.0 ** rng.integers(-10, 10, (4, n))
        assert np.array_equal(compensated_sum(x), [math.fsum(r) for r in x])
    assert compensated_sum(np.array([1.0, 1e100, 1.0, -1e100])) == 2.0


def test_sign_control_outside_hyperplanes():
    spec = lebesgue(2)
    st = FlowState(np.eye(2), [-3.0, 4.0], (2, 1))
    rule = build_quadrature(spec, 16)
    w = deformed_weight(rule.nodes, st)
    assert np.all(w < 0) or np.all(w > 0)


def test_flow_state_rejects_zero_offset():
    with pytest.raises(ValueError, match="nonzero"):
        FlowState(np.eye(2), [0.0, -3.0], (0, 0))


def test_geronimus_step_needs_validity_region():
    with pytest.raises(ValidityRegion):
        moment_matrix(lebesgue(1), FlowState(np.eye(1), [-0.5], (-1,)), 3)


def test_pole_on_support_is_reported():
    with pytest.raises(PoleOnSupport):
        deformed_weight(np.array([[0.5]]), FlowState(np.eye(1), [0.5], (-1,)))


def test_one_variable_moments():
    mm = moment_matrix(lebesgue(1), FlowState.zero(1), 3, 1)
    hankel = [2.0, 0.0, 2 / 3, 0.0, 2 / 5, 0.0, 2 / 7]
    expected = np.array([[hankel[i + j] for j in range(4)] for i in range(4)])
    assert np.allclose(mm.G.data, expected, atol=1e-15)
    assert np.array_equal(mm.G.data, mm.G.data.T)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_discrete_step_matches_quadrature_of_stepped_measure(dim, rng):
    n = rng.standard_normal((dim, dim))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    st = FlowState(n, -2.5 - rng.random(dim), (0,) * dim)
    spec = jacobi_box(dim) if dim == 2 else lebesgue(dim)
    order = 32 if dim == 3 else 64
    mm = moment_matrix(spec, st, 4, 2, order)
    for a in range(dim):
        stepped = moment_matrix(spec, st.step(a), 4, 2, order)
        op = discrete_step_matrix(mm, a)
        m = op.shape[0]
        ref = stepped.G.data[:m, :m]
        assert np.max(np.abs(op.data[:, :m] - ref)) / np.max(np.abs(ref)) < 1e-11


def test_time_derivative_matches_central_differences():
    spec = lebesgue(2)
    base = FlowState.zero(2).with_times([np.array([0.2, -0.3])])
    mm = moment_matrix(spec, base, 3, 2)
    q = (1, 1)
    exact = moment_time_derivative(mm, q)
    m = exact.shape[0]
    errors = []
    for h in (1e-2, 5e-3):
        plus = moment_matrix(spec, base.shift_time(q, h), 3, 2).G.data[:m, :m]
        minus = moment_matrix(spec, base.shift_time(q, -h), 3, 2).G.data[:m, :m]
        errors.append(np.max(np.abs((plus - minus) / (2 * h) - exact.data[:, :m])))
    assert errors[1] < 1e-4
    assert 3.5 < errors[0] / errors[1] < 4.5


def test_legendre_h_from_moments():
    from quasitau.mvopr import factorize

    sys = factorize(moment_matrix(lebesgue(1), FlowState.zero(1), 5))
    for k, h in enumerate(oracles.LEGENDRE_H):
        assert sys.H[k][0, 0] == pytest.approx(float(h), rel=1e-12)
    assert len(enumerate_level(1, 4)) == 1
