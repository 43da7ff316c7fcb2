import numpy as np
import pytest

import oracles
from quasitau.errors import DegenerateDirection, OutOfRange, TooCloseToSupport
from quasitau.measure import FlowState, jacobi_box, lebesgue
from quasitau.mindex import enumerate_level
from quasitau.mvopr import (
    build_system, cd_formula_residual, cd_kernel, eval_C, eval_C_all, eval_C_reduced, eval_monomial_cauchy,
    eval_P, eval_P_quasideterminant, jacobi_matrix, orthogonality_residuals, poly_values, projection_residual,
    q_kernel_residual, reproducing_residual, secondkind_three_term_residual, three_term_residual,
)


@pytest.fixture(scope="module")
def leg1():
    return build_system(lebesgue(1), levels=5)


@pytest.fixture(scope="module")
def leg2():
    return build_system(lebesgue(2), levels=4)


@pytest.fixture(scope="module")
def jac2():
    return build_system(jacobi_box(2), levels=4)


def test_legendre_norms(leg1):
    assert [h[0, 0] for h in leg1.H] == pytest.approx([float(h) for h in oracles.LEGENDRE_H], rel=1e-12)


def test_legendre_cubic_coefficients(leg1):
    row = leg1.S.data[3, :4][::-1]
    assert row == pytest.approx([float(c) for c in oracles.LEGENDRE_P3], abs=1e-13)


def test_chebyshev_second_kind_norms():
    sys = build_system(jacobi_box(1), levels=4, order=256)
    # endpoint singularity of the derivative limits Gauss-Legendre accuracy
    assert [h[0, 0] for h in sys.H] == pytest.approx(oracles.monic_chebyshev_u_norms(4), rel=1e-5)


def test_tensor_measure_gives_product_norms(leg2):
    h = [float(v) for v in oracles.LEGENDRE_H]
    for k in range(4):
        expected = np.diag([h[a] * h[b] for a, b in enumerate_level(2, k)])
        assert np.allclose(leg2.H[k], expected, atol=1e-13)


def test_symmetric_box_has_vanishing_first_beta(leg2, jac2):
    assert np.allclose(leg2.beta[1], 0.0, atol=1e-14)
    assert np.allclose(jac2.beta[1], 0.0, atol=1e-14)


def test_monic_leading_terms(leg2):
    assert np.allclose(np.diag(leg2.S.data), 1.0)


@pytest.mark.parametrize("fixture", ["leg2", "jac2"])
def test_orthogonality(fixture, request):
    sys = request.getfixturevalue(fixture)
    assert max(orthogonality_residuals(sys).values()) < 1e-10


def test_quasideterminant_route(jac2, rng):
    for x in rng.uniform(-1, 1, (4, 2)):
        for ell in range(jac2.levels):
            assert np.allclose(eval_P_quasideterminant(jac2.moments, ell, x), eval_P(jac2, ell, x), atol=1e-11)


def test_three_term_relations(jac2, rng):
    for _ in range(5):
        n, x = rng.standard_normal(2), rng.uniform(-1, 1, 2)
        z = np.array([1.5, -1.7]) + np.array([1.0, -1.0]) * rng.random(2)
        for k in range(jac2.levels - 1):
            assert three_term_residual(jac2, n, k, x) < 1e-12
            assert secondkind_three_term_residual(jac2, n, k, z) < 1e-9


def test_second_kind_three_term_needs_the_reduced_term(jac2):
    z, n = np.array([1.6, 2.1]), np.array([0.3, -0.8])
    assert secondkind_three_term_residual(jac2, n, 0, z, reduced_sign=-1.0) > 1e-3


def test_jacobi_matrix_multiplies_polynomials(leg2, rng):
    n, x = rng.standard_normal(2), rng.uniform(-1, 1, 2)
    J = jacobi_matrix(leg2, n).J.data
    p = poly_values(leg2, x)
    m = J.shape[0]
    # only the last block row involves the missing level
    size_last = len(enumerate_level(2, leg2.levels - 2))
    lhs = (n @ x) * p[:m]
    rhs = J @ p[:m]
    assert np.allclose(lhs[: m - size_last], rhs[: m - size_last], atol=1e-12)


def test_cauchy_transform_oracle(leg1):
    for z in (1.5, -2.0, 4.0):
        assert eval_C(leg1, 0, np.array([z]))[0] == pytest.approx(oracles.legendre_cauchy_c0(z), rel=1e-12)


def test_second_kind_two_routes(jac2, rng):
    z = np.array([1.8, -1.4])
    assert np.allclose(eval_C_all(jac2, z), jac2.S.data @ eval_monomial_cauchy(jac2, z), atol=1e-12)
    with pytest.raises(TooCloseToSupport):
        eval_C(jac2, 0, np.array([0.3, 2.0]))
    # with every axis removed the transform is plain orthogonality: zero above level 0
    assert np.allclose(eval_C_reduced(jac2, 2, (0, 1), z), 0.0, atol=1e-12)


def test_christoffel_darboux(jac2, rng):
    for _ in range(4):
        x, y = rng.uniform(-1, 1, (2, 2))
        n = rng.standard_normal(2)
        for ell in range(1, jac2.levels):
            assert cd_formula_residual(jac2, ell, n, x, y) < 1e-10
        for ell in range(1, jac2.levels + 1):
            assert reproducing_residual(jac2, ell, x, y) < 1e-10
    with pytest.raises(DegenerateDirection):
        cd_formula_residual(jac2, 1, np.array([1.0, 0.0]), np.array([0.2, 0.1]), np.array([0.2, 0.5]))


def test_kernel_projects_onto_lower_degrees(leg2, rng):
    for ell in range(1, leg2.levels + 1):
        coeffs = rng.standard_normal(leg2.offsets[ell])
        assert projection_residual(leg2, ell, coeffs, rng.uniform(-1, 1, 2)) < 1e-10


def test_kernel_symmetry(leg2):
    x, y = np.array([0.3, -0.2]), np.array([-0.5, 0.7])
    assert cd_kernel(leg2, 3, x, y) == pytest.approx(cd_kernel(leg2, 3, y, x), rel=1e-13)


def test_second_kind_kernel(jac2):
    z, w = np.array([1.7, -1.6]), np.array([-2.2, 1.9])
    n = np.array([0.6, 0.8])
    for ell in range(1, jac2.levels):
        assert q_kernel_residual(jac2, ell, n, z, w) < 1e-8


def test_level_out_of_range(leg2):
    with pytest.raises(OutOfRange):
        eval_P(leg2, 9, np.zeros(2))


def test_time_deformed_system_still_orthogonal():
    st = FlowState.zero(2).with_times([np.array([0.2, -0.1]), np.array([0.1, 0.0, -0.2])])
    sys = build_system(lebesgue(2), st, levels=4)
    assert max(orthogonality_residuals(sys).values()) < 1e-10
