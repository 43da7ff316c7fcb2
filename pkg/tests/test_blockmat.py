import numpy as np
import pytest

from quasitau.blockmat import (
    BlockMatrix, block_diag, block_ldl_factorize, bordered_truncation, check_invertible, dump_block_matrix,
    last_quasi_determinant, load_block_matrix, pseudo_inverse_full_column_rank, quasi_determinant,
    schur_complement,
)
from quasitau.errors import RankDeficient, SingularPivot, SingularTruncation
from quasitau.mindex import level_offsets


def spd_block_matrix(rng, dim=2, levels=4):
    n = level_offsets(dim, levels)[-1]
    a = rng.standard_normal((n, n))
    return BlockMatrix.from_levels(dim, levels, a @ a.T + n * np.eye(n))


def test_blocks_and_truncation(rng):
    G = spd_block_matrix(rng)
    assert G.nblocks == (4, 4)
    assert G.block(2, 1).shape == (3, 2)
    assert G.truncate(2).shape == (3, 3)
    assert np.array_equal(G.truncate(3).data, G.data[:6, :6])


def test_ldl_reconstructs_and_matches_dense_cholesky(rng):
    G = spd_block_matrix(rng, 3, 4)
    f = block_ldl_factorize(G)
    H = block_diag(f.H).data
    S = f.S.data
    assert np.allclose(S @ G.data @ S.T, H, atol=1e-10 * np.linalg.norm(G.data))
    assert np.allclose(np.diag(S), 1.0)
    assert np.allclose(np.triu(S, 1), 0.0)
    # block determinants agree with the dense factor
    L = np.linalg.cholesky(G.data)
    assert np.prod([np.linalg.det(h) for h in f.H]) == pytest.approx(np.prod(np.diag(L)) ** 2, rel=1e-9)


def test_h_blocks_are_last_quasi_determinants(rng):
    G = spd_block_matrix(rng, 2, 5)
    f = block_ldl_factorize(G)
    for k in range(5):
        assert np.allclose(f.H[k], last_quasi_determinant(G.truncate(k + 1)), atol=1e-10)


def test_quasi_determinant_heredity(rng):
    # eliminating block 0 and then block 1 equals eliminating both at once
    G = spd_block_matrix(rng, 2, 4)
    once = quasi_determinant(G, [0, 1])
    step = quasi_determinant(quasi_determinant(G, [0]), [0])
    assert np.allclose(once.data, step.data, atol=1e-10)


def test_schur_complement_rectangular_tail(rng):
    m = rng.standard_normal((5, 7))
    m[:3, :3] += 5 * np.eye(3)
    a, b, c, d = m[:3, :3], m[:3, 3:], m[3:, :3], m[3:, 3:]
    assert np.allclose(schur_complement(m, 3), d - c @ np.linalg.inv(a) @ b)


def test_bordered_truncation_rows(rng):
    G = spd_block_matrix(rng, 2, 5)
    bt = bordered_truncation(G, 3, 1)
    assert bt.row_sizes == (1, 4) and bt.col_sizes == (1, 2)


def test_singular_pivots_are_detected():
    with pytest.raises(SingularPivot):
        check_invertible(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularPivot):
        check_invertible(np.array([[1e-17]]), scale=1.0)
    # rank-2 moment-like matrix: two-point measure
    x = np.array([-0.5, 0.5])
    G = np.array([[np.sum(x ** (i + j)) for j in range(4)] for i in range(4)])
    with pytest.raises(SingularTruncation) as info:
        block_ldl_factorize(BlockMatrix.from_levels(1, 4, G))
    assert info.value.level == 2


def test_pseudo_inverse(rng):
    a = rng.standard_normal((6, 3))
    assert np.allclose(pseudo_inverse_full_column_rank(a) @ a, np.eye(3))
    with pytest.raises(RankDeficient):
        pseudo_inverse_full_column_rank(np.ones((4, 2)))


def test_dump_round_trip_is_exact(rng):
    G = spd_block_matrix(rng, 2, 3)
    G = BlockMatrix(G.data / 7.0, G.row_sizes)
    text = dump_block_matrix(G, 2)
    dim, back = load_block_matrix(text)
    assert dim == 2
    assert back.row_sizes == G.row_sizes
    assert np.array_equal(back.data, G.data)
    assert dump_block_matrix(back, 2) == text
