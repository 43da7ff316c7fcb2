"""Partitioned dense matrices, Schur complements, quasi-determinants, the
block LDL factorization and full-column-rank pseudo-inverses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import OutOfRange, RankDeficient, SingularPivot, SingularTruncation
from .mindex import level_size

SINGULAR_RTOL = 1e-12


def check_invertible(a: np.ndarray, what: str = "pivot", scale: float = 0.0) -> None:
    """Raise SingularPivot when the smallest singular value is below
    SINGULAR_RTOL times the largest one, or times ``scale`` when that is
    larger (the size of the matrix the pivot was eliminated from)."""
    if a.shape[0] != a.shape[1]:
        raise SingularPivot(f"{what} block is not square: {a.shape}")
    if a.size == 0:
        return
    s = np.linalg.svd(a, compute_uv=False)
    if not np.all(np.isfinite(s)) or s[-1] < SINGULAR_RTOL * max(s[0], scale) or s[0] == 0.0:
        raise SingularPivot(f"{what} block is numerically singular")


class BlockMatrix:
    """Dense matrix with a block partition of rows and columns.

    Blocks are addressed by (row block, column block).  Level-partitioned
    matrices use block sizes |[0]|, |[1]|, ... for a fixed dimension.
    The stored array is read-only.
    """

    __slots__ = ("data", "row_sizes", "col_sizes", "_row_off", "_col_off")

    def __init__(self, data, row_sizes: Sequence[int], col_sizes: Sequence[int] | None = None):
        data = np.array(data, dtype=float)
        self.row_sizes = tuple(int(s) for s in row_sizes)
        self.col_sizes = tuple(int(s) for s in (row_sizes if col_sizes is None else col_sizes))
        self._row_off = np.concatenate([[0], np.cumsum(self.row_sizes, dtype=int)])
        self._col_off = np.concatenate([[0], np.cumsum(self.col_sizes, dtype=int)])
        if data.shape != (self._row_off[-1], self._col_off[-1]):
            raise ValueError(f"data shape {data.shape} does not match partition")
        data.setflags(write=False)
        self.data = data

    @classmethod
    def from_levels(cls, dim: int, levels: int, data) -> "BlockMatrix":
        sizes = [level_size(dim, k) for k in range(levels)]
        return cls(data, sizes)

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[np.ndarray]]) -> "BlockMatrix":
        rows = [np.atleast_2d(b[0]).shape[0] for b in blocks]
        cols = [np.atleast_2d(b).shape[1] for b in blocks[0]]
        return cls(np.block([[np.atleast_2d(b) for b in row] for row in blocks]), rows, cols)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def nblocks(self) -> tuple[int, int]:
        return len(self.row_sizes), len(self.col_sizes)

    def block(self, i: int, j: int) -> np.ndarray:
        nr, nc = self.nblocks
        if not (0 <= i < nr and 0 <= j < nc):
            raise OutOfRange(f"block ({i},{j}) outside {nr}x{nc} partition")
        return self.data[self._row_off[i]:self._row_off[i + 1], self._col_off[j]:self._col_off[j + 1]]

    def rows(self, start: int, stop: int) -> np.ndarray:
        return self.data[self._row_off[start]:self._row_off[stop]]

    def truncate(self, nrow: int, ncol: int | None = None) -> "BlockMatrix":
        """Leading nrow x ncol blocks."""
        ncol = nrow if ncol is None else ncol
        if nrow > len(self.row_sizes) or ncol > len(self.col_sizes):
            raise OutOfRange(f"cannot truncate {self.nblocks} to ({nrow},{ncol})")
        return BlockMatrix(
            self.data[:self._row_off[nrow], :self._col_off[ncol]],
            self.row_sizes[:nrow],
            self.col_sizes[:ncol],
        )

    def sub(self, rows: Sequence[int], cols: Sequence[int]) -> "BlockMatrix":
        """Matrix made of the selected row and column blocks."""
        blocks = [[self.block(i, j) for j in cols] for i in rows]
        return BlockMatrix(
            np.block(blocks) if blocks and cols else np.zeros((0, 0)),
            [self.row_sizes[i] for i in rows],
            [self.col_sizes[j] for j in cols],
        )

    def __matmul__(self, other: "BlockMatrix") -> "BlockMatrix":
        if self.col_sizes != other.row_sizes:
            raise ValueError("incompatible block partitions")
        return BlockMatrix(self.data @ other.data, self.row_sizes, other.col_sizes)

    def __sub__(self, other: "BlockMatrix") -> "BlockMatrix":
        return BlockMatrix(self.data - other.data, self.row_sizes, self.col_sizes)

    def __add__(self, other: "BlockMatrix") -> "BlockMatrix":
        return BlockMatrix(self.data + other.data, self.row_sizes, self.col_sizes)

    @property
    def T(self) -> "BlockMatrix":
        return BlockMatrix(self.data.T, self.col_sizes, self.row_sizes)

    def __repr__(self) -> str:
        return f"BlockMatrix(rows={self.row_sizes}, cols={self.col_sizes})"


def block_diag(blocks: Sequence[np.ndarray]) -> BlockMatrix:
    sizes = [b.shape[0] for b in blocks]
    out = np.zeros((sum(sizes), sum(sizes)))
    off = 0
    for b in blocks:
        n = b.shape[0]
        out[off:off + n, off:off + n] = b
        off += n
    return BlockMatrix(out, sizes)


def schur_complement(m: np.ndarray, split: int) -> np.ndarray:
    """D - C A^{-1} B for m = [[A, B], [C, D]] with A of size split x split.
    Only A has to be square."""
    m = np.asarray(m, dtype=float)
    a, b = m[:split, :split], m[:split, split:]
    c, d = m[split:, :split], m[split:, split:]
    if split == 0:
        return d.copy()
    check_invertible(a)
    return d - c @ np.linalg.solve(a, b)


def quasi_determinant(bm: BlockMatrix, pivots: Sequence[int]) -> BlockMatrix:
    """Schur complement with respect to the square submatrix built from the
    diagonal blocks listed in ``pivots``; the result keeps the other blocks."""
    nr, nc = bm.nblocks
    pivots = sorted(set(pivots))
    keep_r = [i for i in range(nr) if i not in pivots]
    keep_c = [j for j in range(nc) if j not in pivots]
    if not pivots:
        return bm.sub(keep_r, keep_c)
    a = bm.sub(pivots, pivots).data
    check_invertible(a)
    b = bm.sub(pivots, keep_c).data
    c = bm.sub(keep_r, pivots).data
    d = bm.sub(keep_r, keep_c)
    return BlockMatrix(d.data - c @ np.linalg.solve(a, b), d.row_sizes, d.col_sizes)


def last_quasi_determinant(bm: BlockMatrix) -> np.ndarray:
    """Schur complement with respect to all but the last block row/column.
    The last block may be rectangular."""
    nr, nc = bm.nblocks
    if nr != nc:
        raise ValueError("last quasi-determinant needs equal block counts")
    split_r = int(sum(bm.row_sizes[:-1]))
    split_c = int(sum(bm.col_sizes[:-1]))
    if split_r != split_c:
        raise ValueError("leading blocks must form a square matrix")
    return schur_complement(bm.data, split_r)


@dataclass(frozen=True)
class CholeskyFactors:
    """G = S^{-1} H S^{-T} with S block lower unitriangular and H block
    diagonal; beta[k] is the block S_{[k],[k-1]} (beta[0] is None)."""

    S: BlockMatrix
    H: tuple[np.ndarray, ...]
    beta: tuple[np.ndarray | None, ...]

    @property
    def levels(self) -> int:
        return len(self.H)

    def S_block(self, k: int, j: int) -> np.ndarray:
        return self.S.block(k, j)

    def H_inv(self, k: int) -> np.ndarray:
        return np.linalg.inv(self.H[k])


def block_ldl_factorize(G: BlockMatrix) -> CholeskyFactors:
    """Level-by-level block LDL factorization of a symmetric block matrix.

    With L = S^{-1} (block unit lower), the recursion is
    H_k = G_kk - sum_j L_kj H_j L_kj^T and L_ik = (G_ik - sum_j L_ij H_j L_kj^T) H_k^{-1};
    S is then recovered by block forward substitution.
    """
    nb = G.nblocks[0]
    sizes = G.row_sizes
    lower = [[None] * nb for _ in range(nb)]
    H: list[np.ndarray] = []
    for k in range(nb):
        hk = G.block(k, k).copy()
        for j in range(k):
            hk -= lower[k][j] @ H[j] @ lower[k][j].T
        hk = 0.5 * (hk + hk.T)
        try:
            check_invertible(hk, scale=np.linalg.norm(G.block(k, k), 2))
        except SingularPivot:
            raise SingularTruncation(k) from None
        H.append(hk)
        for i in range(k + 1, nb):
            gik = G.block(i, k).copy()
            for j in range(k):
                gik -= lower[i][j] @ H[j] @ lower[k][j].T
            lower[i][k] = np.linalg.solve(hk.T, gik.T).T
    # S = L^{-1}: S_kk = I, S_kj = -sum_{j<=p<k} L_kp S_pj
    s_blocks = [[None] * nb for _ in range(nb)]
    for k in range(nb):
        s_blocks[k][k] = np.eye(sizes[k])
        for j in range(k - 1, -1, -1):
            acc = np.zeros((sizes[k], sizes[j]))
            for p in range(j, k):
                acc -= lower[k][p] @ s_blocks[p][j]
            s_blocks[k][j] = acc
    dense = np.zeros(G.shape)
    off = np.concatenate([[0], np.cumsum(sizes)])
    for k in range(nb):
        for j in range(k + 1):
            dense[off[k]:off[k + 1], off[j]:off[j + 1]] = s_blocks[k][j]
    S = BlockMatrix(dense, sizes)
    beta = (None,) + tuple(s_blocks[k][k - 1] for k in range(1, nb))
    return CholeskyFactors(S, tuple(H), beta)


def bordered_truncation(G: BlockMatrix, k: int, ell: int) -> BlockMatrix:
    """The leading ell+1 block truncation with its last block row replaced by
    (G_{[k],[0]} ... G_{[k],[ell]}).  Quasi-determinant formulas only use
    its first ell columns of that row."""
    if k < ell:
        raise ValueError("need k >= ell")
    nr, nc = G.nblocks
    if k >= nr or ell >= nc:
        raise OutOfRange(f"blocks up to level {max(k, ell)} not stored")
    rows = list(range(ell)) + [k]
    return G.sub(rows, list(range(ell + 1)))


def pseudo_inverse_full_column_rank(a: np.ndarray) -> np.ndarray:
    """(A^T A)^{-1} A^T for a matrix with full column rank."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    gram = a.T @ a
    try:
        check_invertible(gram, "correlation")
    except SingularPivot:
        raise RankDeficient("matrix does not have full column rank") from None
    return np.linalg.solve(gram, a.T)


def dump_block_matrix(bm: BlockMatrix, dim: int) -> str:
    """Text dump: dimension and level count, then each block in (k, l)
    order with row-major entries at 17 significant digits."""
    nr, nc = bm.nblocks
    lines = [f"D {dim}", f"L {nr} {nc}"]
    for i in range(nr):
        for j in range(nc):
            b = bm.block(i, j)
            lines.append(f"block {i} {j} {b.shape[0]} {b.shape[1]}")
            for row in b:
                lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def load_block_matrix(text: str) -> tuple[int, BlockMatrix]:
    lines = iter(text.splitlines())
    dim = int(next(lines).split()[1])
    _, nr, nc = next(lines).split()
    nr, nc = int(nr), int(nc)
    blocks = [[None] * nc for _ in range(nr)]
    for _ in range(nr * nc):
        _, i, j, r, c = next(lines).split()
        rows = [list(map(float, next(lines).split())) for _ in range(int(r))]
        blocks[int(i)][int(j)] = np.array(rows).reshape(int(r), int(c))
    row_sizes = [blocks[i][0].shape[0] for i in range(nr)]
    col_sizes = [blocks[0][j].shape[1] for j in range(nc)]
    return dim, BlockMatrix(np.block(blocks), row_sizes, col_sizes)
