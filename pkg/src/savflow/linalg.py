"""Sparse matrix kernel: CSR storage, triplet accumulation, block assembly and solves.

The CSR container is our own; factorization and Krylov iterations are delegated
to SuperLU / GMRES from ``scipy.sparse.linalg``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class LinAlgError(RuntimeError):
    pass


class SingularMatrixError(LinAlgError):
    """Raised when the LU factorization hits a zero pivot."""

    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(LinAlgError):
    """Raised when an iterative solve stops above its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(eq=False)
class SparseMatrix:
    """Immutable CSR matrix with sorted, duplicate-free column indices per row."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _scipy: Optional[sp.csr_matrix] = field(default=None, repr=False)

    def __post_init__(self):
        self.row_offsets = np.asarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(self.col_indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if self.row_offsets[0] != 0 or np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must start at 0 and be nondecreasing")
        nnz = int(self.row_offsets[-1])
        if self.col_indices.shape != (nnz,) or self.values.shape != (nnz,):
            raise ValueError("col_indices/values length must equal row_offsets[-1]")
        if nnz:
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing inside each row
            step = np.diff(self.col_indices)
            row_start = np.zeros(nnz, dtype=bool)
            row_start[self.row_offsets[:-1][np.diff(self.row_offsets) > 0]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within rows")
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.flags.writeable = False

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        csr = sp.csr_matrix(mat, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "SparseMatrix":
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64), [], [])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def to_scipy(self) -> sp.csr_matrix:
        if self._scipy is None:
            self._scipy = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets), shape=self.shape
            )
        return self._scipy

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        out[rows, self.col_indices] = self.values
        return out

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T)

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix.from_scipy(self.to_scipy() @ other.to_scipy())
        return spmv(self, other)

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return SparseMatrix.from_scipy(self.to_scipy() + other.to_scipy())

    def __sub__(self, other: "SparseMatrix") -> "SparseMatrix":
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> "SparseMatrix":
        return SparseMatrix(self.n_rows, self.n_cols, self.row_offsets,
                            self.col_indices, float(scalar) * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "SparseMatrix":
        return (-1.0) * self


class CooBuilder:
    """Accumulates (row, col, value) triplets; duplicates are summed on finalize."""

    def __init__(self, n_rows: int, n_cols: int):
        self.n_rows = n_rows
        self.n_cols = n_cols
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, values) -> None:
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("triplet arrays must have equal length")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(values)

    @property
    def triplets(self) -> list[tuple[int, int, float]]:
        if not self._rows:
            return []
        return list(zip(np.concatenate(self._rows).tolist(),
                        np.concatenate(self._cols).tolist(),
                        np.concatenate(self._vals).tolist()))

    def finalize(self) -> SparseMatrix:
        if not self._rows:
            return SparseMatrix.zeros(self.n_rows, self.n_cols)
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        if rows.size and (rows.min() < 0 or rows.max() >= self.n_rows
                          or cols.min() < 0 or cols.max() >= self.n_cols):
            raise IndexError("triplet index out of range")
        coo = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_cols))
        return SparseMatrix.from_scipy(coo.tocsr())


@dataclass
class BlockSystem:
    """Grid of optional blocks plus a right-hand side.

    ``row_sizes``/``col_sizes`` may be omitted when every block row and column
    holds at least one matrix.
    """

    blocks: Sequence[Sequence[Optional[SparseMatrix]]]
    rhs: Optional[np.ndarray] = None
    row_sizes: Optional[Sequence[int]] = None
    col_sizes: Optional[Sequence[int]] = None

    def sizes(self) -> tuple[list[int], list[int]]:
        nbr = len(self.blocks)
        nbc = len(self.blocks[0]) if nbr else 0
        if any(len(r) != nbc for r in self.blocks):
            raise ValueError("ragged block grid")
        rows = list(self.row_sizes) if self.row_sizes is not None else [None] * nbr
        cols = list(self.col_sizes) if self.col_sizes is not None else [None] * nbc
        for i, brow in enumerate(self.blocks):
            for j, blk in enumerate(brow):
                if blk is None:
                    continue
                if rows[i] is None:
                    rows[i] = blk.n_rows
                elif rows[i] != blk.n_rows:
                    raise ValueError(f"block ({i},{j}) has {blk.n_rows} rows, expected {rows[i]}")
                if cols[j] is None:
                    cols[j] = blk.n_cols
                elif cols[j] != blk.n_cols:
                    raise ValueError(f"block ({i},{j}) has {blk.n_cols} cols, expected {cols[j]}")
        if any(r is None for r in rows) or any(c is None for c in cols):
            raise ValueError("cannot infer size of an empty block row/column")
        return rows, cols


def spmv(A: SparseMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise ValueError(f"dimension mismatch: matrix has {A.n_cols} columns, vector {x.shape}")
    rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_offsets))
    return np.bincount(rows, weights=A.values * x[A.col_indices], minlength=A.n_rows)


def assemble_block(system: BlockSystem) -> tuple[SparseMatrix, Optional[np.ndarray]]:
    row_sizes, col_sizes = system.sizes()
    roff = np.concatenate([[0], np.cumsum(row_sizes)]).astype(np.int64)
    coff = np.concatenate([[0], np.cumsum(col_sizes)]).astype(np.int64)
    builder = CooBuilder(int(roff[-1]), int(coff[-1]))
    for i, brow in enumerate(system.blocks):
        for j, blk in enumerate(brow):
            if blk is None or blk.nnz == 0:
                continue
            r = np.repeat(np.arange(blk.n_rows), np.diff(blk.row_offsets))
            builder.add(r + roff[i], blk.col_indices + coff[j], blk.values)
    rhs = None
    if system.rhs is not None:
        rhs = np.asarray(system.rhs, dtype=np.float64)
        if rhs.shape != (roff[-1],):
            raise ValueError(f"rhs length {rhs.shape} does not match {roff[-1]} rows")
    return builder.finalize(), rhs


def _locate_zero_pivot(A: SparseMatrix, dense_limit: int = 4000) -> Optional[int]:
    if A.n_rows > dense_limit:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, _ = scipy.linalg.lu_factor(A.to_dense(), check_finite=False)
    d = np.abs(np.diag(lu))
    tol = np.finfo(float).eps * max(d.max(initial=0.0), 1.0) * A.n_rows
    bad = np.flatnonzero(d <= tol)
    return int(bad[0]) if bad.size else None


def lu_factor(A: SparseMatrix):
    """SuperLU factorization with COLAMD ordering.

    A relaxed diagonal pivot threshold keeps the saddle-point fill roughly
    halved compared with strict partial pivoting.
    """
    if A.n_rows != A.n_cols:
        raise ValueError("LU requires a square matrix")
    try:
        return spla.splu(A.to_scipy().tocsc(), permc_spec="COLAMD", diag_pivot_thresh=0.1,
                         options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        pivot = _locate_zero_pivot(A)
        raise SingularMatrixError(f"matrix is singular (zero pivot at {pivot})", pivot) from exc


def solve_sparse_lu(A: SparseMatrix, b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n_rows,):
        raise ValueError("rhs length does not match matrix")
    x = lu_factor(A).solve(b)
    if not np.all(np.isfinite(x)) and np.all(np.isfinite(b)):
        pivot = _locate_zero_pivot(A)
        raise SingularMatrixError(f"numerically singular matrix (pivot {pivot})", pivot)
    return x


def is_null_vector(K: SparseMatrix, z, tol: float = 1e-12) -> bool:
    """True if ``K z`` and ``K^T z`` both vanish relative to ``|K| |z|``."""
    z = np.asarray(z, dtype=np.float64)
    scale = max(float(np.max(np.abs(K.values), initial=0.0)), 1e-300) * np.linalg.norm(z, 1)
    return (float(np.max(np.abs(spmv(K, z)), initial=0.0)) <= tol * scale
            and float(np.max(np.abs(spmv(K.transpose(), z)), initial=0.0)) <= tol * scale)


def solve_bordered(K: SparseMatrix, c, z, f, g: float) -> tuple[np.ndarray, float]:
    """Solve ``[[K, c], [c^T, 0]] [x; lam] = [f; g]`` without factoring the dense border.

    ``z`` must span both null spaces of ``K`` with ``c . z != 0``. The core is
    regularized by a rank-one term on the largest entry of ``z``, which keeps
    it sparse; then ``lam = z.f / z.c`` and ``x`` is shifted along ``z`` to meet
    the constraint.
    """
    c, z, f = (np.asarray(v, dtype=np.float64) for v in (c, z, f))
    cz = float(c @ z)
    if cz == 0.0:
        raise ValueError("border is orthogonal to the null vector")
    k = int(np.argmax(np.abs(z)))
    bump = SparseMatrix.from_scipy(sp.csr_matrix(([1.0], ([k], [k])), shape=K.shape))
    lam = float(z @ f) / cz
    y = solve_sparse_lu(K + bump, f - lam * c)
    x = y + ((g - float(c @ y)) / cz) * z
    return x, lam


def solve_gmres(A: SparseMatrix, b, tol: float = 1e-10, max_iter: int = 1000,
                preconditioner: Optional[str] = None, restart: int = 200) -> np.ndarray:
    """Restarted GMRES; ``preconditioner`` is ``None`` or ``"ilu"``."""
    if A.n_rows != A.n_cols:
        raise ValueError("GMRES requires a square matrix")
    b = np.asarray(b, dtype=np.float64)
    Asp = A.to_scipy().tocsc()
    M = None
    if preconditioner == "ilu":
        ilu = spla.spilu(Asp, drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    elif preconditioner is not None:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    count = [0]

    def _cb(_):
        count[0] += 1

    x, info = spla.gmres(Asp, b, rtol=tol, atol=0.0, restart=min(restart, A.n_rows),
                         maxiter=max_iter, M=M, callback=_cb, callback_type="pr_norm")
    res = float(np.linalg.norm(b - Asp @ x) / bnorm)
    if info != 0 or res > tol * 10:
        raise ConvergenceError(f"GMRES did not converge: residual {res:.3e}", res, count[0])
    solve_gmres.last_iterations = count[0]
    return x


solve_gmres.last_iterations = 0
