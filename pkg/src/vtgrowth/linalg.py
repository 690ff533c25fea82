"""Minimal sparse linear algebra: CSR storage plus CG/BiCGStab solvers.

CSR storage and the matrix-vector product are backed by scipy.sparse; the
Krylov loops are written out here so that convergence reporting, breakdown
detection and the stopping rule ``||b - A x|| <= max(abs_tol, rel_tol ||b||)``
are under our control and bit-reproducible in single-threaded runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class SolverError(Exception):
    pass


class NoConvergenceError(SolverError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


class BreakdownError(SolverError):
    pass


@dataclass
class CsrMatrix:
    """Square or rectangular sparse matrix in compressed-sparse-row form.

    ``row_offsets`` has length ``n_rows + 1`` and is monotone non-decreasing;
    column indices are strictly increasing within each row.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _handle: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m)
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data, m)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "CsrMatrix":
        m = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
        m.sum_duplicates()
        return cls.from_scipy(m)

    @classmethod
    def identity(cls, n) -> "CsrMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    def to_scipy(self) -> sp.csr_matrix:
        if self._handle is None:
            self._handle = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=(self.n_rows, self.n_cols),
            )
        return self._handle

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def validate(self) -> None:
        off = np.asarray(self.row_offsets)
        if off.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if off[0] != 0 or np.any(np.diff(off) < 0):
            raise ValueError("row_offsets must start at 0 and be non-decreasing")
        idx = np.asarray(self.col_indices)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_cols):
            raise ValueError("column index out of range")
        for r in range(self.n_rows):
            cols = idx[off[r] : off[r + 1]]
            if cols.size > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {r}: column indices not strictly increasing")


@dataclass
class SolverConfig:
    method: str = "cg"  # "cg" or "bicgstab"
    rel_tol: float = 1e-9
    abs_tol: float = 0.0
    max_iters: int = 0  # 0 -> 10 * n
    preconditioner: str = "jacobi"  # "none" or "jacobi"

    def __post_init__(self):
        if self.method not in ("cg", "bicgstab"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class SolveReport:
    iterations: int
    residual: float
    residual_history: list[float] | None = None


def spmv(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product A @ x, summed in row order."""
    x = np.asarray(x, dtype=float)
    if x.shape != (A.n_cols,):
        raise ValueError(f"dimension mismatch: A is {A.n_rows}x{A.n_cols}, x has {x.shape}")
    return A.to_scipy() @ x


def _jacobi(A: CsrMatrix) -> np.ndarray:
    d = A.diagonal().copy()
    d[d == 0.0] = 1.0
    return 1.0 / d


def solve(
    A: CsrMatrix,
    b: np.ndarray,
    cfg: SolverConfig | None = None,
    x0: np.ndarray | None = None,
    track_residuals: bool = False,
    callback=None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve A x = b iteratively.

    CG requires a symmetric positive-definite matrix (caller contract).
    Raises NoConvergenceError if the stopping criterion
    ``||b - A x||_2 <= max(abs_tol, rel_tol * ||b||_2)`` is not met within
    max_iters, and BreakdownError on a zero denominator in the recurrences.
    ``callback``, if given, receives the current iterate once per iteration.
    """
    if cfg is None:
        cfg = SolverConfig()
    if A.n_rows != A.n_cols:
        raise ValueError("solve requires a square matrix")
    b = np.asarray(b, dtype=float)
    if b.shape != (A.n_rows,):
        raise ValueError("right-hand side has wrong length")
    max_iters = cfg.max_iters if cfg.max_iters > 0 else 10 * A.n_rows
    tol = max(cfg.abs_tol, cfg.rel_tol * float(np.linalg.norm(b)))
    minv = _jacobi(A) if cfg.preconditioner == "jacobi" else None
    if cfg.method == "cg":
        return _cg(A, b, x0, tol, max_iters, minv, track_residuals, callback)
    return _bicgstab(A, b, x0, tol, max_iters, minv, track_residuals, callback)


def _cg(A, b, x0, tol, max_iters, minv, track, callback):
    mat = A.to_scipy()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - mat @ x
    z = r * minv if minv is not None else r
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r))
    history = [res] if track else None
    it = 0
    while res > tol:
        if it >= max_iters:
            raise NoConvergenceError(it, res)
        q = mat @ p
        pq = float(p @ q)
        if pq == 0.0 or not np.isfinite(pq):
            raise BreakdownError(f"cg: zero curvature p.Ap at iteration {it}")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = r * minv if minv is not None else r
        rz_new = float(r @ z)
        if rz == 0.0:
            raise BreakdownError(f"cg: zero r.z at iteration {it}")
        p = z + (rz_new / rz) * p
        rz = rz_new
        res = float(np.linalg.norm(r))
        it += 1
        if track:
            history.append(res)
        if callback is not None:
            callback(x)
    return x, SolveReport(it, res, history)


def _bicgstab(A, b, x0, tol, max_iters, minv, track, callback=None):
    mat = A.to_scipy()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - mat @ x
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    res = float(np.linalg.norm(r))
    history = [res] if track else None
    it = 0
    restarts = 0
    norm_r0 = res
    while res > tol:
        if it >= max_iters:
            raise NoConvergenceError(it, res)
        rho_new = float(r0 @ r)
        # restart on (near-)orthogonality of r and the shadow residual,
        # which otherwise stalls the recurrence
        if abs(rho_new) < 1e-14 * norm_r0 * res or omega == 0.0:
            if restarts > max_iters:
                raise BreakdownError(f"bicgstab: stalled recurrence at iteration {it}")
            restarts += 1
            r0 = r.copy()
            norm_r0 = res
            rho = alpha = omega = 1.0
            v = np.zeros_like(b)
            p = np.zeros_like(b)
            rho_new = res * res
            if rho_new == 0.0:
                break
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        ph = p * minv if minv is not None else p
        v = mat @ ph
        den = float(r0 @ v)
        if den == 0.0:
            raise BreakdownError(f"bicgstab: zero r0.v at iteration {it}")
        alpha = rho_new / den
        s = r - alpha * v
        sh = s * minv if minv is not None else s
        t = mat @ sh
        tt = float(t @ t)
        if tt == 0.0:
            # s is already the exact residual update
            x += alpha * ph
            r = s
        else:
            omega = float(t @ s) / tt
            x += alpha * ph + omega * sh
            r = s - omega * t
        rho = rho_new
        res = float(np.linalg.norm(r))
        it += 1
        if track:
            history.append(res)
        if callback is not None:
            callback(x)
        if not np.isfinite(res):
            raise BreakdownError(f"bicgstab: non-finite residual at iteration {it}")
    return x, SolveReport(it, res, history)
