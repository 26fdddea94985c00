"""Conjugate gradients for symmetric positive definite systems."""

from __future__ import annotations

import numpy as np


class SolverError(RuntimeError):
    """Iterative solve failed to reach tolerance within the iteration cap."""

    def __init__(self, message: str, residuals: np.ndarray, iterations: int):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations


def solve_spd(matvec, b: np.ndarray, tol: float = 1e-10, maxiter: int | None = None) -> np.ndarray:
    """Solve ``A X = B`` column by column with conjugate gradients.

    ``matvec`` applies the SPD operator to an (n, k) block. Columns are
    iterated together but each keeps its own step lengths, so the result is
    the same as k independent solves. Iteration stops once every column has
    ``||r|| <= tol * ||b||``; the cap defaults to ``10 * n``.

    Raises
    ------
    SolverError
        If some column has not converged after ``maxiter`` iterations. The
        exception carries the final relative residual of every column.
    """
    b = np.asarray(b, dtype=np.float64)
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    n = b.shape[0]
    if maxiter is None:
        maxiter = max(10 * n, 10)

    bnorm = np.linalg.norm(b, axis=0)
    target = tol * bnorm
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = np.einsum("ij,ij->j", r, r)
    it = 0
    while it < maxiter and np.any(np.sqrt(rs) > target):
        ap = matvec(p)
        pap = np.einsum("ij,ij->j", p, ap)
        active = (np.sqrt(rs) > target) & (pap > 0)
        alpha = np.where(active, rs / np.where(active, pap, 1.0), 0.0)
        x += alpha * p
        r -= alpha * ap
        rs_new = np.einsum("ij,ij->j", r, r)
        beta = np.where(active, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
        p = r + beta * p
        rs = rs_new
        it += 1
        if not np.any(active):
            break

    true_res = np.linalg.norm(b - matvec(x), axis=0) / np.maximum(bnorm, 1.0)
    if np.any(np.sqrt(rs) > target) and np.any(true_res > tol):
        worst = int(np.argmax(true_res))
        raise SolverError(
            f"CG did not converge in {it} iterations; worst column {worst} "
            f"has relative residual {true_res[worst]:.3e}",
            true_res,
            it,
        )
    return x[:, 0] if vector else x
