"""Solvers for the saddle-point system [[A, B^T], [B, 0]] [u; p] = [F; 0]."""
import json
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    wall_time: float
    dimension: int
    nnz: int

    def to_json(self):
        return json.dumps(asdict(self))


def kkt_matrix(A, B):
    return sp.bmat([[A, B.T], [B, None]], format="csc")


def block_residual(A, B, F, u, p):
    """Relative residual of the full block system, against the original blocks."""
    r1 = A @ u + B.T @ p - F
    r2 = B @ u
    denom = np.linalg.norm(F)
    num = np.sqrt(np.linalg.norm(r1) ** 2 + np.linalg.norm(r2) ** 2)
    if denom == 0.0:
        return float(num)
    return float(num / denom)


def _direct(K, rhs):
    try:
        lu = spla.splu(K, permc_spec="COLAMD", diag_pivot_thresh=0.1,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError(
            f"singular factorization ({exc}); the stabilization parameter tau may be too small"
        ) from exc
    x = lu.solve(rhs)
    # one refinement step; the 4th-order blocks make K badly scaled
    x += lu.solve(rhs - K @ x)
    return x, 0


def _iterative(A, B, K, rhs, tol, maxiter, symmetric):
    # diag(A) vanishes on discrete gradients, so the velocity block is the
    # augmented operator A + gamma B^T W^-1 B with W = diag(B B^T), and the
    # multiplier block is W / gamma.
    na = A.shape[0]
    w = np.asarray((B.multiply(B)).sum(axis=1)).ravel()
    w[w == 0] = 1.0
    BtWB = (B.T @ sp.diags(1.0 / w) @ B).tocsc()
    gamma = abs(A).max() / abs(BtWB).max() if B.shape[0] and A.nnz else 1.0
    try:
        A_lu = spla.splu((A + gamma * BtWB).tocsc())
    except RuntimeError as exc:
        raise SolverError(f"singular preconditioner ({exc}); tau may be too small") from exc

    def apply(r):
        out = np.empty_like(r)
        out[:na] = A_lu.solve(r[:na])
        out[na:] = gamma * r[na:] / w
        return out

    M = spla.LinearOperator(K.shape, matvec=apply, dtype=float)
    count = [0]

    def cb(*_):
        count[0] += 1

    if symmetric:
        x, info = spla.minres(K, rhs, M=M, rtol=tol, maxiter=maxiter, callback=cb)
    else:
        x, info = spla.gmres(K, rhs, M=M, rtol=tol, maxiter=maxiter, restart=200,
                             callback=cb, callback_type="pr_norm")
    if info > 0:
        raise SolverError(f"iteration stagnated after {count[0]} iterations (maxiter={maxiter})")
    if info < 0:
        raise SolverError("illegal input or breakdown in the Krylov solver")
    return x, count[0]


def solve_saddle(A, B, F, tol=DEFAULT_TOL, method="direct", maxiter=5000, symmetric=None):
    """Solve the block system; returns (u, p, SolveReport).

    ``method`` is "direct" (sparse LU of the full indefinite matrix) or
    "iterative" (MINRES, or GMRES for a nonsymmetric A, with an
    augmented-Lagrangian block-diagonal preconditioner).
    """
    if not 0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")
    A = sp.csr_matrix(A)
    B = sp.csr_matrix(B)
    F = np.asarray(F, dtype=float)
    na, nb = A.shape[0], B.shape[0]
    if A.shape != (na, na) or B.shape[1] != na or F.shape != (na,):
        raise ValueError(f"inconsistent block sizes A{A.shape} B{B.shape} F{F.shape}")
    if symmetric is None:
        symmetric = abs(A - A.T).max() <= 1e-12 * max(abs(A).max(), 1e-300) if A.nnz else True
    t0 = time.perf_counter()
    K = kkt_matrix(A, B)
    rhs = np.concatenate([F, np.zeros(nb)])
    if not np.any(rhs):
        x = np.zeros(na + nb)
        its = 0
    elif method == "direct":
        x, its = _direct(K, rhs)
    elif method == "iterative":
        x, its = _iterative(A, B, K, rhs, tol, maxiter, symmetric)
    else:
        raise ValueError(f"unknown method {method!r}")
    u, p = x[:na], x[na:]
    res = block_residual(A, B, F, u, p)
    wall = time.perf_counter() - t0
    if not np.isfinite(res):
        raise SolverError("singular factorization (non-finite solution); try a larger tau")
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds tol {tol:.1e}")
    log.info("solve %s: n=%d nnz=%d res=%.2e %.1fs", method, na + nb, K.nnz, res, wall)
    return u, p, SolveReport(method, its, res, wall, na + nb, K.nnz)
