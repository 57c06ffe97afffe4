"""Numerical probes of discrete functional inequalities.

* ``sobolev_constant``: best constant C_h in
      sum_K ||v||_{1,K}^2 <= C_h^2 (sum_K ||curl v||_K^2 + ||div v||_K^2
                                    + sum_F h_F^-1 ||[v]||_F^2)
  over fully discontinuous [P_l]^3, as a generalized eigenvalue.
* ``l3_gradient_orthogonal_probe``: sampled max of ||v||_{0,3} / ||curl v||_0
  over v in E_h orthogonal to discrete gradients. L3 is not quadratic, so this
  is a lower estimate of the true constant.
* ``coercivity_margin``: min x^T A x / |||x|||^2 on the kernel of B.
"""
import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import (SchemeParams, assemble_a, assemble_b, assemble_parts, face_points,
                    stiffness_matrix, triple_norm_matrix)
from .quadrature import nonpolynomial_degree, tet_rule, tri_rule
from .spaces import (_chunks, build_hcurl_space, build_lagrange_space, monomial_exponents,
                     monomials, to_physical, to_reference)

CSV_COLUMNS = ("inequality", "n", "constant", "method", "samples", "growth")


class ProbeError(RuntimeError):
    pass


@dataclass
class InequalityProbe:
    inequality: str
    n: int | None
    constant: float
    method: str
    samples: int = 0


def probes_to_csv(probes):
    """One row per probe; growth is C(level) / C(previous level) of the same inequality."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    prev = {}
    for pr in probes:
        key = (pr.inequality, pr.method)
        growth = pr.constant / prev[key] if key in prev and prev[key] > 0 else math.nan
        prev[key] = pr.constant
        w.writerow([pr.inequality, "" if pr.n is None else pr.n, f"{pr.constant:.10e}",
                    pr.method, pr.samples, "nan" if math.isnan(growth) else f"{growth:.6f}"])
    return buf.getvalue()


# -- broken vector polynomials -------------------------------------------------

class BrokenSpace:
    """Fully discontinuous [P_l]^3; local basis m_j(xhat) e_d, index e*nloc + d*nm + j."""

    def __init__(self, mesh, degree):
        if degree < 1:
            raise ValueError(f"degree must be >= 1, got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.exps = monomial_exponents(degree)
        self.nm = len(self.exps)
        self.nloc = 3 * self.nm
        self.ndofs = mesh.n_tets * self.nloc

    def dofs(self, elems):
        return np.asarray(elems)[:, None] * self.nloc + np.arange(self.nloc)[None, :]

    def eval(self, elems, xh):
        """value (e,q,nloc,3), grad (e,q,nloc,3,3) [i,a] = d_a v_i, at reference points."""
        _, J = self.mesh.jacobians(elems)
        Jinv = np.linalg.inv(J)
        xh = np.asarray(xh, dtype=float)
        if xh.ndim == 2:
            xh = np.broadcast_to(xh, (len(elems),) + xh.shape)
        m, gref = monomials(xh, self.exps, order=1)
        g = np.einsum("eqjb,eba->eqja", gref, Jinv)
        ne, nq = m.shape[:2]
        val = np.zeros((ne, nq, 3, self.nm, 3))
        grad = np.zeros((ne, nq, 3, self.nm, 3, 3))
        for d in range(3):
            val[:, :, d, :, d] = m
            grad[:, :, d, :, d, :] = g
        return val.reshape(ne, nq, self.nloc, 3), grad.reshape(ne, nq, self.nloc, 3, 3)

    def interpolate(self, func):
        """Element-wise L2 projection of func (exact for fields in [P_l]^3)."""
        rule = tet_rule(2 * self.degree + 2)
        out = np.zeros(self.ndofs)
        for ch in _chunks(np.arange(self.mesh.n_tets)):
            val, _ = self.eval(ch, rule.points)
            fx = np.asarray(func(to_physical(self.mesh, ch, rule.points)), dtype=float)
            w = rule.weights
            Ml = np.einsum("q,eqid,eqjd->eij", w, val, val)
            bl = np.einsum("q,eqd,eqid->ei", w, fx, val)
            out[self.dofs(ch)] = np.linalg.solve(Ml, bl[..., None])[..., 0]
        return out


def _assemble(nd, rows, data):
    r = np.repeat(rows[:, :, None], rows.shape[1], axis=2)
    return sp.coo_matrix((data.ravel(), (r.ravel(), np.transpose(r, (0, 2, 1)).ravel())),
                         shape=(nd, nd)).tocsr()


def sobolev_forms(mesh, degree):
    """(G, M): broken H1 Gram matrix and the curl/div/jump form on [P_l]^3."""
    bs = BrokenSpace(mesh, degree)
    rule = tet_rule(2 * degree)
    nd = bs.ndofs
    G = sp.csr_matrix((nd, nd))
    M = sp.csr_matrix((nd, nd))
    for ch in _chunks(np.arange(mesh.n_tets)):
        val, grad = bs.eval(ch, rule.points)
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        curl = np.stack([grad[..., 2, 1] - grad[..., 1, 2],
                         grad[..., 0, 2] - grad[..., 2, 0],
                         grad[..., 1, 0] - grad[..., 0, 1]], axis=-1)
        div = np.trace(grad, axis1=-2, axis2=-1)
        g_loc = (np.einsum("eq,eqid,eqjd->eij", wd, val, val)
                 + np.einsum("eq,eqiab,eqjab->eij", wd, grad, grad))
        m_loc = (np.einsum("eq,eqid,eqjd->eij", wd, curl, curl)
                 + np.einsum("eq,eqi,eqj->eij", wd, div, div))
        G = G + _assemble(nd, bs.dofs(ch), g_loc)
        M = M + _assemble(nd, bs.dofs(ch), m_loc)
    frule = tri_rule(2 * degree)
    for ch in _chunks(np.arange(mesh.n_faces)):
        X, w = face_points(mesh, ch, frule)
        e1 = mesh.face_owner[ch]
        v1, _ = bs.eval(e1, to_reference(mesh, e1, X))
        inner = ~mesh.face_is_boundary[ch]
        # boundary faces: jump is the one-sided trace, paired with a zero block
        e2 = np.where(inner, mesh.face_neighbor[ch], e1)
        v2, _ = bs.eval(e2, to_reference(mesh, e2, X))
        v2 = v2 * inner[:, None, None, None]
        jump = np.concatenate([v1, -v2], axis=2)
        loc = np.einsum("fq,fqid,fqjd->fij", w / mesh.face_h[ch][:, None], jump, jump)
        rows = np.concatenate([bs.dofs(e1), bs.dofs(e2)], axis=1)
        M = M + _assemble(nd, rows, loc)
    return G, M, bs


def rayleigh(G, M, x):
    return float(x @ (G @ x)) / float(x @ (M @ x))


def _is_positive_definite(M):
    if M.shape[0] <= 4000:
        try:
            sla.cholesky(M.toarray(), lower=True)
            return True
        except np.linalg.LinAlgError:
            return False
    mu = spla.eigsh(M, k=1, sigma=-1e-8, which="LM", return_eigenvectors=False)[0]
    return mu > 0


def sobolev_constant(mesh, degree=2, method="eigen", n=None, samples=200, seed=42):
    """Best discrete constant C_h (``eigen``) or a sampled lower bound (``sampling``)."""
    G, M, _ = sobolev_forms(mesh, degree)
    if method == "dense":
        lam = sla.eigh(G.toarray(), M.toarray(), eigvals_only=True)
        return InequalityProbe("sobolev", n, math.sqrt(lam[-1]), "dense")
    if method == "sampling":
        rng = np.random.default_rng(seed)
        best = max(rayleigh(G, M, rng.standard_normal(G.shape[0])) for _ in range(samples))
        return InequalityProbe("sobolev", n, math.sqrt(best), "sampling", samples)
    if method != "eigen":
        raise ValueError(f"unknown method {method!r}")
    if not _is_positive_definite(M):
        raise ProbeError("rhs form is not positive definite on the broken space")
    try:
        # smallest mu of M x = mu G x gives C^2 = 1/mu
        mu = spla.eigsh(M.tocsc(), k=1, M=G.tocsc(), sigma=0.0, which="LM",
                        return_eigenvectors=False, tol=1e-12, maxiter=5000)[0]
    except spla.ArpackNoConvergence as exc:
        raise ProbeError(f"eigen iteration did not converge: {exc}") from exc
    return InequalityProbe("sobolev", n, 1.0 / math.sqrt(mu), "eigen")


# -- L3 bound on the discretely divergence-free part of E_h --------------------

def _remainder_norms(espace, qspace, v, q, degree):
    """(||v - grad q||_{0,3}, ||v - grad q||_0, ||curl v||_0) for full coefficient vectors."""
    mesh = espace.mesh
    rule = tet_rule(degree)
    l3 = l2 = c2 = 0.0
    for ch in _chunks(np.arange(mesh.n_tets)):
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        b = espace.eval_basis(ch, rule.points, ("value", "curl"))
        g = qspace.eval_basis(ch, rule.points, ("grad",))["grad"]
        cv = v[espace.dofmap[ch]]
        r = (np.einsum("eqid,ei->eqd", b["value"], cv)
             - np.einsum("eqid,ei->eqd", g, q[qspace.dofmap[ch]]))
        c = np.einsum("eqid,ei->eqd", b["curl"], cv)
        rr = np.sum(r * r, axis=-1)
        l3 += np.sum(wd * rr ** 1.5)
        l2 += np.sum(wd * rr)
        c2 += np.sum(wd * np.sum(c * c, axis=-1))
    return l3 ** (1 / 3), math.sqrt(l2), math.sqrt(c2)


def gradient_part(espace, qspace, v_free, B=None, L=None):
    """q in Q_h with (grad q, grad r) = (v, grad r) for all r (free coefficients)."""
    if B is None:
        B = assemble_b(espace, qspace)
    if L is None:
        L = stiffness_matrix(qspace)
    return spla.spsolve(L.tocsc(), B @ v_free)


def l3_gradient_orthogonal_probe(mesh, k=1, samples=20, seed=42, n=None, vectors=None):
    """Max sampled ratio ||v - grad q||_{0,3} / ||curl v||_0 with q the discrete gradient part.

    ``vectors`` overrides the random samples (rows of free E_h coefficients).
    Samples whose remainder vanishes (pure gradients) are skipped.
    """
    if samples < 10 and vectors is None:
        raise ValueError(f"samples must be >= 10, got {samples}")
    E = build_hcurl_space(mesh, k + 1)
    Q = build_lagrange_space(mesh, k + 2)
    B = assemble_b(E, Q)
    L = stiffness_matrix(Q)
    lu = spla.splu(L.tocsc())
    rng = np.random.default_rng(seed)
    degree = nonpolynomial_degree(k)
    if vectors is None:
        vectors = (rng.standard_normal(E.nfree) for _ in range(samples))
    best, used, skipped = 0.0, 0, 0
    for vf in vectors:
        q = lu.solve(B @ vf)
        l3, l2, c = _remainder_norms(E, Q, E.expand(vf), Q.expand(q), degree)
        if l2 <= 1e-10 * max(np.linalg.norm(vf), 1e-300) or c == 0.0:
            skipped += 1
            continue
        best = max(best, float(l3 / c))
        used += 1
    if used == 0:
        raise ProbeError(f"all {skipped} samples were pure gradients")
    return InequalityProbe("l3_gradient_orthogonal", n, best, "sampling", used)


# -- coercivity -----------------------------------------------------------------

def coercivity_margin(mesh, k=1, tau=20.0, variant="symmetric"):
    """min x^T A x / |||x|||^2 over x != 0 with B x = 0 (symmetric part of A)."""
    params = SchemeParams(k=k, tau=tau, variant=variant)
    E = build_hcurl_space(mesh, k + 1)
    Q = build_lagrange_space(mesh, k + 2)
    parts = assemble_parts(E)
    A = assemble_a(mesh, E, params, parts=parts).toarray()
    A = 0.5 * (A + A.T)
    free = E.free
    T = triple_norm_matrix(parts, params)[free][:, free].toarray()
    B = assemble_b(E, Q).toarray()
    Z = sla.null_space(B) if B.shape[0] else np.eye(A.shape[0])
    if Z.shape[1] == 0:
        raise ProbeError("B has a trivial null space; nothing to measure")
    Az = Z.T @ A @ Z
    Tz = Z.T @ T @ Z
    try:
        lam = sla.eigh(Az, Tz, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise ProbeError(f"reduced eigenproblem failed: {exc}") from exc
    return float(lam[0])
