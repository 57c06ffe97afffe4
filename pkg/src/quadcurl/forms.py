"""Sparse blocks of the mixed interior-penalty quad-curl discretization.

Bilinear form on E_h (u trial, v test):

    a(u, v) = sum_K (curl curl u, curl curl v)_K
              - sum_F <{curl curl u}, n x [curl v]>_F
              -/+ sum_F <{curl curl v}, n x [curl u]>_F
              + sum_F tau / h_F <n x [curl u], n x [curl v]>_F

with the upper sign for the symmetric variant. Face sums run over all
faces; on boundary faces the average and the jump are the one-sided trace.
The coupling block is B[q, v] = (v, grad q).
"""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .quadrature import MAX_DEGREE, assembly_degrees, composite_tet_rule, tet_rule, tri_rule
from .spaces import _chunks, prebasis, to_reference

DEFAULT_TAU = {1: 20.0, 2: 40.0}
VARIANTS = ("symmetric", "nonsymmetric")
# loads are integrated on sub-tets no larger than this (the element size at n = 8)
LOAD_SUBCELL_H = np.sqrt(3.0) / 8.0


@dataclass(frozen=True)
class SchemeParams:
    k: int = 1
    tau: float | None = None
    variant: str = "symmetric"

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ValueError(f"k must be 1 or 2, got {self.k}")
        if self.tau is None:
            object.__setattr__(self, "tau", DEFAULT_TAU[self.k])
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        variant = {"sym": "symmetric", "nonsym": "nonsymmetric"}.get(self.variant, self.variant)
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        object.__setattr__(self, "variant", variant)


@dataclass
class SystemBlocks:
    A: sp.csr_matrix
    B: sp.csr_matrix
    F: np.ndarray
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def dims(self):
        return self.A.shape[0], self.B.shape[0]

    @property
    def nnz(self):
        return self.A.nnz + 2 * self.B.nnz


def _check_same_mesh(*spaces):
    mesh = spaces[0].mesh
    if any(s.mesh is not mesh for s in spaces[1:]):
        raise ValueError("mismatched mesh handles: spaces were built on different meshes")


def _scatter(rows, cols, data, shape):
    return sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def face_points(mesh, faces, rule):
    """Physical quadrature points (nf, nq, 3) and weights (nf, nq) on faces."""
    P = mesh.vertices[mesh.faces[faces]]
    s, t = rule.points[:, 0], rule.points[:, 1]
    X = (P[:, None, 0] + s[None, :, None] * (P[:, None, 1] - P[:, None, 0])
         + t[None, :, None] * (P[:, None, 2] - P[:, None, 0]))
    w = 2.0 * mesh.face_area[faces][:, None] * rule.weights[None, :]
    return X, w


def face_traces(space, faces, rule, need=("curl", "curlcurl"), side="owner"):
    """Basis data of the owner (or neighbor) tet evaluated on face quadrature points."""
    mesh = space.mesh
    elems = mesh.face_owner[faces] if side == "owner" else mesh.face_neighbor[faces]
    X, w = face_points(mesh, faces, rule)
    xh = to_reference(mesh, elems, X)
    return space.eval_basis(elems, xh, need), w, elems


def volume_matrices(space, degree=None):
    """Element mass, curl-mass and curl-curl matrices of an H(curl) space (full DOFs)."""
    mesh = space.mesh
    if degree is None:
        degree = assembly_degrees(space.degree - 1)[0]
    rule = tet_rule(degree)
    n = space.ndofs
    M = Cm = V = sp.csr_matrix((n, n))
    for ch in _chunks(np.arange(mesh.n_tets)):
        b = space.eval_basis(ch, rule.points, ("value", "curl", "curlcurl"))
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        dm = space.dofmap[ch]
        rows = np.repeat(dm[:, :, None], dm.shape[1], axis=2)
        cols = np.transpose(rows, (0, 2, 1))
        for key, acc in (("value", "M"), ("curl", "Cm"), ("curlcurl", "V")):
            loc = np.einsum("eq,eqid,eqjd->eij", wd, b[key], b[key], optimize=True)
            mat = _scatter(rows, cols, loc, (n, n))
            if acc == "M":
                M = M + mat
            elif acc == "Cm":
                Cm = Cm + mat
            else:
                V = V + mat
    return dict(mass=M, curl_mass=Cm, curlcurl=V)


def face_matrices(space, degree=None, faces=None, swap=False):
    """Consistency matrix K and unscaled penalty matrix P over the given faces.

    K[i, j] = -sum_F <{curl curl phi_j}, n x [curl phi_i]>_F
    P[i, j] =  sum_F h_F^{-1} <n x [curl phi_j], n x [curl phi_i]>_F

    ``swap`` evaluates interior faces with owner and neighbor exchanged (the
    normal and the jump both change sign); used to check orientation
    invariance.
    """
    mesh = space.mesh
    if degree is None:
        degree = assembly_degrees(space.degree - 1)[1]
    rule = tri_rule(degree)
    n = space.ndofs
    K = P = sp.csr_matrix((n, n))
    if faces is None:
        faces = np.arange(mesh.n_faces)
    faces = np.asarray(faces)
    for ch in _chunks(faces):
        bd = mesh.face_is_boundary[ch]
        for group, is_bd in ((ch[bd], True), (ch[~bd], False)):
            if len(group) == 0:
                continue
            nrm = mesh.face_normal[group]
            hF = mesh.face_h[group]
            b1, w, e1 = face_traces(space, group, rule)
            if is_bd:
                curl = b1["curl"]
                avg = b1["curlcurl"]
                dofs = space.dofmap[e1]
            else:
                b2, _, e2 = face_traces(space, group, rule, side="neighbor")
                curl = np.concatenate([b1["curl"], -b2["curl"]], axis=2)
                avg = 0.5 * np.concatenate([b1["curlcurl"], b2["curlcurl"]], axis=2)
                dofs = np.concatenate([space.dofmap[e1], space.dofmap[e2]], axis=1)
                if swap:
                    curl = -curl
                    nrm = -nrm
            ncurl = np.cross(nrm[:, None, None, :], curl)
            kl = -np.einsum("fq,fqid,fqjd->fij", w, ncurl, avg, optimize=True)
            pl = np.einsum("fq,fqid,fqjd->fij", w / hF[:, None], ncurl, ncurl, optimize=True)
            rows = np.repeat(dofs[:, :, None], dofs.shape[1], axis=2)
            cols = np.transpose(rows, (0, 2, 1))
            K = K + _scatter(rows, cols, kl, (n, n))
            P = P + _scatter(rows, cols, pl, (n, n))
    return dict(consistency=K, penalty=P)


def combine_a(parts, params):
    """Full-DOF operator A from precomputed parts."""
    K = parts["consistency"]
    sym = K.T if params.variant == "symmetric" else -K.T
    return (parts["curlcurl"] + K + sym + params.tau * parts["penalty"]).tocsr()


def _restrict(mat, rows, cols):
    return mat[rows][:, cols].tocsr()


def assemble_parts(space, vol_degree=None, face_degree=None):
    parts = volume_matrices(space, vol_degree)
    parts.update(face_matrices(space, face_degree))
    return parts


def assemble_a(mesh, space, params, parts=None, constrained=True):
    """Interior-penalty operator A on E_h; boundary DOFs eliminated by default."""
    if space.mesh is not mesh:
        raise ValueError("mismatched mesh handles: space was built on a different mesh")
    if space.degree != params.k + 1:
        raise ValueError(f"E_h degree {space.degree} does not match k={params.k}")
    if parts is None:
        parts = assemble_parts(space)
    A = combine_a(parts, params)
    if constrained:
        A = _restrict(A, space.free, space.free)
    return A


def assemble_b(espace, qspace, degree=None, constrained=True):
    """B[q, v] = (v, grad q)."""
    _check_same_mesh(espace, qspace)
    mesh = espace.mesh
    if degree is None:
        degree = 2 * espace.degree + 2
    rule = tet_rule(degree)
    B = sp.csr_matrix((qspace.ndofs, espace.ndofs))
    for ch in _chunks(np.arange(mesh.n_tets)):
        bv = espace.eval_basis(ch, rule.points, ("value",))["value"]
        bq = qspace.eval_basis(ch, rule.points, ("grad",))["grad"]
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        loc = np.einsum("eq,eqid,eqjd->eij", wd, bq, bv, optimize=True)
        rows = np.repeat(qspace.dofmap[ch][:, :, None], espace.nloc, axis=2)
        cols = np.repeat(espace.dofmap[ch][:, None, :], qspace.nloc, axis=1)
        B = B + _scatter(rows, cols, loc, B.shape)
    if constrained:
        B = _restrict(B, qspace.free, espace.free)
    return B


def _field(fn, pts):
    return np.asarray(fn(pts), dtype=float)


def load_refinement(mesh, target=LOAD_SUBCELL_H):
    """Red-refinement levels that bring every element below ``target`` in size."""
    ratio = float(mesh.h_K.max()) / target
    return max(0, int(np.ceil(np.log2(ratio) - 1e-9)))


def assemble_load(space, f, degree=None, split=None, constrained=True, refine=None):
    """Load vector F[v] = (f, v).

    ``split=(w, r)`` with f = curl w + r evaluates the same functional as
    (w, curl v) + (r, v), valid for v in H0(curl). The curl part then
    annihilates discrete gradients exactly, independent of quadrature error.

    Loads are not polynomial, so the default is the highest-degree rule on a
    composite of ``refine`` red-refinement levels (chosen from the element
    size by default); the assembly degree 2k+4 leaves percent-level errors.
    """
    mesh = space.mesh
    if degree is None:
        degree = MAX_DEGREE
    if refine is None:
        refine = load_refinement(mesh)
    rule = composite_tet_rule(degree, refine)
    F = np.zeros(space.ndofs)
    need = ("value", "curl") if split is not None else ("value",)
    for ch in _chunks(np.arange(mesh.n_tets)):
        x0, J = mesh.jacobians(ch)
        # integrate against the mapped prebasis, then apply the local coefficients once
        pre_loc = 0.0
        # composite rules can have many points; bound the table size
        step = max(1, (1 << 17) // len(ch))
        for q0 in range(0, len(rule), step):
            xh = np.broadcast_to(rule.points[q0:q0 + step], (len(ch), min(step, len(rule) - q0), 3))
            b = prebasis(space, ch, xh, need)
            pts = x0[:, None, :] + np.einsum("eab,eqb->eqa", J, xh)
            wd = rule.weights[None, q0:q0 + step] * 6.0 * mesh.volumes[ch][:, None]
            try:
                if split is None:
                    pre_loc = pre_loc + np.einsum("eqd,eqpd->ep", wd[..., None] * _field(f, pts),
                                                  b["value"])
                else:
                    w_fn, r_fn = split
                    pre_loc = (pre_loc
                               + np.einsum("eqd,eqpd->ep", wd[..., None] * _field(w_fn, pts),
                                           b["curl"])
                               + np.einsum("eqd,eqpd->ep", wd[..., None] * _field(r_fn, pts),
                                           b["value"]))
            except Exception as exc:
                raise RuntimeError(
                    f"load evaluation failed on elements {ch[0]}..{ch[-1]}: {exc}") from exc
        loc = np.einsum("ep,epi->ei", pre_loc, space.coeffs[ch])
        np.add.at(F, space.dofmap[ch], loc)
    return F[space.free] if constrained else F


def assemble_system(espace, qspace, params, f, split=None, load_degree=None):
    _check_same_mesh(espace, qspace)
    parts = assemble_parts(espace)
    A = assemble_a(espace.mesh, espace, params, parts=parts)
    B = assemble_b(espace, qspace)
    F = assemble_load(espace, f, degree=load_degree, split=split)
    return SystemBlocks(A, B, F, parts=parts)


def triple_norm(space, coefficients, params, parts=None):
    """Mesh-dependent norm |||v||| on E_h.

    |||v|||^2 = ||v||^2 + ||curl v||^2 + sum_K ||curl curl v||_K^2
                + sum_F tau/h_F ||n x [curl v]||_F^2

    Evaluated as a sum of squared field values at quadrature points rather
    than as x^T T x: for discrete gradients the curl terms vanish, and the
    quadratic form would leave cancellation noise of order eps * ||T||.
    ``parts`` is accepted for call compatibility and unused.
    """
    mesh = space.mesh
    x = np.asarray(coefficients, dtype=float)
    if x.shape == (space.nfree,):
        x = space.expand(x)
    vol_deg, face_deg = assembly_degrees(space.degree - 1)
    rule = tet_rule(max(vol_deg, 2 * space.degree))
    total = 0.0
    for ch in _chunks(np.arange(mesh.n_tets)):
        b = space.eval_basis(ch, rule.points, ("value", "curl", "curlcurl"))
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        c = x[space.dofmap[ch]]
        for key in ("value", "curl", "curlcurl"):
            vals = np.einsum("eqid,ei->eqd", b[key], c)
            total += float(np.einsum("eq,eqd,eqd->", wd, vals, vals))
    frule = tri_rule(face_deg)
    for ch in _chunks(np.arange(mesh.n_faces)):
        b1, w, e1 = face_traces(space, ch, frule, need=("curl",))
        jump = np.einsum("fqid,fi->fqd", b1["curl"], x[space.dofmap[e1]])
        inner = ~mesh.face_is_boundary[ch]
        if inner.any():
            b2, _, e2 = face_traces(space, ch[inner], frule, need=("curl",), side="neighbor")
            jump[inner] -= np.einsum("fqid,fi->fqd", b2["curl"], x[space.dofmap[e2]])
        nj = np.cross(mesh.face_normal[ch][:, None, :], jump)
        total += params.tau * float(np.einsum("fq,fqd,fqd->", w / mesh.face_h[ch][:, None], nj, nj))
    return np.sqrt(total)


def triple_norm_matrix(parts, params):
    return (parts["mass"] + parts["curl_mass"] + parts["curlcurl"]
            + params.tau * parts["penalty"]).tocsr()


def export_matrix_market(path, mat, comment=""):
    path = Path(path)
    scipy.io.mmwrite(str(path), sp.coo_matrix(mat), comment=comment)
    return path


def mass_matrix(space, degree=None, constrained=False):
    """L2 Gram matrix of an E_h or Q_h space."""
    mesh = space.mesh
    if degree is None:
        degree = 2 * space.degree
    rule = tet_rule(degree)
    n = space.ndofs
    M = sp.csr_matrix((n, n))
    for ch in _chunks(np.arange(mesh.n_tets)):
        b = space.eval_basis(ch, rule.points, ("value",))["value"]
        if b.ndim == 3:
            b = b[..., None]
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        loc = np.einsum("eq,eqid,eqjd->eij", wd, b, b, optimize=True)
        rows = np.repeat(space.dofmap[ch][:, :, None], space.nloc, axis=2)
        M = M + _scatter(rows, np.transpose(rows, (0, 2, 1)), loc, (n, n))
    return _restrict(M, space.free, space.free) if constrained else M


def stiffness_matrix(qspace, degree=None, constrained=True):
    """(grad p, grad q) on a Lagrange space."""
    mesh = qspace.mesh
    if degree is None:
        degree = 2 * qspace.degree - 2
    rule = tet_rule(degree)
    n = qspace.ndofs
    L = sp.csr_matrix((n, n))
    for ch in _chunks(np.arange(mesh.n_tets)):
        g = qspace.eval_basis(ch, rule.points, ("grad",))["grad"]
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        loc = np.einsum("eq,eqid,eqjd->eij", wd, g, g, optimize=True)
        rows = np.repeat(qspace.dofmap[ch][:, :, None], qspace.nloc, axis=2)
        L = L + _scatter(rows, np.transpose(rows, (0, 2, 1)), loc, (n, n))
    return _restrict(L, qspace.free, qspace.free) if constrained else L
