"""Finite element spaces E_h (second-kind Nedelec, H0(curl)) and Q_h (Lagrange, H1_0).

Local shape functions are built element by element: a polynomial prebasis
(reference monomials, covariantly mapped for E_h) is combined into the nodal
basis dual to the degrees of freedom. All shared DOF functionals are
defined through the *global* vertex order of their entity, so both tets
sharing an edge or face evaluate the same functional. No sign flips or
permutations are needed at assembly time.

E_h of degree l, DOFs per entity:
  edge [a, b], a < b:  int_0^1 v(x(s)).(x_b - x_a) L_r(s) ds, r = 0..l
                       (L_r shifted Legendre)
  face [a, b, c]:      int_T (v.t1, v.t2) . q(s, t) ds dt, q in RT_{l-1}(T)
                       with x(s, t) = x_a + s t1 + t t2
  interior (l = 3):    int_Khat (J^T v) . q dxhat, q in {e1, e2, e3, xhat}
"""
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.special import eval_sh_legendre

from .mesh import LOCAL_EDGES, LOCAL_FACES
from .quadrature import line_rule, tet_rule, tri_rule

HCURL_DEGREES = (2, 3)
LAGRANGE_DEGREES = (3, 4)
CHUNK = 256


def monomial_exponents(degree):
    return np.array([(a, b, c) for d in range(degree + 1)
                     for a in range(d, -1, -1) for b in range(d - a, -1, -1)
                     for c in [d - a - b]])


def _falling(a, k):
    out = np.ones_like(a, dtype=float)
    for i in range(k):
        out = out * (a - i)
    return out


def monomials(xh, exps, order=0):
    """Monomials x^a y^b z^c and derivatives at points xh (..., 3).

    Returns value (..., m); with order>=1 also gradient (..., m, 3);
    with order>=2 also Hessian (..., m, 3, 3).
    """
    xh = np.asarray(xh, dtype=float)
    maxd = int(exps.max()) if len(exps) else 0
    # powers[k][..., p] = x_k ** p
    pw = [np.stack([xh[..., k] ** p for p in range(maxd + 1)], axis=-1) for k in range(3)]

    def term(d):
        out = 1.0
        for k in range(3):
            e = exps[:, k] - d[k]
            coef = _falling(exps[:, k], d[k])
            vals = pw[k][..., np.clip(e, 0, None)] * np.where(e >= 0, coef, 0.0)
            out = out * vals
        return out

    val = term((0, 0, 0))
    if order == 0:
        return val
    unit = np.eye(3, dtype=int)
    grad = np.stack([term(unit[i]) for i in range(3)], axis=-1)
    if order == 1:
        return val, grad
    hess = np.empty(grad.shape + (3,))
    for i in range(3):
        for j in range(i, 3):
            h = term(unit[i] + unit[j])
            hess[..., i, j] = h
            hess[..., j, i] = h
    return val, grad, hess


def map_hcurl(vhat, curlhat, J):
    """Covariant transform of a reference value and its curl.

    v = J^{-T} vhat, curl v = J curlhat / det J.
    """
    J = np.asarray(J, dtype=float)
    det = np.linalg.det(J)
    if det <= 0:
        raise ValueError("degenerate element: det J <= 0")
    v = np.linalg.solve(J.T, np.asarray(vhat, dtype=float).T).T
    c = (np.asarray(curlhat, dtype=float) @ J.T) / det
    return v, c


def _face_rt_tests(l):
    """Raviart-Thomas test fields of index l-1 on the reference triangle.

    They pair with covariant tangential components, so they must contain a
    field with nonzero divergence; a divergence-free test set would miss the
    gradient of the face bubble.
    """
    one, zero = np.ones_like, np.zeros_like
    if l == 2:
        return [lambda s, t: (one(s), zero(s)),
                lambda s, t: (zero(s), one(s)),
                lambda s, t: (s, t)]
    if l == 3:
        return [lambda s, t: (one(s), zero(s)),
                lambda s, t: (s, zero(s)),
                lambda s, t: (t, zero(s)),
                lambda s, t: (zero(s), one(s)),
                lambda s, t: (zero(s), s),
                lambda s, t: (zero(s), t),
                lambda s, t: (s * s, s * t),
                lambda s, t: (s * t, t * t)]
    raise ValueError(f"unsupported degree {l}")


@dataclass
class DofFunctionals:
    """dof_i(v) = sum_{p,c} weights[e, i, p, c] * v(points[e, p])_c"""
    points: np.ndarray
    weights: np.ndarray


@dataclass
class FESpace:
    mesh: object
    kind: str
    degree: int
    exps: np.ndarray
    dofmap: np.ndarray
    ndofs: int
    boundary: np.ndarray
    coeffs: np.ndarray = field(repr=False)
    entity_dofs: dict = field(default_factory=dict)

    @property
    def coeffs_shape(self):
        npre = len(self.exps) * (3 if self.kind == "hcurl" else 1)
        return npre, self.dofmap.shape[1]

    @property
    def nloc(self):
        return self.dofmap.shape[1]

    @property
    def free(self):
        return np.flatnonzero(~self.boundary)

    @property
    def nfree(self):
        return int((~self.boundary).sum())

    @property
    def is_vector(self):
        return self.kind == "hcurl"

    def expand(self, x_free):
        """Constrained coefficients -> full coefficient vector (zeros on boundary)."""
        full = np.zeros(self.ndofs)
        full[self.free] = x_free
        return full

    def restrict(self, x_full):
        return np.asarray(x_full)[self.free]

    def dof_functionals(self, elems):
        if self.kind == "hcurl":
            return _hcurl_functionals(self.mesh, self.degree, elems)
        return _lagrange_functionals(self.mesh, self.degree, elems)

    def eval_basis(self, elems, xh, need=("value",)):
        """Local basis data of tets ``elems`` at reference points xh (ne, nq, 3).

        Keys for E_h: value, curl, jac_curl, curlcurl, jac (Jacobian of value).
        Keys for Q_h: value, grad.
        """
        elems = np.atleast_1d(elems)
        xh = np.asarray(xh, dtype=float)
        if xh.ndim == 2:
            xh = np.broadcast_to(xh, (len(elems),) + xh.shape)
        pre = prebasis(self, elems, xh, need)
        C = self.coeffs[elems]
        out = {}
        for key, arr in pre.items():
            extra = "".join("xyz"[: arr.ndim - 3])
            out[key] = np.einsum(f"eqp{extra},epi->eqi{extra}", arr, C, optimize=True)
        return out

    def interpolate(self, func):
        """Canonical interpolant of a field given as func(points (..., 3)) -> values."""
        elems = np.arange(self.mesh.n_tets)
        vals = np.zeros(self.ndofs)
        cnt = np.zeros(self.ndofs)
        for ch in _chunks(elems):
            df = self.dof_functionals(ch)
            fv = np.asarray(func(df.points), dtype=float)
            if not self.is_vector:
                fv = fv[..., None]
            local = np.einsum("eipc,epc->ei", df.weights, fv)
            np.add.at(vals, self.dofmap[ch], local)
            np.add.at(cnt, self.dofmap[ch], 1.0)
        return vals / cnt

    def interpolate_gradient(self, qspace, qcoeffs):
        """E_h interpolant of grad q for q in a Lagrange space on the same mesh."""
        if not self.is_vector or qspace.mesh is not self.mesh:
            raise ValueError("need an H(curl) space and a Lagrange space on the same mesh")
        vals = np.zeros(self.ndofs)
        cnt = np.zeros(self.ndofs)
        for ch in _chunks(np.arange(self.mesh.n_tets)):
            df = self.dof_functionals(ch)
            xh = to_reference(self.mesh, ch, df.points)
            g = qspace.eval_basis(ch, xh, need=("grad",))["grad"]
            gq = np.einsum("eqid,ei->eqd", g, qcoeffs[qspace.dofmap[ch]])
            local = np.einsum("eipc,epc->ei", df.weights, gq)
            np.add.at(vals, self.dofmap[ch], local)
            np.add.at(cnt, self.dofmap[ch], 1.0)
        return vals / cnt


def _chunks(elems, size=CHUNK):
    for i in range(0, len(elems), size):
        yield elems[i:i + size]


def to_reference(mesh, elems, X):
    """Physical points X (ne, nq, 3) -> reference coordinates in each tet."""
    x0, J = mesh.jacobians(elems)
    Jinv = np.linalg.inv(J)
    return np.einsum("eab,eqb->eqa", Jinv, X - x0[:, None, :])


def to_physical(mesh, elems, xh):
    x0, J = mesh.jacobians(elems)
    xh = np.asarray(xh, dtype=float)
    if xh.ndim == 2:
        return x0[:, None, :] + np.einsum("eab,qb->eqa", J, xh)
    return x0[:, None, :] + np.einsum("eab,eqb->eqa", J, xh)


def prebasis(space, elems, xh, need):
    """Mapped monomial prebasis at reference points xh (ne, nq, 3)."""
    mesh = space.mesh
    _, J = mesh.jacobians(elems)
    Jit = np.transpose(np.linalg.inv(J), (0, 2, 1))
    need = set(need)
    if space.kind == "lagrange":
        order = 1 if "grad" in need else 0
        res = monomials(xh, space.exps, order)
        out = {}
        if order == 0:
            out["value"] = res
        else:
            out["value"] = res[0]
            out["grad"] = np.einsum("eab,eqmb->eqma", Jit, res[1])
        return {k: v for k, v in out.items() if k in need}

    order = 2 if need & {"jac_curl", "curlcurl"} else (1 if need & {"curl", "jac"} else 0)
    res = monomials(xh, space.exps, order)
    m = res if order == 0 else res[0]
    ne, nq, nm = m.shape
    out = {}
    # a[e, c, :] is the physical image of reference direction e_c
    a = np.transpose(Jit, (0, 2, 1))
    if "value" in need:
        out["value"] = np.einsum("ecd,eqm->eqcmd", a, m).reshape(ne, nq, 3 * nm, 3)
    if order >= 1:
        g = np.einsum("eab,eqmb->eqma", Jit, res[1])
        if "curl" in need:
            out["curl"] = np.cross(g[:, :, None, :, :], a[:, None, :, None, :]).reshape(ne, nq, 3 * nm, 3)
        if "jac" in need:
            out["jac"] = np.einsum("eci,eqml->eqcmil", a, g).reshape(ne, nq, 3 * nm, 3, 3)
    if order >= 2:
        H = np.einsum("eab,eqmbc,edc->eqmad", Jit, res[2], Jit)
        if "jac_curl" in need:
            # d_l curl(a m)_i = (H[:, l] x a)_i
            Hl = np.transpose(H, (0, 1, 2, 4, 3))  # [..., l, :] = H[:, l]
            jc = np.cross(Hl[:, :, None, :, :, :], a[:, None, :, None, None, :])
            out["jac_curl"] = np.transpose(jc, (0, 1, 2, 3, 5, 4)).reshape(ne, nq, 3 * nm, 3, 3)
        if "curlcurl" in need:
            tr = np.trace(H, axis1=3, axis2=4)
            # curl curl (m a) = H a - (lap m) a
            cc = (np.einsum("eqmdk,eck->eqcmd", H, a)
                  - np.einsum("ecd,eqm->eqcmd", a, tr))
            out["curlcurl"] = cc.reshape(ne, nq, 3 * nm, 3)
    return out


def _sorted_entity(mesh, elems, local, nverts):
    """Global vertex coordinates of each local entity in ascending global index."""
    t = mesh.tets[elems][:, local]
    t = np.sort(t, axis=-1)
    return mesh.vertices[t]


def _hcurl_functionals(mesh, l, elems):
    ne = len(elems)
    lr = line_rule(2 * l)
    s = lr.points[:, 0]
    leg = np.stack([eval_sh_legendre(r, s) for r in range(l + 1)])  # (l+1, nq)
    E = _sorted_entity(mesh, elems, LOCAL_EDGES, 2)  # (ne, 6, 2, 3)
    tvec = E[:, :, 1] - E[:, :, 0]
    epts = E[:, :, None, 0] + s[None, None, :, None] * tvec[:, :, None, :]  # (ne, 6, nq, 3)
    ew = np.einsum("q,rq,ejd->ejrqd", lr.weights, leg, tvec)  # (ne, 6, l+1, nq, 3)

    tr = tri_rule(2 * l)
    fs, ft = tr.points[:, 0], tr.points[:, 1]
    F = _sorted_entity(mesh, elems, LOCAL_FACES, 3)  # (ne, 4, 3, 3)
    t1 = F[:, :, 1] - F[:, :, 0]
    t2 = F[:, :, 2] - F[:, :, 0]
    fpts = (F[:, :, None, 0] + fs[None, None, :, None] * t1[:, :, None, :]
            + ft[None, None, :, None] * t2[:, :, None, :])
    tests = np.array([np.stack(q(fs, ft)) for q in _face_rt_tests(l)])  # (nfd, 2, nq)
    fw = (np.einsum("q,rq,ejd->ejrqd", tr.weights, tests[:, 0], t1)
          + np.einsum("q,rq,ejd->ejrqd", tr.weights, tests[:, 1], t2))

    nel, nfl = 6 * (l + 1), 4 * len(tests)
    nqe, nqf = len(s), len(fs)
    pts = [epts.reshape(ne, -1, 3), fpts.reshape(ne, -1, 3)]
    npts = 6 * nqe + 4 * nqf
    blocks = []
    W = np.zeros((ne, nel + nfl, npts, 3))
    for j in range(6):
        W[:, j * (l + 1):(j + 1) * (l + 1), j * nqe:(j + 1) * nqe] = ew[:, j]
    off = 6 * nqe
    for j in range(4):
        nfd = len(tests)
        W[:, nel + j * nfd: nel + (j + 1) * nfd, off + j * nqf: off + (j + 1) * nqf] = fw[:, j]
    blocks.append(W)
    if l == 3:
        qr = tet_rule(2 * l)
        xh = qr.points
        x0, J = mesh.jacobians(elems)
        ipts = x0[:, None, :] + np.einsum("eab,qb->eqa", J, xh)
        qhat = np.concatenate([np.broadcast_to(np.eye(3)[:, None, :], (3, len(xh), 3)),
                               xh[None]], axis=0)  # (4, nq, 3)
        iw = np.einsum("q,eab,rqb->erqa", qr.weights, J, qhat)  # (ne, 4, nq, 3)
        Wfull = np.zeros((ne, nel + nfl + 4, npts + len(xh), 3))
        Wfull[:, :nel + nfl, :npts] = W
        Wfull[:, nel + nfl:, npts:] = iw
        pts.append(ipts)
        return DofFunctionals(np.concatenate(pts, axis=1), Wfull)
    return DofFunctionals(np.concatenate(pts, axis=1), W)


def _lattice_nodes(mesh, elems, m):
    """Lagrange nodes of degree m ordered vertex/edge/face/interior by global orientation."""
    ne = len(elems)
    V = mesh.vertices[mesh.tets[elems]]  # (ne, 4, 3)
    nodes = [V]
    E = _sorted_entity(mesh, elems, LOCAL_EDGES, 2)
    js = np.arange(1, m) / m
    nodes.append((E[:, :, None, 0] + js[None, None, :, None] * (E[:, :, None, 1] - E[:, :, None, 0]))
                 .reshape(ne, -1, 3))
    F = _sorted_entity(mesh, elems, LOCAL_FACES, 3)
    bary = [(m - j - l_, j, l_) for j in range(1, m) for l_ in range(1, m) if m - j - l_ >= 1]
    if bary:
        b = np.array(bary, dtype=float) / m  # (nf, 3)
        nodes.append(np.einsum("fk,ejkd->ejfd", b, F).reshape(ne, -1, 3))
    inner = [(m - a - b - c, a, b, c) for a in range(1, m) for b in range(1, m)
             for c in range(1, m) if m - a - b - c >= 1]
    if inner:
        b = np.array(inner, dtype=float) / m
        nodes.append(np.einsum("fk,ekd->efd", b, V))
    return np.concatenate(nodes, axis=1)


def _lagrange_functionals(mesh, m, elems):
    X = _lattice_nodes(mesh, elems, m)
    n = X.shape[1]
    W = np.broadcast_to(np.eye(n)[None, :, :, None], (len(elems), n, n, 1))
    return DofFunctionals(X, W)


def _local_coefficients(space):
    mesh = space.mesh
    out = np.empty((mesh.n_tets, space.coeffs_shape[0], space.coeffs_shape[1]))
    for ch in _chunks(np.arange(mesh.n_tets)):
        df = space.dof_functionals(ch)
        xh = to_reference(mesh, ch, df.points)
        pre = prebasis(space, ch, xh, ("value",))["value"]
        if space.kind == "lagrange":
            pre = pre[..., None]
        D = np.einsum("eipc,epjc->eij", df.weights, pre)
        out[ch] = np.linalg.inv(D)
    return out


def build_hcurl_space(mesh, degree):
    """E_h = H0(curl) cap [P_degree]^3 with degree = k + 1 in {2, 3}."""
    if degree not in HCURL_DEGREES:
        raise ValueError(f"unsupported H(curl) degree {degree}; expected one of {HCURL_DEGREES}")
    l = degree
    ned, nfd, nid = l + 1, l * l - 1, (4 if l == 3 else 0)
    nE, nF, nT = mesh.n_edges, mesh.n_faces, mesh.n_tets
    edofs = (mesh.tet_edges[:, :, None] * ned + np.arange(ned)).reshape(nT, -1)
    fdofs = (nE * ned + mesh.tet_faces[:, :, None] * nfd + np.arange(nfd)).reshape(nT, -1)
    parts = [edofs, fdofs]
    if nid:
        parts.append(nE * ned + nF * nfd + np.arange(nT)[:, None] * nid + np.arange(nid))
    dofmap = np.concatenate(parts, axis=1)
    ndofs = nE * ned + nF * nfd + nT * nid
    boundary = np.zeros(ndofs, dtype=bool)
    be = np.flatnonzero(mesh.boundary_edge)
    boundary[(be[:, None] * ned + np.arange(ned)).ravel()] = True
    bf = mesh.boundary_faces
    boundary[(nE * ned + bf[:, None] * nfd + np.arange(nfd)).ravel()] = True
    exps = monomial_exponents(l)
    space = FESpace(mesh, "hcurl", l, exps, dofmap, ndofs, boundary, coeffs=None,
                    entity_dofs=dict(edge=ned, face=nfd, interior=nid))
    space.coeffs = _local_coefficients(space)
    return space


def build_lagrange_space(mesh, degree):
    """Q_h = H1_0 cap P_degree with degree = k + 2 in {3, 4}."""
    if degree not in LAGRANGE_DEGREES:
        raise ValueError(f"unsupported Lagrange degree {degree}; expected one of {LAGRANGE_DEGREES}")
    m = degree
    ned, nfd, nid = m - 1, (m - 1) * (m - 2) // 2, (m - 1) * (m - 2) * (m - 3) // 6
    nV, nE, nF, nT = mesh.n_vertices, mesh.n_edges, mesh.n_faces, mesh.n_tets
    parts = [mesh.tets,
             (nV + mesh.tet_edges[:, :, None] * ned + np.arange(ned)).reshape(nT, -1),
             (nV + nE * ned + mesh.tet_faces[:, :, None] * nfd + np.arange(nfd)).reshape(nT, -1)]
    if nid:
        parts.append(nV + nE * ned + nF * nfd + np.arange(nT)[:, None] * nid + np.arange(nid))
    dofmap = np.concatenate(parts, axis=1)
    ndofs = nV + nE * ned + nF * nfd + nT * nid
    boundary = np.zeros(ndofs, dtype=bool)
    boundary[np.flatnonzero(mesh.boundary_vertex)] = True
    be = np.flatnonzero(mesh.boundary_edge)
    boundary[(nV + be[:, None] * ned + np.arange(ned)).ravel()] = True
    bf = mesh.boundary_faces
    boundary[(nV + nE * ned + bf[:, None] * nfd + np.arange(nfd)).ravel()] = True
    exps = monomial_exponents(m)
    assert dofmap.shape[1] == comb(m + 3, 3)
    space = FESpace(mesh, "lagrange", m, exps, dofmap, ndofs, boundary, coeffs=None,
                    entity_dofs=dict(vertex=1, edge=ned, face=nfd, interior=nid))
    space.coeffs = _local_coefficients(space)
    return space


def eval_fe_function(space, coefficients, elems, xh, need=("value",)):
    """Evaluate a finite element function on tets ``elems`` at reference points.

    ``coefficients`` has length ``space.ndofs`` (full) or ``space.nfree``
    (constrained; boundary DOFs taken as zero). Returns a dict keyed like
    :meth:`FESpace.eval_basis`.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape == (space.nfree,) and space.nfree != space.ndofs:
        coefficients = space.expand(coefficients)
    if coefficients.shape != (space.ndofs,):
        raise ValueError(
            f"dimension mismatch: got {coefficients.shape[0]} coefficients, "
            f"space has {space.ndofs} ({space.nfree} free)")
    elems = np.atleast_1d(elems)
    basis = space.eval_basis(elems, xh, need)
    c = coefficients[space.dofmap[elems]]
    out = {}
    for key, arr in basis.items():
        extra = "".join("xyz"[: arr.ndim - 3])
        out[key] = np.einsum(f"eqi{extra},ei->eq{extra}", arr, c)
    return out


def max_trace_jump(space, degree=6):
    """Largest inter-element trace jump of any global basis function, relative.

    For E_h the tangential trace n x v is compared, for Q_h the value. Each
    face's jump is scaled by the largest trace magnitude on that face.
    """
    mesh = space.mesh
    rule = tri_rule(degree)
    faces = mesh.interior_faces
    worst = 0.0
    for ch in _chunks(faces):
        P = mesh.vertices[mesh.faces[ch]]
        s, t = rule.points[:, 0], rule.points[:, 1]
        X = (P[:, None, 0] + s[None, :, None] * (P[:, None, 1] - P[:, None, 0])
             + t[None, :, None] * (P[:, None, 2] - P[:, None, 0]))
        e1, e2 = mesh.face_owner[ch], mesh.face_neighbor[ch]
        v1 = space.eval_basis(e1, to_reference(mesh, e1, X), ("value",))["value"]
        v2 = space.eval_basis(e2, to_reference(mesh, e2, X), ("value",))["value"]
        if space.is_vector:
            nrm = mesh.face_normal[ch][:, None, None, :]
            v1, v2 = np.cross(nrm, v1), np.cross(nrm, v2)
        else:
            v1, v2 = v1[..., None], v2[..., None]
        d1, d2 = space.dofmap[e1], space.dofmap[e2]
        for f in range(len(ch)):
            dofs = np.union1d(d1[f], d2[f])
            jump = np.zeros((len(rule.weights), len(dofs), v1.shape[-1]))
            jump[:, np.searchsorted(dofs, d1[f])] += v1[f]
            jump[:, np.searchsorted(dofs, d2[f])] -= v2[f]
            scale = max(np.abs(v1[f]).max(), np.abs(v2[f]).max())
            worst = max(worst, float(np.abs(jump).max() / scale))
    return worst


def gradient_representation_residual(espace, qspace, qcoeffs, degree=8):
    """||I grad q - grad q||_0 / ||grad q||_0 with I the E_h interpolant (unconstrained)."""
    mesh = espace.mesh
    qfull = np.asarray(qcoeffs, dtype=float)
    if qfull.shape == (qspace.nfree,) and qspace.nfree != qspace.ndofs:
        qfull = qspace.expand(qfull)
    v = espace.interpolate_gradient(qspace, qfull)
    rule = tet_rule(degree)
    num = den = 0.0
    for ch in _chunks(np.arange(mesh.n_tets)):
        wd = rule.weights[None, :] * mesh.volumes[ch][:, None]
        a = eval_fe_function(espace, v, ch, rule.points)["value"]
        g = eval_fe_function(qspace, qfull, ch, rule.points, ("grad",))["grad"]
        num += float(np.sum(wd * np.sum((a - g) ** 2, axis=-1)))
        den += float(np.sum(wd * np.sum(g * g, axis=-1)))
    return np.sqrt(num / den) if den > 0 else np.sqrt(num)
