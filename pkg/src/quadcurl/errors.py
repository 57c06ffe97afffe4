"""Error norms, L^p norms and observed convergence orders.

Integrals of non-polynomial quantities (errors against closed forms, L^p
norms with p != 2) use the high-order rule from
:func:`quadrature.nonpolynomial_degree`; they are quadrature approximations
and reports carry ``quadrature_approximate = True``.
"""
import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.sparse.linalg as spla

from .forms import face_points, mass_matrix
from .quadrature import nonpolynomial_degree, tet_rule, tri_rule
from .spaces import _chunks, to_physical, to_reference

NORMS = ("e_L2_u", "e_L2_curl", "e_energy", "e_h1h_curl", "e_grad_p")
STABILITY = ("uh_L3", "curl_uh_L6", "curl_uh_dH1", "f_L32", "f_L2")
LP_EXPONENTS = (1.5, 2.0, 3.0, 6.0)


@dataclass
class ErrorReport:
    n: int | None
    h: float
    dofs_u: int
    dofs_p: int
    e_L2_u: float
    e_L2_curl: float
    e_energy: float
    e_h1h_curl: float
    e_grad_p: float
    uh_L3: float = math.nan
    curl_uh_L6: float = math.nan
    curl_uh_dH1: float = math.nan
    f_L32: float = math.nan
    f_L2: float = math.nan
    quadrature_approximate: bool = True

    def ratios(self):
        """Stability ratios: ||u_h||_L3, ||curl u_h||_L6 and the discrete H1 norm of curl u_h over ||f||_L3/2."""
        return dict(
            uh_L3_over_f=self.uh_L3 / self.f_L32,
            curl_uh_L6_over_f=self.curl_uh_L6 / self.f_L32,
            curl_uh_dH1_over_f=self.curl_uh_dH1 / self.f_L32,
        )

    def to_dict(self):
        return asdict(self)


@dataclass
class FEField:
    """A finite element function viewed as a field: value, curl, or grad."""
    space: object
    coefficients: np.ndarray
    quantity: str = "value"

    def full(self):
        c = np.asarray(self.coefficients, dtype=float)
        return self.space.expand(c) if c.shape == (self.space.nfree,) else c


def _fe_values(space, coeffs_full, elems, xh, keys):
    b = space.eval_basis(elems, xh, keys)
    c = coeffs_full[space.dofmap[elems]]
    out = {}
    for k, arr in b.items():
        extra = "".join("xyz"[: arr.ndim - 3])
        out[k] = np.einsum(f"eqi{extra},ei->eq{extra}", arr, c)
    return out


def _norm2(v):
    return np.sum(v * v, axis=tuple(range(2, v.ndim)))


def compute_errors(mesh, espace, qspace, params, case, u_h, p_h, n=None, degree=None):
    """All error norms of (u_h, p_h) against a manufactured case."""
    if espace.mesh is not mesh or qspace.mesh is not mesh:
        raise ValueError("case/space mesh mismatch: spaces belong to a different mesh")
    u = FEField(espace, u_h).full()
    p = FEField(qspace, p_h).full()
    if degree is None:
        degree = nonpolynomial_degree(params.k)
    rule = tet_rule(degree)
    acc = dict.fromkeys(["L2u", "L2c", "cc", "gc", "gp", "uL3", "cL6", "gch", "fL32", "fL2"], 0.0)
    for ch in _chunks(np.arange(mesh.n_tets)):
        X = to_physical(mesh, ch, rule.points)
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        ev = _fe_values(espace, u, ch, rule.points, ("value", "curl", "curlcurl", "jac_curl"))
        gp = _fe_values(qspace, p, ch, rule.points, ("grad",))["grad"]
        fx = case.f(X)
        acc["L2u"] += np.sum(wd * _norm2(case.u(X) - ev["value"]))
        acc["L2c"] += np.sum(wd * _norm2(case.curl_u(X) - ev["curl"]))
        acc["cc"] += np.sum(wd * _norm2(case.curlcurl_u(X) - ev["curlcurl"]))
        acc["gc"] += np.sum(wd * _norm2(case.jac_curl_u(X) - ev["jac_curl"]))
        acc["gp"] += np.sum(wd * _norm2(case.grad_p(X) - gp))
        acc["uL3"] += np.sum(wd * _norm2(ev["value"]) ** 1.5)
        acc["cL6"] += np.sum(wd * _norm2(ev["curl"]) ** 3)
        acc["gch"] += np.sum(wd * _norm2(ev["jac_curl"]))
        acc["fL32"] += np.sum(wd * _norm2(fx) ** 0.75)
        acc["fL2"] += np.sum(wd * _norm2(fx))

    acc = {k: float(v) for k, v in acc.items()}
    frule = tri_rule(min(degree, 14))
    jt = ja = jh = 0.0
    for ch in _chunks(np.arange(mesh.n_faces)):
        X, w = face_points(mesh, ch, frule)
        nrm = mesh.face_normal[ch]
        hF = mesh.face_h[ch]
        e1 = mesh.face_owner[ch]
        c1 = _fe_values(espace, u, e1, to_reference(mesh, e1, X), ("curl",))["curl"]
        jump_h = c1.copy()
        inner = ~mesh.face_is_boundary[ch]
        if inner.any():
            e2 = mesh.face_neighbor[ch][inner]
            c2 = _fe_values(espace, u, e2, to_reference(mesh, e2, X[inner]), ("curl",))["curl"]
            jump_h[inner] -= c2
        # exact field: continuous inside, one-sided trace on the boundary
        jump_exact = np.zeros_like(jump_h)
        bd = ~inner
        if bd.any():
            jump_exact[bd] = case.curl_u(X[bd])
        jump_err = jump_exact - jump_h
        ncross = np.cross(nrm[:, None, :], jump_err)
        jt += np.sum(w / hF[:, None] * _norm2(ncross))
        ja += np.sum(w / hF[:, None] * _norm2(jump_err))
        jh += np.sum(w / hF[:, None] * _norm2(jump_h))
    jt, ja, jh = float(jt), float(ja), float(jh)

    return ErrorReport(
        n=n,
        h=mesh.h,
        dofs_u=espace.nfree,
        dofs_p=qspace.nfree,
        e_L2_u=math.sqrt(acc["L2u"]),
        e_L2_curl=math.sqrt(acc["L2c"]),
        e_energy=math.sqrt(acc["cc"] + params.tau * jt),
        e_h1h_curl=math.sqrt(acc["gc"] + ja),
        e_grad_p=math.sqrt(acc["gp"]),
        uh_L3=acc["uL3"] ** (1 / 3),
        curl_uh_L6=acc["cL6"] ** (1 / 6),
        curl_uh_dH1=math.sqrt(acc["gch"] + jh),
        f_L32=acc["fL32"] ** (2 / 3),
        f_L2=math.sqrt(acc["fL2"]),
    )


def lp_norm(mesh, field, p, degree=None):
    """(sum_K int_K |field|^p)^(1/p) by quadrature.

    ``field`` is a callable on physical points (..., 3) or an :class:`FEField`.
    """
    p = float(p)
    if p not in LP_EXPONENTS:
        raise ValueError(f"unsupported exponent p={p}; expected one of {LP_EXPONENTS}")
    if degree is None:
        k = field.space.degree - 1 if isinstance(field, FEField) else 1
        degree = nonpolynomial_degree(k)
    rule = tet_rule(degree)
    total = 0.0
    if isinstance(field, FEField):
        coeffs = field.full()
        key = field.quantity if field.space.is_vector else ("grad" if field.quantity == "grad" else "value")
    for ch in _chunks(np.arange(mesh.n_tets)):
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        if isinstance(field, FEField):
            vals = _fe_values(field.space, coeffs, ch, rule.points, (key,))[key]
        else:
            vals = np.asarray(field(to_physical(mesh, ch, rule.points)), dtype=float)
        sq = vals * vals if vals.ndim == 2 else _norm2(vals)
        total += np.sum(wd * sq ** (p / 2))
    return float(total) ** (1 / p)


def l2_norm(field):
    """L2 norm of an FE function through its Gram matrix."""
    c = field.full()
    M = mass_matrix(field.space)
    return math.sqrt(max(float(c @ (M @ c)), 0.0))


def project_l2(space, func, constrained=True, degree=None):
    """L2 projection of a callable field onto the space (constrained by default)."""
    mesh = space.mesh
    if degree is None:
        degree = min(2 * space.degree + 4, 14)
    rule = tet_rule(degree)
    b = np.zeros(space.ndofs)
    for ch in _chunks(np.arange(mesh.n_tets)):
        X = to_physical(mesh, ch, rule.points)
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        vals = np.asarray(func(X), dtype=float)
        bv = space.eval_basis(ch, rule.points, ("value",))["value"]
        if bv.ndim == 3:
            loc = np.einsum("eq,eq,eqi->ei", wd, vals, bv)
        else:
            loc = np.einsum("eq,eqd,eqid->ei", wd, vals, bv)
        np.add.at(b, space.dofmap[ch], loc)
    M = mass_matrix(space, degree=2 * space.degree)
    if constrained:
        free = space.free
        x = np.zeros(space.ndofs)
        if len(free):
            x[free] = spla.spsolve(M[free][:, free].tocsc(), b[free])
        return x
    return spla.spsolve(M.tocsc(), b)


def best_energy_approximation(espace, qspace, params, case, parts, B):
    """Minimizer of the energy error over discretely divergence-free E_h.

    Gives a lower bound for the energy error of any member of E_h with Bx = 0.
    """
    from .linsolve import solve_saddle

    mesh = espace.mesh
    S = (parts["curlcurl"] + params.tau * parts["penalty"]).tocsr()
    rule = tet_rule(nonpolynomial_degree(params.k))
    rhs = np.zeros(espace.ndofs)
    for ch in _chunks(np.arange(mesh.n_tets)):
        X = to_physical(mesh, ch, rule.points)
        wd = rule.weights[None, :] * 6.0 * mesh.volumes[ch][:, None]
        cc = espace.eval_basis(ch, rule.points, ("curlcurl",))["curlcurl"]
        np.add.at(rhs, espace.dofmap[ch], np.einsum("eq,eqd,eqid->ei", wd, case.curlcurl_u(X), cc))
    frule = tri_rule(nonpolynomial_degree(params.k))
    bf = mesh.boundary_faces
    for ch in _chunks(bf):
        X, w = face_points(mesh, ch, frule)
        e1 = mesh.face_owner[ch]
        c1 = espace.eval_basis(e1, to_reference(mesh, e1, X), ("curl",))["curl"]
        nrm = mesh.face_normal[ch][:, None, :]
        ex = np.cross(nrm, case.curl_u(X))
        loc = np.einsum("fq,fqd,fqid->fi", params.tau * w / mesh.face_h[ch][:, None], ex,
                        np.cross(nrm[:, :, None, :], c1))
        np.add.at(rhs, espace.dofmap[e1], loc)
    free = espace.free
    x, _, _ = solve_saddle(S[free][:, free], B, rhs[free])
    return x


@dataclass
class EocTable:
    rows: list
    orders: list = field(default_factory=list)
    expected: dict = field(default_factory=dict)
    complete: bool = True

    def as_rows(self):
        out = []
        for i, r in enumerate(self.rows):
            row = dict(n=r.n, h=r.h, dofs_u=r.dofs_u, dofs_p=r.dofs_p)
            for k in NORMS:
                row[k] = getattr(r, k)
            for k, v in r.ratios().items():
                row[k] = v
            for k in NORMS:
                row[f"order_{k}"] = self.orders[i - 1][k] if i > 0 else math.nan
            out.append(row)
        return out

    def to_csv(self):
        buf = io.StringIO()
        rows = self.as_rows()
        cols = csv_columns()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
        if not self.complete:
            buf.write("# INCOMPLETE: a level failed; rows above are partial\n")
        return buf.getvalue()


def csv_columns():
    cols = ["n", "h", "dofs_u", "dofs_p", *NORMS,
            "uh_L3_over_f", "curl_uh_L6_over_f", "curl_uh_dH1_over_f"]
    cols += [f"order_{k}" for k in NORMS]
    return cols


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10e}"
    return str(v)


def expected_orders(k, smooth=True):
    """Target orders for smooth solutions on convex domains."""
    return dict(e_L2_u=k + 1, e_L2_curl=k + 1, e_energy=k, e_h1h_curl=k, e_grad_p=k + 2)


def eoc(reports, k=1, rtol=1e-8):
    """Observed orders log2(e(h) / e(h/2)) between consecutive levels."""
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("need at least 2 levels to compute orders")
    orders = []
    for a, b in zip(reports[:-1], reports[1:]):
        if abs(a.h / b.h - 2.0) > rtol * 2.0:
            raise ValueError(f"non-halving h sequence: {a.h:g} -> {b.h:g}")
        o = {}
        for key in NORMS:
            ea, eb = getattr(a, key), getattr(b, key)
            o[key] = math.log2(ea / eb) if ea > 0 and eb > 0 else math.nan
        orders.append(o)
    return EocTable(reports, orders, expected_orders(k))


def order(e_coarse, e_fine):
    return math.log2(e_coarse / e_fine)


def report_fields():
    return [f.name for f in fields(ErrorReport)]
