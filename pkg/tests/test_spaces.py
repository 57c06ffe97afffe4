import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadcurl.forms import SchemeParams, triple_norm
from quadcurl.mesh import Mesh
from quadcurl.quadrature import tet_rule
from quadcurl.spaces import (build_hcurl_space, build_lagrange_space, eval_fe_function,
                             gradient_representation_residual, map_hcurl, max_trace_jump,
                             monomial_exponents, to_physical)


def test_dimensions_n1(mesh1):
    E2 = build_hcurl_space(mesh1, 2)
    assert E2.ndofs == 3 * 19 + 3 * 18 == 111
    assert E2.nfree == 21  # 3 on the interior diagonal edge + 3 on each of the 6 interior faces
    Q3 = build_lagrange_space(mesh1, 3)
    assert Q3.ndofs == 8 + 2 * 19 + 18 == 64
    # The Kuhn split has one interior edge (the main diagonal) and six interior
    # faces, so Q_h keeps 2 + 6 = 8 free DOFs even on the single-cube mesh.
    assert Q3.nfree == 8
    assert build_hcurl_space(mesh1, 3).ndofs == 4 * 19 + 8 * 18 + 4 * 6
    assert build_lagrange_space(mesh1, 4).ndofs == 8 + 3 * 19 + 3 * 18 + 6


def test_dimension_formulas(mesh2):
    E = build_hcurl_space(mesh2, 2)
    Q = build_lagrange_space(mesh2, 3)
    assert E.ndofs == 3 * mesh2.n_edges + 3 * mesh2.n_faces
    assert Q.ndofs == mesh2.n_vertices + 2 * mesh2.n_edges + mesh2.n_faces
    assert E.nloc == 30 and Q.nloc == 20


@pytest.mark.parametrize("bad", [1, 4])
def test_unsupported_degrees(mesh1, bad):
    with pytest.raises(ValueError, match="unsupported"):
        build_hcurl_space(mesh1, bad)
    with pytest.raises(ValueError, match="unsupported"):
        build_lagrange_space(mesh1, bad + 1 if bad == 1 else 5)


@pytest.mark.parametrize("n_fixture", ["mesh1", "mesh2"])
@pytest.mark.parametrize("degree", [2, 3])
def test_conformity(request, n_fixture, degree):
    mesh = request.getfixturevalue(n_fixture)
    assert max_trace_jump(build_hcurl_space(mesh, degree)) <= 1e-11
    assert max_trace_jump(build_lagrange_space(mesh, degree + 1)) <= 1e-11


@pytest.mark.parametrize("degree", [2, 3])
def test_gradient_inclusion(mesh2, degree, rng):
    E = build_hcurl_space(mesh2, degree)
    Q = build_lagrange_space(mesh2, degree + 1)
    for _ in range(3):
        q = rng.standard_normal(Q.ndofs)
        assert gradient_representation_residual(E, Q, q) <= 1e-10


def test_gradient_of_constrained_q_is_constrained(spaces2, rng):
    E, Q = spaces2
    v = E.interpolate_gradient(Q, Q.expand(rng.standard_normal(Q.nfree)))
    assert np.abs(v[E.boundary]).max() <= 1e-12 * np.abs(v).max()


def _sample(space, coeffs, n_pts=7, seed=0):
    rng = np.random.default_rng(seed)
    xh = rng.dirichlet(np.ones(4), size=n_pts)[:, 1:]
    elems = np.arange(space.mesh.n_tets)
    return to_physical(space.mesh, elems, xh), eval_fe_function(space, coeffs, elems, xh,
                                                                 ("value", "curl"))


@pytest.mark.parametrize("degree", [2, 3])
def test_local_completeness(mesh2, degree):
    E = build_hcurl_space(mesh2, degree)
    for e in monomial_exponents(degree):
        for c in range(3):
            def field(x, e=e, c=c):
                out = np.zeros(x.shape)
                out[..., c] = x[..., 0] ** e[0] * x[..., 1] ** e[1] * x[..., 2] ** e[2]
                return out
            X, vals = _sample(E, E.interpolate(field))
            assert np.abs(vals["value"] - field(X)).max() <= 1e-10


def test_constant_field_reproduced(spaces1):
    E, _ = spaces1
    X, vals = _sample(E, E.interpolate(lambda x: np.broadcast_to([1.0, 0, 0], x.shape)))
    assert np.allclose(vals["value"], [1, 0, 0], atol=1e-12)
    assert np.allclose(vals["curl"], 0, atol=1e-11)


def test_lagrange_reproduces_linear(spaces2):
    _, Q = spaces2
    x = Q.interpolate(lambda p: p.sum(axis=-1))
    rule = tet_rule(4)
    elems = np.arange(Q.mesh.n_tets)
    X = to_physical(Q.mesh, elems, rule.points)
    vals = eval_fe_function(Q, x, elems, rule.points, ("value", "grad"))
    assert np.abs(vals["value"] - X.sum(axis=-1)).max() <= 1e-12
    assert np.allclose(vals["grad"], 1.0, atol=1e-11)


def test_map_hcurl_identity():
    v, c = map_hcurl([1.0, 2.0, 3.0], [4.0, 5.0, 6.0], np.eye(3))
    assert np.allclose(v, [1, 2, 3]) and np.allclose(c, [4, 5, 6])


@given(st.floats(0.1, 10.0))
def test_map_hcurl_scaling(s):
    v, c = map_hcurl([1.0, 2.0, 3.0], [4.0, 5.0, 6.0], s * np.eye(3))
    assert np.allclose(v, np.array([1, 2, 3]) / s)
    assert np.allclose(c, np.array([4, 5, 6]) / s ** 2)


@settings(max_examples=25)
@given(st.lists(st.floats(-2, 2), min_size=9, max_size=9))
def test_map_hcurl_gradient_has_zero_curl(entries):
    J = np.array(entries).reshape(3, 3) + 3 * np.eye(3)
    if np.linalg.det(J) <= 1e-3:
        J[:, 0] *= -1
    if np.linalg.det(J) <= 1e-3:
        return
    # reference q = x y z at (0.2, 0.3, 0.4): grad = (yz, xz, xy), curl 0
    _, c = map_hcurl([0.12, 0.08, 0.06], [0.0, 0.0, 0.0], J)
    assert np.allclose(c, 0.0)


def test_map_hcurl_degenerate():
    with pytest.raises(ValueError, match="degenerate"):
        map_hcurl([1, 0, 0], [0, 0, 1], np.diag([1.0, -1.0, 1.0]))


def test_eval_zero_and_mismatch(spaces1):
    E, _ = spaces1
    _, vals = _sample(E, np.zeros(E.ndofs))
    assert not np.any(vals["value"])
    with pytest.raises(ValueError, match="dimension mismatch"):
        eval_fe_function(E, np.zeros(E.ndofs + 1), [0], tet_rule(1).points)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3))
def test_eval_linear(spaces1, seed, a):
    E, _ = spaces1
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(E.ndofs), rng.standard_normal(E.ndofs)
    _, vx = _sample(E, x)
    _, vy = _sample(E, y)
    _, vs = _sample(E, a * x + y)
    assert np.allclose(vs["value"], a * vx["value"] + vy["value"], atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_functions_tangentially_continuous(spaces1, seed):
    """Random E_h functions agree tangentially from both sides of every interior face."""
    E, _ = spaces1
    m = E.mesh
    c = np.random.default_rng(seed).standard_normal(E.ndofs)
    from quadcurl.forms import face_points
    from quadcurl.quadrature import tri_rule
    from quadcurl.spaces import to_reference
    faces = m.interior_faces
    X, _ = face_points(m, faces, tri_rule(4))
    e1, e2 = m.face_owner[faces], m.face_neighbor[faces]
    v1 = eval_fe_function(E, c, e1, to_reference(m, e1, X))["value"]
    v2 = eval_fe_function(E, c, e2, to_reference(m, e2, X))["value"]
    n = m.face_normal[faces][:, None, :]
    assert np.abs(np.cross(n, v1 - v2)).max() <= 1e-11 * np.abs(c).max() * 100


@pytest.mark.parametrize("degree", [2, 3])
def test_orientation_robustness(rng, degree):
    """Relabeling the vertices changes DOF numbering but not the interpolant's norm.

    The field is polynomial so that the DOF quadratures are exact; for general
    fields the (non-symmetric) face rules make the interpolant depend on the
    labeling at the level of quadrature error.
    """
    from quadcurl.mesh import generate_cube_mesh
    base = generate_cube_mesh(2)
    perm = rng.permutation(base.n_vertices)
    inv = np.argsort(perm)
    relabeled = Mesh(base.vertices[perm], inv[base.tets][:, [0, 2, 1, 3]])

    def field(x):
        return np.stack([x[..., 1] ** 3 * x[..., 2], x[..., 0] * x[..., 2] ** 2,
                         x[..., 0] ** 2 * x[..., 1] ** 2], axis=-1)

    params = SchemeParams(k=degree - 1)
    vals = []
    for m in (base, relabeled):
        E = build_hcurl_space(m, degree)
        vals.append(triple_norm(E, E.interpolate(field), params))
    assert vals[0] == pytest.approx(vals[1], rel=1e-10)
