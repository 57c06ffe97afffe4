import csv
import io
import math

import numpy as np
import pytest

from quadcurl.errors import (NORMS, ErrorReport, EocTable, FEField, best_energy_approximation,
                             compute_errors, csv_columns, eoc, l2_norm, lp_norm, order, project_l2)
from quadcurl.forms import SchemeParams
from quadcurl.manufactured import case_a, case_b
from quadcurl.mesh import generate_cube_mesh
from quadcurl.pipeline import build_spaces, run_level


def _report(h, value, n=None):
    return ErrorReport(n=n, h=h, dofs_u=1, dofs_p=1, **dict.fromkeys(NORMS, value))


def test_eoc_examples():
    t = eoc([_report(0.5, 0.4), _report(0.25, 0.1)])
    assert all(v == pytest.approx(2.0) for v in t.orders[0].values())
    t = eoc([_report(0.5, 0.3), _report(0.25, 0.3)])
    assert all(v == 0.0 for v in t.orders[0].values())
    assert order(0.8, 0.1) == pytest.approx(3.0)


def test_eoc_errors():
    with pytest.raises(ValueError, match="at least 2"):
        eoc([_report(0.5, 1.0)])
    with pytest.raises(ValueError, match="non-halving"):
        eoc([_report(0.5, 1.0), _report(0.3, 0.5)])


def test_eoc_zero_error_is_nan():
    t = eoc([_report(0.5, 0.0), _report(0.25, 0.0)])
    assert all(math.isnan(v) for v in t.orders[0].values())


def test_csv_layout():
    t = eoc([_report(0.5, 0.4, 2), _report(0.25, 0.1, 4)])
    rows = list(csv.reader(io.StringIO(t.to_csv())))
    assert rows[0] == csv_columns()
    assert rows[0][:4] == ["n", "h", "dofs_u", "dofs_p"]
    assert rows[1][csv_columns().index("order_e_L2_u")] == "nan"
    assert float(rows[2][csv_columns().index("order_e_L2_u")]) == pytest.approx(2.0)
    partial = EocTable([_report(0.5, 0.4, 2)], [], {}, complete=False).to_csv()
    assert partial.rstrip().endswith("rows above are partial")
    assert partial.startswith(",".join(csv_columns()))


def test_lp_norm_of_constant(mesh2):
    one = lambda x: np.ones(x.shape[:-1])
    for p in (1.5, 2, 3, 6):
        assert lp_norm(mesh2, one, p) == pytest.approx(1.0, rel=1e-13)
    vec = lambda x: np.broadcast_to([3.0, 0.0, 4.0], x.shape)
    assert lp_norm(mesh2, vec, 3) == pytest.approx(5.0, rel=1e-13)


def test_lp_norm_unsupported(mesh1):
    with pytest.raises(ValueError, match="unsupported exponent"):
        lp_norm(mesh1, lambda x: x, 4)


def test_lp_norm_monomial(mesh2):
    # int_(0,1)^3 x^2 = 1/3 and int x^3 = 1/4 (L3/2 of x^2)
    assert lp_norm(mesh2, lambda x: x[..., 0], 2) == pytest.approx(math.sqrt(1 / 3), rel=1e-13)
    assert lp_norm(mesh2, lambda x: x[..., 0] ** 2, 1.5) == pytest.approx(0.25 ** (2 / 3), rel=1e-12)


def test_l2_norm_matches_lp(spaces2, rng):
    E, Q = spaces2
    for space in (E, Q):
        c = rng.standard_normal(space.nfree)
        f = FEField(space, c)
        assert lp_norm(space.mesh, f, 2) == pytest.approx(l2_norm(f), rel=1e-12)


def test_project_l2(spaces2):
    E, Q = spaces2
    lin = lambda x: x[..., 0] + x[..., 1] + x[..., 2]
    c = project_l2(Q, lin, constrained=False)
    np.testing.assert_allclose(c, Q.interpolate(lin), atol=1e-11)
    # idempotent: projecting an FE function returns its coefficients
    field = lambda x: np.stack([x[..., 1] ** 2, x[..., 0] * x[..., 2], x[..., 0]], axis=-1)
    ce = project_l2(E, field, constrained=False)
    np.testing.assert_allclose(ce, E.interpolate(field), atol=1e-11)


def test_projection_rate():
    f = lambda x: np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]) * np.sin(np.pi * x[..., 2])
    errs = []
    for n in (2, 4):
        _, Q = build_spaces(generate_cube_mesh(n), 1)
        # Pythagoras for the orthogonal projection, with ||f||^2 = 1/8
        proj = l2_norm(FEField(Q, project_l2(Q, f)))
        errs.append(math.sqrt(1 / 8 - proj ** 2))
    assert math.log2(errs[0] / errs[1]) >= 3.5  # P3 gives order 4


def test_zero_approximant(spaces2, params):
    E, Q = spaces2
    case = case_a()
    r = compute_errors(E.mesh, E, Q, params, case, np.zeros(E.nfree), np.zeros(Q.nfree))
    assert r.e_L2_u == pytest.approx(lp_norm(E.mesh, case.u, 2), rel=1e-12)
    assert r.e_grad_p == pytest.approx(math.sqrt(3 * math.pi ** 2 / 8), rel=1e-3)
    # the exact tangential trace of curl u vanishes, so only the volume part remains
    assert r.e_energy == pytest.approx(lp_norm(E.mesh, case.curlcurl_u, 2), rel=1e-12)
    assert r.uh_L3 == 0.0 and r.curl_uh_L6 == 0.0


def test_penalty_part_of_energy_error(spaces2):
    E, Q = spaces2
    case = case_a()
    ui = E.interpolate(case.u)[E.free]
    z = np.zeros(Q.nfree)
    lo = compute_errors(E.mesh, E, Q, SchemeParams(tau=20.0), case, ui, z).e_energy
    hi = compute_errors(E.mesh, E, Q, SchemeParams(tau=80.0), case, ui, z).e_energy
    assert hi > lo


def test_mesh_mismatch(spaces2, mesh1, params):
    E, Q = spaces2
    with pytest.raises(ValueError, match="mismatch"):
        compute_errors(mesh1, E, Q, params, case_a(), np.zeros(E.nfree), np.zeros(Q.nfree))


@pytest.fixture(scope="module")
def levels_a():
    return {n: run_level(case_a(), n=n) for n in (2, 4)}


def test_quasi_optimal_energy(levels_a):
    lv = levels_a[2]
    params = SchemeParams()
    x = best_energy_approximation(lv.espace, lv.qspace, params, case_a(), lv.blocks.parts,
                                  lv.blocks.B)
    best = compute_errors(lv.mesh, lv.espace, lv.qspace, params, case_a(), x,
                          np.zeros(lv.qspace.nfree))
    assert lv.errors.e_energy >= best.e_energy - 1e-10
    # and within a modest factor of it
    assert lv.errors.e_energy <= 1.5 * best.e_energy


def test_errors_decrease(levels_a):
    e2, e4 = levels_a[2].errors, levels_a[4].errors
    for key in NORMS:
        assert getattr(e4, key) < getattr(e2, key)
    t = eoc([e2, e4])
    assert t.orders[0]["e_grad_p"] > 2.0


def test_case_b_multiplier_vanishes():
    lv = run_level(case_b(), n=2)
    assert lv.errors.e_grad_p <= 1e-8 * lv.errors.f_L2
    assert lv.errors.f_L2 > 0
