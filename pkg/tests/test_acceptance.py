"""Acceptance criteria 1-9; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``. The lines are written past
pytest's output capture so they appear in the normal log.
"""
import numpy as np
import pytest

from quadcurl.errors import eoc
from quadcurl.forms import SchemeParams, assemble_a, assemble_parts, stiffness_matrix, triple_norm
from quadcurl.inequality import coercivity_margin, sobolev_constant
from quadcurl.linsolve import solve_saddle
from quadcurl.manufactured import case_a, case_b, fd_check
from quadcurl.mesh import generate_cube_mesh
from quadcurl.pipeline import build_spaces, run_level
from quadcurl.spaces import gradient_representation_residual, max_trace_jump


@pytest.fixture
def report(capsys):
    def _report(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return _report


@pytest.fixture(scope="module")
def case_a_levels():
    """Case A, k=1, symmetric, tau=20 on n = 2, 4, 8; shared by criteria 1 and 8."""
    return [run_level(case_a(), SchemeParams(k=1, tau=20.0), n=n).errors for n in (2, 4, 8)]


RATE_BANDS = dict(e_L2_u=(1.8, 2.4), e_L2_curl=(1.8, 2.4), e_energy=(0.8, 1.4),
                  e_grad_p=(2.6, 3.4))


def test_criterion_1_convergence_rates(case_a_levels, report):
    orders = eoc(case_a_levels, k=1).orders[-1]
    parts, ok = [], True
    for key, (lo, hi) in RATE_BANDS.items():
        good = lo <= orders[key] <= hi
        ok &= good
        parts.append(f"{key} {orders[key]:.3f} in [{lo}, {hi}] {'ok' if good else 'MISS'}")
    assert report(1, ok, "; ".join(parts)), orders


def test_criterion_2_zero_multiplier(report):
    ratios = {}
    for n in (2, 4):
        err = run_level(case_b(), n=n).errors
        ratios[n] = err.e_grad_p / err.f_L2
    ok = all(r <= 1e-8 for r in ratios.values())
    assert report(2, ok, ", ".join(f"n={n}: |grad p_h|/|f| = {r:.2e}" for n, r in ratios.items())
                  + " (<= 1e-8)")


def test_criterion_3_inf_sup_mechanism(report):
    E, Q = build_spaces(generate_cube_mesh(2), 1)
    params = SchemeParams()
    parts = assemble_parts(E)
    L = stiffness_matrix(Q)
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(50):
        q = rng.standard_normal(Q.nfree)
        v = E.interpolate_gradient(Q, Q.expand(q))[E.free]
        t = triple_norm(E, v, params, parts)
        g = np.sqrt(q @ (L @ q))
        worst = max(worst, abs(t - g) / g)
    assert report(3, worst <= 1e-12, f"max | |||grad q||| - ||grad q|| | / ||grad q|| = {worst:.2e} "
                  "over 50 samples (<= 1e-12)")


def test_criterion_4_conformity_and_gradients(report):
    rng = np.random.default_rng(42)
    jumps, resid = [], []
    for n in (1, 2):
        E, Q = build_spaces(generate_cube_mesh(n), 1)
        jumps.append(max_trace_jump(E))
        for _ in range(5):
            resid.append(gradient_representation_residual(E, Q, rng.standard_normal(Q.ndofs)))
    ok = max(jumps) <= 1e-11 and max(resid) <= 1e-10
    assert report(4, ok, f"max tangential jump {max(jumps):.2e} (<= 1e-11), "
                  f"max grad representation residual {max(resid):.2e} (<= 1e-10)")


def test_criterion_5_sobolev_trend(report):
    c2 = sobolev_constant(generate_cube_mesh(2), 2, n=2).constant
    c4 = sobolev_constant(generate_cube_mesh(4), 2, n=4).constant
    ratio = c4 / c2
    assert report(5, ratio <= 1.5, f"C(2) = {c2:.4f}, C(4) = {c4:.4f}, ratio {ratio:.4f} (<= 1.5)")


def test_criterion_6_coercivity(report):
    mesh = generate_cube_mesh(1)
    m = [coercivity_margin(mesh, 1, tau) for tau in (5.0, 20.0, 80.0)]
    ok = m[1] > 0 and m[0] <= m[1] <= m[2]
    assert report(6, ok, f"margins tau=5,20,80: {m[0]:.4f}, {m[1]:.4f}, {m[2]:.4f} "
                  "(positive at 20, non-decreasing)")


def test_criterion_7_manufactured_integrity(report):
    rng = np.random.default_rng(42)
    case = case_a()
    fd = fd_check(case, rng.uniform(0.01, 0.99, (50, 3)))
    x = rng.uniform(0, 1, (200, 3))
    axis = rng.integers(0, 3, 200)
    x[np.arange(200), axis] = rng.integers(0, 2, 200)
    nrm = np.zeros((200, 3))
    nrm[np.arange(200), axis] = 1.0
    bc = max(np.abs(np.cross(nrm, case.u(x))).max(), np.abs(np.cross(nrm, case.curl_u(x))).max(),
             np.abs(case.p(x)).max())
    ok = fd <= 1e-5 and bc <= 1e-10
    assert report(7, ok, f"fd_check {fd:.2e} (<= 1e-5), boundary residual {bc:.2e} (<= 1e-10)")


def test_criterion_8_stability_ratios(case_a_levels, report):
    keys = ("uh_L3_over_f", "curl_uh_L6_over_f", "curl_uh_dH1_over_f")
    ratios = [r.ratios() for r in case_a_levels]
    parts, ok = [], True
    for key in keys:
        growth = [b[key] / a[key] for a, b in zip(ratios[:-1], ratios[1:])]
        good = max(growth) <= 1.3
        ok &= good
        parts.append(f"{key} growth {', '.join(f'{g:.3f}' for g in growth)} {'ok' if good else 'MISS'}")
    assert report(8, ok, "; ".join(parts) + " (<= 1.3 per halving)")


def test_criterion_9_determinism_and_algebra(report):
    mesh = generate_cube_mesh(2)
    E, Q = build_spaces(mesh, 1)
    params = SchemeParams()
    A = assemble_a(mesh, E, params)
    sym = abs(A - A.T).max() / abs(A).max()
    rng = np.random.default_rng(42)
    ann = 0.0
    for _ in range(10):
        x = E.interpolate_gradient(Q, Q.expand(rng.standard_normal(Q.nfree)))[E.free]
        ann = max(ann, np.linalg.norm(A @ x) / (abs(A).max() * np.linalg.norm(x)))
    lv = run_level(case_a(), params, n=2)
    u2, p2, _ = solve_saddle(lv.blocks.A, lv.blocks.B, lv.blocks.F)
    same = np.array_equal(lv.u, u2) and np.array_equal(lv.p, p2)
    ok = sym <= 1e-12 and ann <= 1e-12 and same
    assert report(9, ok, f"asymmetry {sym:.2e}, |A grad| {ann:.2e} (both <= 1e-12), "
                  f"repeat solve bit-identical: {same}")
