"""Closed-form exact solutions on the unit cube.

Both cases use the stream function psi = g(x) g(y) g(z) with
g(t) = sin^3(pi t), and u = curl(psi e_z) = (psi_y, -psi_x, 0). Then

    curl u        = (psi_xz, psi_yz, -psi_xx - psi_yy)
    curl^2 u      = (-d_y lap psi, d_x lap psi, 0)
    curl^3 u      = -grad(d_z lap psi) + lap^2 psi e_z
    curl^4 u      = (d_y lap^2 psi, -d_x lap^2 psi, 0) = curl(lap^2 psi e_z)

g, g' and g'' all vanish at t = 0 and t = 1, which gives u x n = 0 and
curl u x n = 0 on the boundary (sin^2 would fail: its second derivative is
nonzero at the ends). Case A adds p = sin(pi x) sin(pi y) sin(pi z); case B
has p = 0 and a divergence-free load. Case C repeats case A with the
polynomial profile 64 t^3 (1 - t)^3, which has the same end conditions.
"""
import numpy as np

PI = np.pi


def g_deriv(t, m):
    """m-th derivative of sin^3(pi t) = (3 sin(pi t) - sin(3 pi t)) / 4."""
    ph = m * PI / 2
    return (3 * PI ** m * np.sin(PI * t + ph) - (3 * PI) ** m * np.sin(3 * PI * t + ph)) / 4


_POLY = np.polynomial.Polynomial([0, 0, 0, 1]) * np.polynomial.Polynomial([1, -1]) ** 3 * 64


def poly_deriv(t, m):
    """m-th derivative of 64 t^3 (1 - t)^3, a polynomial profile with the same end conditions."""
    return _POLY.deriv(m)(t) if m else _POLY(t)


def _psi(x, a, b, c, g=g_deriv):
    return g(x[..., 0], a) * g(x[..., 1], b) * g(x[..., 2], c)


def _lap(x, a, b, c, g=g_deriv):
    """d^(a,b,c) of lap psi."""
    return _psi(x, a + 2, b, c, g) + _psi(x, a, b + 2, c, g) + _psi(x, a, b, c + 2, g)


def _bilap(x, a, b, c, g=g_deriv):
    """d^(a,b,c) of lap^2 psi."""
    return (_psi(x, a + 4, b, c, g) + _psi(x, a, b + 4, c, g) + _psi(x, a, b, c + 4, g)
            + 2 * (_psi(x, a + 2, b + 2, c, g) + _psi(x, a + 2, b, c + 2, g)
                   + _psi(x, a, b + 2, c + 2, g)))


class ManufacturedCase:
    name = "a"
    has_pressure = True
    g = staticmethod(g_deriv)

    @property
    def divergence_free_load(self):
        return not self.has_pressure

    def u(self, x):
        x = np.asarray(x, dtype=float)
        z = np.zeros(x.shape[:-1])
        return np.stack([_psi(x, 0, 1, 0, self.g), -_psi(x, 1, 0, 0, self.g), z], axis=-1)

    def div_u(self, x):
        x = np.asarray(x, dtype=float)
        return _psi(x, 1, 1, 0, self.g) - _psi(x, 1, 1, 0, self.g)

    def curl_u(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([_psi(x, 1, 0, 1, self.g), _psi(x, 0, 1, 1, self.g),
                         -_psi(x, 2, 0, 0, self.g) - _psi(x, 0, 2, 0, self.g)], axis=-1)

    def jac_curl_u(self, x):
        """J[..., i, l] = d_l (curl u)_i."""
        x = np.asarray(x, dtype=float)
        rows = [
            [_psi(x, 2, 0, 1, self.g), _psi(x, 1, 1, 1, self.g), _psi(x, 1, 0, 2, self.g)],
            [_psi(x, 1, 1, 1, self.g), _psi(x, 0, 2, 1, self.g), _psi(x, 0, 1, 2, self.g)],
            [-_psi(x, 3, 0, 0, self.g) - _psi(x, 1, 2, 0, self.g),
             -_psi(x, 2, 1, 0, self.g) - _psi(x, 0, 3, 0, self.g),
             -_psi(x, 2, 0, 1, self.g) - _psi(x, 0, 2, 1, self.g)],
        ]
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    def curlcurl_u(self, x):
        x = np.asarray(x, dtype=float)
        z = np.zeros(x.shape[:-1])
        return np.stack([-_lap(x, 0, 1, 0, self.g), _lap(x, 1, 0, 0, self.g), z], axis=-1)

    def curl3_u(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([-_lap(x, 1, 0, 1, self.g), -_lap(x, 0, 1, 1, self.g),
                         -_lap(x, 0, 0, 2, self.g) + _bilap(x, 0, 0, 0, self.g)], axis=-1)

    def curl4_u(self, x):
        x = np.asarray(x, dtype=float)
        z = np.zeros(x.shape[:-1])
        return np.stack([_bilap(x, 0, 1, 0, self.g), -_bilap(x, 1, 0, 0, self.g), z], axis=-1)

    def p(self, x):
        x = np.asarray(x, dtype=float)
        return np.sin(PI * x[..., 0]) * np.sin(PI * x[..., 1]) * np.sin(PI * x[..., 2])

    def grad_p(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sin(PI * x)
        c = np.cos(PI * x)
        return PI * np.stack([c[..., 0] * s[..., 1] * s[..., 2],
                              s[..., 0] * c[..., 1] * s[..., 2],
                              s[..., 0] * s[..., 1] * c[..., 2]], axis=-1)

    def f(self, x):
        return self.curl4_u(x) + self.grad_p(x)

    def load_potential(self, x):
        """w with curl w = curl^4 u."""
        x = np.asarray(x, dtype=float)
        z = np.zeros(x.shape[:-1])
        return np.stack([z, z, _bilap(x, 0, 0, 0, self.g)], axis=-1)

    def load_split(self):
        """(w, r) with f = curl w + r."""
        return self.load_potential, self.grad_p


class CaseB(ManufacturedCase):
    name = "b"
    has_pressure = False

    def p(self, x):
        return np.zeros(np.asarray(x).shape[:-1])

    def grad_p(self, x):
        return np.zeros(np.asarray(x).shape)


class CaseC(ManufacturedCase):
    """Case A with the polynomial profile 64 t^3 (1 - t)^3 instead of sin^3(pi t).

    Same boundary behaviour; a second smooth solution for rate studies whose
    derivatives are exact polynomials.
    """
    name = "c"
    g = staticmethod(poly_deriv)


def case_a():
    return ManufacturedCase()


def case_b():
    return CaseB()


def case_c():
    return CaseC()


CASES = {"a": case_a, "b": case_b, "c": case_c}


def get_case(name):
    try:
        return CASES[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None


# fourth-order central difference: f' ~ (f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h
_FD_OFFSETS = (-2, -1, 1, 2)
_FD_COEFFS = (1 / 12, -8 / 12, 8 / 12, -1 / 12)


def fd_jacobian(func, x, step):
    """J[..., i, l] ~ d_l func_i by fourth-order central differences."""
    x = np.asarray(x, dtype=float)
    cols = []
    for l in range(3):
        acc = 0.0
        for o, c in zip(_FD_OFFSETS, _FD_COEFFS):
            xs = x.copy()
            xs[..., l] += o * step
            acc = acc + c * np.asarray(func(xs))
        cols.append(acc / step)
    return np.stack(cols, axis=-1)


def fd_curl(func, step):
    def curl(x):
        J = fd_jacobian(func, x, step)
        return np.stack([J[..., 2, 1] - J[..., 1, 2],
                         J[..., 0, 2] - J[..., 2, 0],
                         J[..., 1, 0] - J[..., 0, 1]], axis=-1)
    return curl


def fd_grad(func, step):
    def grad(x):
        return fd_jacobian(lambda y: np.asarray(func(y))[..., None], x, step)[..., 0, :]
    return grad


def _rel(a, b):
    scale = np.max(np.abs(b))
    if scale == 0.0:
        return float(np.max(np.abs(a - b)))
    return float(np.max(np.abs(a - b)) / scale)


def fd_check(case, points, step=2e-3, detail=False):
    """Worst relative discrepancy between closed forms and finite differences.

    Each closed form is compared with differences of the one below it
    (curl u against FD curl of u, curl^2 u against FD curl of curl u, ...),
    and f against a doubly nested FD curl of curl^2 u plus FD grad p.
    Discrepancies are max-norm errors scaled by the max norm of the closed
    form over the sample.
    """
    if not 1e-4 <= step <= 1e-2:
        raise ValueError(f"step must lie in [1e-4, 1e-2], got {step}")
    x = np.atleast_2d(np.asarray(points, dtype=float))
    reach = 4 * step
    if np.any(x < reach) or np.any(x > 1 - reach):
        raise ValueError(f"points closer than {reach:g} to the boundary; stencil leaves the domain")
    checks = {
        "u": _rel(case.u(x), case.u(x)),
        "div_u": float(np.max(np.abs(np.trace(fd_jacobian(case.u, x, step), axis1=-2, axis2=-1)))
                       / max(np.max(np.abs(fd_jacobian(case.u, x, step))), 1e-300)),
        "curl_u": _rel(fd_curl(case.u, step)(x), case.curl_u(x)),
        "jac_curl_u": _rel(fd_jacobian(case.curl_u, x, step), case.jac_curl_u(x)),
        "curlcurl_u": _rel(fd_curl(case.curl_u, step)(x), case.curlcurl_u(x)),
        "curl3_u": _rel(fd_curl(case.curlcurl_u, step)(x), case.curl3_u(x)),
        "grad_p": _rel(fd_grad(case.p, step)(x), case.grad_p(x)) if case.has_pressure else 0.0,
        "f": _rel(fd_curl(fd_curl(case.curlcurl_u, step), step)(x) + fd_grad(case.p, step)(x),
                  case.f(x)),
        "load_potential": _rel(fd_curl(case.load_potential, step)(x), case.f(x) - case.grad_p(x)),
    }
    worst = max(checks.values())
    return (worst, checks) if detail else worst
