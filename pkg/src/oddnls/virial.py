"""Full and localized virial functionals.

The localized weight is phi(x) = x^2 on |x| <= 1, 0 on |x| >= 2, and on
1 <= |x| <= 2 the unique degree-7 polynomial in s = |x| - 1 matching
value and the first three derivatives at both ends (C^3 overall).
"""

from __future__ import annotations

import numpy as np

from .grid import Field

# P(s) = sum_k PHI_COEFFS[k] s^k on s in [0, 1]
PHI_COEFFS = np.array([1.0, 2.0, 1.0, 0.0, -85.0, 194.0, -157.0, 44.0])
_DERIVS = [PHI_COEFFS]
for _ in range(4):
    _DERIVS.append(np.polynomial.polynomial.polyder(_DERIVS[-1]))


def _phi_generic(x, order: int):
    """order-th derivative of the weight (order 0..4)."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    inner = [a**2, 2.0 * a, 2.0 * np.ones_like(a), np.zeros_like(a), np.zeros_like(a)][order]
    s = np.clip(a - 1.0, 0.0, 1.0)
    mid = np.polynomial.polynomial.polyval(s, _DERIVS[order])
    out = np.where(a <= 1.0, inner, np.where(a < 2.0, mid, 0.0))
    if order % 2:
        out = np.sign(x) * out
    return out


def phi(x):
    return _phi_generic(x, 0)


def dphi(x):
    return _phi_generic(x, 1)


def d2phi(x):
    return _phi_generic(x, 2)


def d3phi(x):
    return _phi_generic(x, 3)


def d4phi(x):
    return _phi_generic(x, 4)


def weight_report() -> dict:
    """Continuity defects at |x| = 1, 2 and the extreme values of phi''."""
    s = np.linspace(0.0, 1.0, 20001)
    d2 = np.polynomial.polynomial.polyval(s, _DERIVS[2])
    inner = [1.0, 2.0, 2.0, 0.0]
    jumps_1 = [abs(np.polynomial.polynomial.polyval(0.0, _DERIVS[k]) - inner[k]) for k in range(4)]
    jumps_2 = [abs(np.polynomial.polynomial.polyval(1.0, _DERIVS[k])) for k in range(4)]
    return {
        "max_jump_at_1": float(max(jumps_1)),
        "max_jump_at_2": float(max(jumps_2)),
        "max_d2phi": float(d2.max()),
        "min_d2phi": float(d2.min()),
    }


# --- virial functionals -----------------------------------------------------------

def variance(f: Field) -> float:
    """J(u) = int x^2 |u|^2."""
    return float(f.grid.integrate(f.grid.x**2 * np.abs(f.values) ** 2))


def variance_derivative(f: Field) -> float:
    """J'(u) = 4 Im int x conj(u) u_x, the time derivative of J along the flow."""
    u = f.values
    return float(4.0 * f.grid.integrate(f.grid.x * np.imag(np.conj(u) * f.deriv())))


def localized_variance(f: Field, R: float) -> float:
    """J_R(u) = int R^2 phi(x/R) |u|^2."""
    x = f.grid.x
    return float(f.grid.integrate(R**2 * phi(x / R) * np.abs(f.values) ** 2))


def localized_variance_derivative(f: Field, R: float) -> float:
    """J_R'(u) = 2 Im int R phi'(x/R) conj(u) u_x."""
    x = f.grid.x
    u = f.values
    return float(2.0 * f.grid.integrate(R * dphi(x / R) * np.imag(np.conj(u) * f.deriv())))


def localized_virial_F(f: Field, R: float, p: float) -> float:
    """F_R(u) = 4 int phi''(x/R)(|u_x|^2 - c_p |u|^{p+1}) - R^-2 int phi''''(x/R)|u|^2."""
    x = f.grid.x
    u = f.values
    cp = (p - 1.0) / (2.0 * (p + 1.0))
    du2 = np.abs(f.deriv()) ** 2
    a = np.abs(u)
    bulk = 4.0 * f.grid.integrate(d2phi(x / R) * (du2 - cp * a ** (p + 1.0)))
    edge = f.grid.integrate(d4phi(x / R) * a**2) / R**2
    return float(bulk - edge)


def virial_K(f: Field, p: float) -> float:
    u = f.values
    return float(
        f.grid.integrate(np.abs(f.deriv()) ** 2)
        - (p - 1.0) / (2.0 * (p + 1.0)) * f.grid.integrate(np.abs(u) ** (p + 1.0))
    )


def localized_virial_A(f: Field, R: float, p: float) -> float:
    """A_R(u) = F_R(u) - 8 K(u)."""
    return localized_virial_F(f, R, p) - 8.0 * virial_K(f, p)
