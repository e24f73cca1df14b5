"""Closed-form ground state W, its symmetry family, and conserved functionals.

W(r) = (1 + r^2/(d(d-2)))^{-(d-2)/2} solves the static equation
Delta W + W^{p_c} = 0 with p_c = (d+2)/(d-2), is the extremal of the
critical Sobolev embedding, and generates the two-parameter symmetry family
W_{[theta,mu]} = e^{i theta} mu^{-(d-2)/2} W(r/mu).

Energy and kinetic norms accept an optional power-law tail correction: the
truncated-domain quadrature misses the slowly decaying r^{-(d-2)} tail of
W-like fields, which matters for the tightest identities (Pohozaev, sharp
Sobolev constant).  tail="powerlaw" fits the exterior analytically from the
last two nodes; tail="none" is the plain truncated quadrature.
"""

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import discretization as dz


def critical_exponent(d):
    """Energy-critical exponent p_c = (d+2)/(d-2)."""
    if d < 3:
        raise ValueError("dimension must be >= 3, got %r" % (d,))
    return (d + 2) / (d - 2)


def eval_w(d, r):
    """Ground state W(r); strictly decreasing, W(0) = 1, tail ~ r^{-(d-2)}."""
    if d < 3:
        raise ValueError("dimension must be >= 3, got %r" % (d,))
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("radius must be finite")
    out = (1.0 + r ** 2 / (d * (d - 2))) ** (-(d - 2) / 2)
    return out if out.ndim else float(out)


def eval_w_derivative(d, r):
    """Radial derivative dW/dr in closed form."""
    if d < 3:
        raise ValueError("dimension must be >= 3, got %r" % (d,))
    r = np.asarray(r, dtype=float)
    base = 1.0 + r ** 2 / (d * (d - 2))
    out = -(r / d) * base ** (-d / 2)
    return out if out.ndim else float(out)


def scaling_generator(d, r):
    """Generator of the scaling symmetry, Lambda W = ((d-2)/2) W + r dW/dr.

    Lies in the kernel of the linearized operator block L_plus.
    """
    return (d - 2) / 2 * eval_w(d, r) + np.asarray(r) * eval_w_derivative(d, r)


def sample_w(grid):
    """W sampled on a RadialGrid."""
    return eval_w(grid.d, grid.r)


class SymmetryParams:
    """Phase/scale symmetry parameters (theta, mu); radial setting, no translation."""

    def __init__(self, theta=0.0, mu=1.0):
        if mu <= 0:
            raise ValueError("scale mu must be positive, got %r" % (mu,))
        self.theta = float(theta)
        self.mu = float(mu)

    def __repr__(self):
        return "SymmetryParams(theta=%g, mu=%g)" % (self.theta, self.mu)


def kinetic_norm(u, grid, tail="none", refine=False):
    """||grad u||_2 by the flux quadratic form, optionally tail-corrected
    (exterior power-law fit) and Richardson-refined in h."""
    k2 = dz.kinetic_sq(u, grid, refine=refine)
    if tail == "powerlaw":
        c1, c2 = dz.fit_powerlaw_tail(u, grid)
        k2 += dz.tail_kinetic_sq(c1, c2, grid)
    elif tail != "none":
        raise ValueError("unknown tail option %r" % (tail,))
    return float(np.sqrt(k2))


def potential_term(u, grid, tail="none"):
    """||u||_{p_c+1}^{p_c+1} = ||u||_{2d/(d-2)}^{2d/(d-2)}, optionally tail-corrected."""
    pc = critical_exponent(grid.d)
    p = dz.integrate(np.abs(np.asarray(u)) ** (pc + 1), grid)
    if tail == "powerlaw":
        c1, c2 = dz.fit_powerlaw_tail(u, grid)
        p += dz.tail_lp(c1, c2, pc + 1, grid)
    elif tail != "none":
        raise ValueError("unknown tail option %r" % (tail,))
    return p


def energy(u, grid, tail="none", refine=False):
    """Conserved energy E(u) = 1/2 ||grad u||^2 - (d-2)/(2d) ||u||_{2d/(d-2)}^{2d/(d-2)}."""
    d = grid.d
    k = kinetic_norm(u, grid, tail=tail, refine=refine)
    p = potential_term(u, grid, tail=tail)
    e = 0.5 * k ** 2 - (d - 2) / (2 * d) * p
    if not np.isfinite(e):
        raise ValueError("non-finite energy (blowup-range field?)")
    return e


def sobolev_quotient(u, grid, tail="powerlaw", refine=True):
    """Sobolev quotient ||u||_{2d/(d-2)} / ||grad u||_2, maximized by the W family."""
    u = np.asarray(u)
    if not np.any(u):
        raise ValueError("zero field has no Sobolev quotient")
    pc = critical_exponent(grid.d)
    k = kinetic_norm(u, grid, tail=tail, refine=refine and grid.n % 2 == 0)
    p = potential_term(u, grid, tail=tail)
    return p ** (1 / (pc + 1)) / k


def w_family(theta, mu, grid):
    """W_{[theta,mu]} evaluated exactly on the grid (no interpolation)."""
    if mu <= 0:
        raise ValueError("scale mu must be positive, got %r" % (mu,))
    d = grid.d
    return np.exp(1j * theta) * mu ** (-(d - 2) / 2) * eval_w(d, grid.r / mu)


def apply_symmetry(u, s, grid, tail="powerlaw"):
    """e^{i theta} mu^{-(d-2)/2} u(r/mu) resampled on the grid.

    Monotone cubic (PCHIP) interpolation in r, applied separately to real and
    imaginary parts; queries beyond r_max use the power-law tail r^{-(d-2)}
    matched at the last node (tail="powerlaw") or zero (tail="zero").
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (grid.nnodes,):
        raise ValueError("field does not match grid")
    if s.mu <= 0:
        raise ValueError("scale mu must be positive")
    if s.mu < 2 * grid.h / grid.r_max * 10:
        raise ValueError("mu=%g concentrates the field below grid resolution" % (s.mu,))
    if tail not in ("powerlaw", "zero"):
        raise ValueError("unknown tail option %r" % (tail,))
    q = grid.r / s.mu
    inside = q <= grid.r_max
    if not np.any(inside[1:]):
        raise ValueError("mu=%g pushes all mass outside the truncated domain" % (s.mu,))
    out = np.zeros(grid.nnodes, dtype=complex)
    interp_re = PchipInterpolator(grid.r, u.real)
    interp_im = PchipInterpolator(grid.r, u.imag)
    out[inside] = interp_re(q[inside]) + 1j * interp_im(q[inside])
    if tail == "powerlaw" and np.any(~inside):
        out[~inside] = u[-1] * (grid.r_max / q[~inside]) ** (grid.d - 2)
    amp = np.exp(1j * s.theta) * s.mu ** (-(grid.d - 2) / 2)
    return amp * out
