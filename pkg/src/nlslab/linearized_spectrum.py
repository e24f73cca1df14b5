"""Real block form of the linearized operator around W and its eigenmode.

Writing a perturbation v = y1 + i*y2 of W, the linearized flow
d/dt v + L(v) = 0 decomposes into the two self-adjoint Schroedinger-type
blocks

    L_plus  = Lap + p_c W^{p_c - 1}    (acts on the real part),
    L_minus = Lap +     W^{p_c - 1}    (acts on the imaginary part),

with the eigenmode relations  L_minus y2 = e0 y1  and  -L_plus y1 = e0 y2,
so y1 is an eigenvector of the composition L_minus L_plus with eigenvalue
-e0^2 (its most negative eigenvalue).  The unstable/stable pair is
Y_plus = y1 + i y2 (rate +e0) and its conjugate Y_minus (rate -e0).

The solve proceeds in three stages: a dense eigenvalue sweep on a coarse
grid to locate the shift (avoids locking onto truncated-continuum
artifacts), Rayleigh-quotient iteration on the fine-grid composition with
banded solves, and a final inverse-iteration polish on the 2N x 2N block
system, which certifies the eigenpair to near round-off.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import bmat, diags, identity

from . import discretization as dz
from . import ground_state as gs


class LinearizedBlocks:
    """The pair (L_plus, L_minus) on a grid, plus the underlying Laplacian."""

    def __init__(self, grid, bc="tail"):
        self.grid = grid
        self.lapl = dz.build_laplacian(grid, bc=bc)
        self.W = gs.sample_w(grid)
        pc = gs.critical_exponent(grid.d)
        self.p_c = pc
        T = self.lapl.matrix()
        pot = self.W ** (pc - 1)
        self.L_plus = (T + diags(pc * pot)).tocsc()
        self.L_minus = (T + diags(pot)).tocsc()

    def composition(self):
        """L_minus @ L_plus (pentadiagonal)."""
        return (self.L_minus @ self.L_plus).tocsc()


def build_blocks(grid, bc="tail"):
    return LinearizedBlocks(grid, bc=bc)


class EigenPair:
    """(e0, y1, y2) with Y_plus = y1 + i y2, normalized to ||Y_plus||_{H1-dot} = 1."""

    def __init__(self, e0, y1, y2, residual=None, normalization=None):
        self.e0 = float(e0)
        self.y1 = np.asarray(y1, dtype=float)
        self.y2 = np.asarray(y2, dtype=float)
        self.residual = residual
        self.normalization = normalization or {}

    @property
    def y_plus(self):
        return self.y1 + 1j * self.y2

    @property
    def y_minus(self):
        return self.y1 - 1j * self.y2


def _coarse_shift(d, r_max, bc="tail", n_coarse=400):
    """Most negative eigenvalue of the composed operator on a coarse grid.

    Dense sweep; anchors the fine-grid inverse iteration away from
    truncated-continuum artifacts.
    """
    grid = dz.build_grid(d, r_max, n_coarse)
    blocks = LinearizedBlocks(grid, bc=bc)
    lam = np.linalg.eigvals(blocks.composition().toarray())
    real = lam[np.abs(lam.imag) < 1e-8 * np.abs(lam.real).max()].real
    neg = real[real < 0]
    if neg.size == 0:
        raise RuntimeError(
            "no negative eigenvalue of L_minus L_plus on the coarse grid "
            "(d=%d, r_max=%g): grid too coarse or domain too small" % (d, r_max))
    return float(neg.min())


def ground_mode(blocks, shift=None, tol=1e-10, max_rqi=40, n_coarse=400):
    """Compute (e0, Y_plus) for the linearized operator.

    shift: optional starting eigenvalue guess for L_minus L_plus (negative);
    by default located by the coarse-grid sweep.
    """
    grid = blocks.grid
    N = grid.nnodes
    M = blocks.composition()
    if shift is None:
        shift = _coarse_shift(grid.d, grid.r_max, bc=blocks.lapl.bc,
                              n_coarse=min(n_coarse, grid.n))
    if shift >= 0:
        raise ValueError("shift must be negative (eigenvalue is -e0^2)")

    # stage 1: Rayleigh-quotient iteration on the composition
    lam = shift
    x = np.exp(-grid.r ** 2)
    I = identity(N, format="csc")
    converged = False
    for _ in range(max_rqi):
        x = spla.spsolve((M - lam * I).tocsc(), x)
        x /= np.linalg.norm(x)
        Mx = M @ x
        lam_new = float(x @ Mx)
        res = np.linalg.norm(Mx - lam_new * x)
        done = abs(lam_new - lam) <= 1e-12 * abs(lam_new)
        lam = lam_new
        if done:
            converged = True
            break
    if lam >= 0:
        raise RuntimeError("Rayleigh iteration drifted to a nonnegative eigenvalue")

    # stage 2: polish on the block system B (y1, y2) -> (L_minus y2, -L_plus y1)
    e0 = float(np.sqrt(-lam))
    B = bmat([[None, blocks.L_minus], [-blocks.L_plus, None]], format="csc")
    z = np.concatenate([x, -(blocks.L_plus @ x) / e0])
    z /= np.linalg.norm(z)
    lu = spla.splu((B - e0 * (1 + 1e-8) * identity(2 * N, format="csc")).tocsc())
    converged = False
    for _ in range(12):
        z = lu.solve(z)
        z /= np.linalg.norm(z)
        Bz = B @ z
        e0 = float(z @ Bz)
        if np.linalg.norm(Bz - e0 * z) <= max(tol * abs(e0), 1e-13):
            converged = True
            break
    if not converged or e0 <= 0:
        raise RuntimeError("block inverse iteration did not certify a positive rate "
                           "(reached e0=%g)" % (e0,))

    y1, y2 = z[:N].copy(), z[N:].copy()
    if y1[0] < 0:
        y1, y2 = -y1, -y2
    nrm = np.sqrt(dz.kinetic_sq(y1, grid) + dz.kinetic_sq(y2, grid))
    y1 /= nrm
    y2 /= nrm
    pair = EigenPair(e0, y1, y2,
                     normalization={"norm": "h1dot", "value": 1.0,
                                    "sign": "y1(0) > 0"})
    pair.residual = eigen_residual(blocks, pair)
    return pair


def eigen_residual(blocks, pair):
    """Relative block residual max(||L_minus y2 - e0 y1||, ||L_plus y1 + e0 y2||) / ||pair||.

    Norms are weighted L^2 over the interior nodes (the boundary row carries
    the modified stencil).
    """
    grid = blocks.grid
    r1 = blocks.L_minus @ pair.y2 - pair.e0 * pair.y1
    r2 = blocks.L_plus @ pair.y1 + pair.e0 * pair.y2
    scale = np.sqrt(dz.l2_norm(pair.y1, grid, interior=True) ** 2
                    + dz.l2_norm(pair.y2, grid, interior=True) ** 2)
    return max(dz.l2_norm(r1, grid, interior=True),
               dz.l2_norm(r2, grid, interior=True)) / scale


def save_eigenpair(basepath, pair, grid):
    """Write the eigenmode as a field CSV plus a JSON sidecar."""
    dz.save_field(str(basepath) + ".csv", pair.y_plus, grid)
    dz.save_json(str(basepath) + ".json", {
        "d": grid.d, "r_max": grid.r_max, "n": grid.n,
        "e0": pair.e0, "residual": pair.residual,
        "normalization": pair.normalization,
    })


def load_eigenpair(basepath):
    y, grid = dz.load_field(str(basepath) + ".csv")
    meta = dz.load_json(str(basepath) + ".json")
    pair = EigenPair(meta["e0"], y.real, y.imag,
                     residual=meta["residual"],
                     normalization=meta["normalization"])
    return pair, grid
