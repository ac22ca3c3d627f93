"""Variable-coefficient elliptic solve for the pressure.

Applying div^phi to the momentum equation and requiring that the time
derivative of div^phi v vanish (including the motion of the operator
coefficients) gives

    lap^phi q = div^phi( -(vbar.dbar) v - V_N d3 v + (F_k.grad^phi) F_k )
                + geo(v)

where geo(v) collects the time derivatives of the d^phi coefficients
(through dt psi = v.N).  Boundary conditions:

* Dirichlet on Sigma:  q = sigma H(psi) + kappa (1-lap)^2 psi
                          + kappa (1-lap) (v.N),
  the regularized balance with dt psi eliminated kinematically;
* Neumann on Sigma_b:  d3^phi q = (F_k . grad^phi) F_3k, which is the third
  momentum component restricted to the bottom where v_3 = 0 and the
  transport speed vanishes.

The discrete system is solved by preconditioned GMRES; the preconditioner
inverts the flat-geometry operator mode by mode (Chebyshev LU per |k|^2),
which is exact at psi = 0 and a compact perturbation for small psi.
"""

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, gmres

from .grid import Grid
from .geometry import FlattenedGeometry
from . import flat_calculus as fc

DEFAULT_TOL = 1e-10
DEFAULT_MAXITER = 500


class NonConvergence(RuntimeError):
    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"pressure solve stalled at residual {residual:.3e} "
            f"after {iterations} iterations"
        )


class FlatPreconditioner:
    """Per-mode solve of (d_zz - |k|^2) with Dirichlet top / Neumann bottom,
    LU-factored once per distinct |k|^2 (kd_sq, matching the derivative
    multipliers of the variable-coefficient operator)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        D2 = grid.Dz @ grid.Dz
        uniq, gidx = np.unique(grid.kd_sq, return_inverse=True)
        gidx = gidx.reshape(grid.kd_sq.shape)
        self._lus = []
        self._groups = []
        for m, ksq in enumerate(uniq):
            M = D2 - ksq * np.eye(grid.nz)
            M[-1, :] = 0.0
            M[-1, -1] = 1.0          # Dirichlet row at z = 0
            M[0, :] = grid.Dz[0, :]  # Neumann row at z = -b
            self._lus.append(lu_factor(M))
            self._groups.append(np.nonzero(gidx == m))

    def apply(self, r):
        g = self.grid
        rh = g.spectrum(r)
        out = np.empty_like(rh)
        for lu, idx in zip(self._lus, self._groups):
            out[idx] = lu_solve(lu, rh[idx].T).T
        return g.inverse_spectrum(out)


_PRECOND_CACHE = {}


def _preconditioner(grid: Grid):
    key = (grid.nx, grid.ny, grid.nz, grid.b)
    if key not in _PRECOND_CACHE:
        _PRECOND_CACHE[key] = FlatPreconditioner(grid)
    return _PRECOND_CACHE[key]


def apply_pressure_operator(q, geom: FlattenedGeometry):
    """lap^phi q in the interior, q on the top row, d3^phi q on the bottom.

    Fused transform pipeline; algebraically identical to
    div_phi(grad_phi(q)) with the same dealiasing placement.
    """
    grid = geom.grid
    r1, r2, inv = fc._ratios(geom)
    mask = grid.dealias_mask[..., None]
    ik1 = (1j * grid.kd1)[..., None]
    ik2 = (1j * grid.kd2)[..., None]

    qh = grid.spectrum(q)
    d3q = grid.dz(q)
    Ph = grid.spectrum(np.stack([r1 * d3q, r2 * d3q, inv * d3q])) * mask
    X = grid.inverse_spectrum(
        np.stack([ik1 * qh - Ph[0], ik2 * qh - Ph[1], Ph[2]])
    )
    d3X = grid.dz(X)
    vert_h = grid.spectrum(-r1 * d3X[0] - r2 * d3X[1] + inv * d3X[2]) * mask
    out = grid.inverse_spectrum(
        -(grid.kd_sq[..., None]) * qh - ik1 * Ph[0] - ik2 * Ph[1] + vert_h
    )
    out[:, :, -1] = q[:, :, -1]
    out[:, :, 0] = (d3q * inv)[:, :, 0]
    return out


def solve_poisson(geom: FlattenedGeometry, rhs, g_top, g_bottom,
                  tol=DEFAULT_TOL, maxiter=DEFAULT_MAXITER, x0=None):
    """Solve the pressure problem with interior RHS and boundary data.

    The system is posed on the 2/3-rule band (data projected, operator
    wrapped as P A P), so the returned pressure is band-limited like every
    other dealiased product of the discretization.
    """
    grid = geom.grid
    b = rhs.copy()
    b[:, :, -1] = g_top
    b[:, :, 0] = g_bottom
    b = grid.dealias(b)
    shape = b.shape
    n = b.size

    # row scaling by vertical level: the Chebyshev D^2 rows grow like N^4,
    # which would otherwise set a poor roundoff floor for the residual
    D2 = grid.Dz @ grid.Dz
    srow = 1.0 / (1.0 + np.abs(D2).sum(axis=1))
    srow[-1] = 1.0
    srow[0] = 1.0 / (1.0 + np.abs(grid.Dz[0]).sum())
    b = b * srow

    def matvec(x):
        out = apply_pressure_operator(
            grid.dealias(x.reshape(shape)), geom
        )
        return (grid.dealias(out) * srow).ravel()

    pre = _preconditioner(grid)

    def psolve(x):
        return pre.apply(x.reshape(shape) / srow).ravel()

    A = LinearOperator((n, n), matvec=matvec)
    M = LinearOperator((n, n), matvec=psolve)
    b_flat = b.ravel()
    bnorm = np.linalg.norm(b_flat)
    if bnorm == 0.0:
        return np.zeros(shape), 0.0
    x0_flat = None if x0 is None else grid.dealias(x0).ravel()
    restart = 60
    outer = max(1, int(np.ceil(maxiter / restart)))
    x, info = gmres(A, b_flat, x0=x0_flat, rtol=tol, atol=0.0,
                    restart=restart, maxiter=outer, M=M)
    residual = float(np.linalg.norm(matvec(x) - b_flat) / bnorm)
    if info != 0 or not np.isfinite(residual):
        raise NonConvergence(residual, maxiter)
    return x.reshape(shape), residual


def _geometry_motion_divergence(v, geom: FlattenedGeometry, dtpsi):
    """geo(v): time derivative of the div^phi coefficients applied to v,
    assembled from dt phi = chi dt psi."""
    grid = geom.grid
    chi = geom.chi
    chi_p = geom.chi_prime
    dtpsi3 = dtpsi[:, :, None]
    dt_d3phi = chi_p * dtpsi3
    dt_d1phi = chi * grid.dx1(dtpsi)[:, :, None]
    dt_d2phi = chi * grid.dx2(dtpsi)[:, :, None]
    d3 = geom.d3phi
    dt_r1 = dt_d1phi / d3 - geom.d1phi * dt_d3phi / d3 ** 2
    dt_r2 = dt_d2phi / d3 - geom.d2phi * dt_d3phi / d3 ** 2
    dt_inv = -dt_d3phi / d3 ** 2
    d3v = grid.dz(v)
    return grid.dealias(
        -dt_r1 * d3v[0] - dt_r2 * d3v[1] + dt_inv * d3v[2]
    )


def nonpressure_rhs(v, F, geom: FlattenedGeometry):
    """-(vbar.dbar) v - V_N d3 v + sum_k (F_k.grad^phi) F_k."""
    grid = geom.grid
    VN = fc.advective_coefficient(v, geom)
    adv = grid.dealias(
        v[0] * grid.dx1(v) + v[1] * grid.dx2(v) + VN * grid.dz(v)
    )
    elastic = np.zeros_like(v)
    for k in range(3):
        elastic += fc.directional_phi(F[:, k], F[:, k], geom)
    return elastic - adv


def dirichlet_surface_data(psi, dtpsi, params, grid: Grid):
    """q on Sigma: sigma H(psi) + kappa(1-lap)^2 psi + kappa(1-lap) dtpsi."""
    g = params.sigma * fc.mean_curvature(psi, grid)
    if params.kappa != 0.0:
        g = g + params.kappa * fc.multiplier(psi, "one_minus_lap_sq", grid)
        g = g + params.kappa * fc.multiplier(dtpsi, "one_minus_lap", grid)
    return g


def solve_pressure_fields(v, F, geom: FlattenedGeometry, params,
                          tol=DEFAULT_TOL, maxiter=DEFAULT_MAXITER, x0=None):
    """Pressure for the nonlinear system; returns (q, relative residual)."""
    from .state import surface_velocity_normal

    grid = geom.grid
    dtpsi = surface_velocity_normal(v, geom)
    rhs_vec = nonpressure_rhs(v, F, geom)
    rhs = fc.div_phi(rhs_vec, geom)
    rhs += _geometry_motion_divergence(v, geom, dtpsi)
    g_top = dirichlet_surface_data(geom.psi, dtpsi, params, grid)
    elastic3 = np.zeros((grid.nx, grid.ny, grid.nz))
    for k in range(3):
        elastic3 += fc.directional_phi(F[:, k], F[:, k], geom)[2]
    g_bottom = elastic3[:, :, 0]
    return solve_poisson(geom, rhs, g_top, g_bottom, tol, maxiter, x0)


def momentum_divergence_residual(state, geom: FlattenedGeometry, params):
    """Discrete residual of the statement that D_t^phi preserves
    div^phi v = 0: || div^phi(dt v) + geo(v) ||_inf with dt v assembled
    from the momentum right side using the solved q."""
    rhs_vec = nonpressure_rhs(state.v, state.F, geom)
    rhs_vec = rhs_vec - fc.grad_phi(state.q, geom)
    dtpsi = state.dtpsi
    res = fc.div_phi(rhs_vec, geom)
    res += _geometry_motion_divergence(state.v, geom, dtpsi)
    return float(np.abs(res[:, :, 1:-1]).max())
