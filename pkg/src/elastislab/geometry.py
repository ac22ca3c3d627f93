"""Flattening map phi = x3 + chi(x3) psi, its Jacobian and normal fields.

The slab is flattened by extending the surface graph psi into the interior
with a vertical cutoff chi satisfying chi(0) = 1, chi(-b) = 0 and
chi'(0) = chi'(-b) = 0, so that

    phi(x) = x3 + chi(x3) psi(xbar),   d3phi = 1 + chi'(x3) psi(xbar),

phi(xbar, 0) = psi, phi(xbar, -b) = -b, and the interior normal
NN = (-d1 phi, -d2 phi, 1) restricts to N = (-d1 psi, -d2 psi, 1) on the
surface and to (0, 0, 1) on the bottom.

Three cutoff profiles are provided:

* ``poly`` (default): a single degree-7 smoothstep spanning all of [-b, 0].
  It has no interior junction points, so it is exactly representable in the
  vertical Chebyshev basis and keeps all vertical differentiation spectral.
  Endpoint derivatives vanish to third order.
* ``quintic``: piecewise C^2 quintic smoothstep with plateaus chi = 1 on
  (-delta0, 0] and chi = 0 on [-b, -b+delta0].
* ``smooth``: the same plateaus glued with the C-infinity exp(-1/s) ramp.
"""

from dataclasses import dataclass

import numpy as np

from .grid import Grid


class GeometryError(ValueError):
    pass


class DiffeomorphismBreakdown(GeometryError):
    pass


# max |S'| over [0, 1] for the normalized ramps, used for feasibility checks
RAMP_SLOPE = {"quintic": 1.875, "smooth": 2.0, "poly": 2.1875}

BREAKDOWN_FLOOR = 0.05


def _smoothstep5(s):
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def _smoothstep5_d(s):
    return 30.0 * s * s * (1.0 - s) ** 2


def _smoothstep7(s):
    return s ** 4 * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)))


def _smoothstep7_d(s):
    return 140.0 * (s * (1.0 - s)) ** 3


def _expstep(s):
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        bb = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
    return a / (a + bb)


def _expstep_d(s, eps=1e-7):
    return (_expstep(s + eps) - _expstep(s - eps)) / (2.0 * eps)


@dataclass
class Cutoff:
    """Vertical cutoff chi on [-b, 0] with chi(0)=1, chi(-b)=0."""

    b: float
    delta0: float
    profile: str = "poly"

    def __post_init__(self):
        if not 0.0 < self.delta0 < self.b / 2.0:
            raise GeometryError("delta0 must lie in (0, b/2)")
        if self.profile not in RAMP_SLOPE:
            raise GeometryError(f"unknown cutoff profile {self.profile!r}")

    @property
    def ramp_length(self):
        if self.profile == "poly":
            return self.b
        return self.b - 2.0 * self.delta0

    @property
    def max_slope(self):
        return RAMP_SLOPE[self.profile] / self.ramp_length

    def _ramp_coord(self, z):
        """Map z to the ramp parameter s in [0, 1] (s=0 bottom, s=1 top)."""
        z = np.asarray(z, dtype=float)
        if self.profile == "poly":
            return np.clip((z + self.b) / self.b, 0.0, 1.0)
        lo = -self.b + self.delta0
        hi = -self.delta0
        return np.clip((z - lo) / (hi - lo), 0.0, 1.0)

    def chi(self, z):
        s = self._ramp_coord(z)
        if self.profile == "poly":
            return _smoothstep7(s)
        if self.profile == "quintic":
            return _smoothstep5(s)
        return _expstep(s)

    def chi_prime(self, z):
        s = self._ramp_coord(z)
        if self.profile == "poly":
            d = _smoothstep7_d(s) / self.b
        elif self.profile == "quintic":
            d = _smoothstep5_d(s) / self.ramp_length
        else:
            d = _expstep_d(s) / self.ramp_length
        z = np.asarray(z, dtype=float)
        if self.profile != "poly":
            inside = (z > -self.b + self.delta0) & (z < -self.delta0)
            d = np.where(inside, d, 0.0)
        return d


def cutoff_chi(z, b, delta0, slope_bound, profile="quintic"):
    """Evaluate the plateaued cutoff at z, enforcing the slope bound.

    Raises GeometryError when the requested bound cannot be met on the
    available ramp (any descent from 1 to 0 over length L has max slope
    at least 1/L, and the smoothstep ramps pay an extra shape factor).
    """
    if not 0.0 < delta0 < b / 2.0:
        raise GeometryError("delta0 must lie in (0, b/2)")
    if slope_bound <= 0:
        raise GeometryError("slope_bound must be positive")
    cut = Cutoff(b=b, delta0=delta0, profile=profile)
    if cut.max_slope > slope_bound:
        raise GeometryError(
            f"slope bound {slope_bound:.6g} infeasible: ramp of length "
            f"{cut.ramp_length:.6g} needs at least "
            f"{cut.max_slope:.6g} (>= 1/ramp_length)"
        )
    return cut.chi(z)


def jacobian_floor(psi_inf, psi0_inf, b):
    """Lower bound for d3phi when |chi'| <= 1/(b + |psi_0|_inf):
    1 - |psi|_inf / (b + |psi_0|_inf)."""
    return 1.0 - psi_inf / (b + psi0_inf)


def verify_jacobian_floor(b=1.0, psi0_inf=None, psi_inf=None, n_samples=2001,
                          profile="quintic"):
    """Dense-sample check of the Jacobian floor.

    Builds the worst admissible pair: a ramp profile rescaled so that its
    max slope equals the bound 1/(b + |psi_0|_inf), against an elevation
    attaining +-|psi|_inf, and returns (sampled min of 1 + chi' psi,
    analytic floor).
    """
    if psi0_inf is None:
        psi0_inf = b / 3.0
    if psi_inf is None:
        psi_inf = b / 2.0
    bound = 1.0 / (b + psi0_inf)
    cut = Cutoff(b=b, delta0=b / 10.0, profile=profile)
    z = np.linspace(-b, 0.0, n_samples)
    chi_p = cut.chi_prime(z) * (bound / cut.max_slope)
    psi = psi_inf * np.cos(np.linspace(0.0, 2.0 * np.pi, n_samples))
    d3phi = 1.0 + np.outer(chi_p, psi)
    return float(d3phi.min()), jacobian_floor(psi_inf, psi0_inf, b)


class FlattenedGeometry:
    """Geometry data derived from a surface elevation on a grid.

    Holds phi, d3phi, dtphi, the interior normal NN, the surface normal N
    and |N|, plus the cutoff and the recomputed Jacobian floor c0.
    """

    def __init__(self, grid: Grid, psi, dtpsi, cutoff: Cutoff,
                 breakdown_floor=BREAKDOWN_FLOOR):
        self.grid = grid
        self.cutoff = cutoff
        self.breakdown_floor = breakdown_floor
        self.psi = grid.check_surface(np.asarray(psi, dtype=float))
        self.dtpsi = grid.check_surface(np.asarray(dtpsi, dtype=float))

        chi = cutoff.chi(grid.z)
        chi_p = cutoff.chi_prime(grid.z)
        self.chi = chi
        self.chi_prime = chi_p

        psi3 = self.psi[:, :, None]
        dtpsi3 = self.dtpsi[:, :, None]
        self.phi = grid.Zv + chi * psi3
        self.d3phi = 1.0 + chi_p * psi3
        self.dtphi = chi * dtpsi3

        d1psi = grid.dx1(self.psi)
        d2psi = grid.dx2(self.psi)
        self.d1phi = chi * d1psi[:, :, None]
        self.d2phi = chi * d2psi[:, :, None]

        self.N = np.stack([-d1psi, -d2psi, np.ones_like(self.psi)])
        self.N_norm = np.sqrt(1.0 + d1psi ** 2 + d2psi ** 2)
        self.NN = np.stack(
            [-self.d1phi, -self.d2phi, np.ones_like(self.phi)]
        )

        self.c0 = float(self.d3phi.min())
        if self.c0 <= breakdown_floor:
            raise DiffeomorphismBreakdown(
                f"min d3phi = {self.c0:.4g} <= {breakdown_floor}"
            )


def build_geometry(psi, dtpsi, grid, delta0=None, profile="poly",
                   breakdown_floor=BREAKDOWN_FLOOR):
    """Construct the flattened geometry for an elevation psi.

    Warns (via GeometryError) when |psi|_inf >= b/2, for which the slab
    flattening is no longer guaranteed to be a diffeomorphism.
    """
    psi = grid.check_surface(np.asarray(psi, dtype=float))
    psi_inf = float(np.abs(psi).max())
    if psi_inf >= grid.b / 2.0:
        raise GeometryError(
            f"|psi|_inf = {psi_inf:.4g} >= b/2 = {grid.b / 2:.4g}: "
            "geometry invalid"
        )
    if delta0 is None:
        delta0 = grid.b / 10.0
    cut = Cutoff(b=grid.b, delta0=delta0, profile=profile)
    return FlattenedGeometry(grid, psi, dtpsi, cut, breakdown_floor)


def surface_normals(psi, grid):
    """N = (-d1 psi, -d2 psi, 1) and |N| = sqrt(1 + |grad psi|^2)."""
    psi = grid.check_surface(np.asarray(psi, dtype=float))
    d1 = grid.dx1(psi)
    d2 = grid.dx2(psi)
    N = np.stack([-d1, -d2, np.ones_like(psi)])
    return N, np.sqrt(1.0 + d1 ** 2 + d2 ** 2)
