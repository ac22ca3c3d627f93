"""Flattened differential operators, surface multipliers and Sobolev norms.

The flattened operators are the pullbacks of the physical-space derivatives
under the graph map (xbar, x3) -> (xbar, phi):

    d_tau^phi = d_tau - (d_tau phi / d3 phi) d3      (tau = 1, 2)
    d_3^phi   = (1 / d3 phi) d3
    D_t^phi   = d_t + vbar . dbar + (1/d3 phi)(v.NN - dt phi) d3

Horizontal derivatives are spectral, vertical ones use the Chebyshev matrix.
Rational coefficients (1/d3phi, 1/|N|) are evaluated pointwise on the
collocation grid; nonlinear products are dealiased by the 2/3 rule.
"""

import math

import numpy as np

from .grid import Grid
from .geometry import FlattenedGeometry


def _ratios(geom):
    # cached on the geometry: coefficients of the vertical corrections
    if not hasattr(geom, "_r1"):
        geom._r1 = geom.d1phi / geom.d3phi
        geom._r2 = geom.d2phi / geom.d3phi
        geom._inv_d3 = 1.0 / geom.d3phi
    return geom._r1, geom._r2, geom._inv_d3


def grad_phi(f, geom: FlattenedGeometry):
    """(d1^phi f, d2^phi f, d3^phi f) for a scalar volume field."""
    g = geom.grid
    g.check_volume(f)
    r1, r2, inv = _ratios(geom)
    d3f = g.dz(f)
    corr = g.dealias(np.stack([r1 * d3f, r2 * d3f, inv * d3f]))
    return np.stack([g.dx1(f) - corr[0], g.dx2(f) - corr[1], corr[2]])


def grad_phi_tensor(X, geom: FlattenedGeometry):
    """Full gradient G[i, j] = d_j^phi X_i of a 3-vector field."""
    X = np.asarray(X)
    g = geom.grid
    r1, r2, inv = _ratios(geom)
    d3X = g.dz(X)
    corr = g.dealias(
        np.stack([r1 * d3X, r2 * d3X, inv * d3X], axis=1)
    )
    G = np.empty((3, 3) + X.shape[1:])
    G[:, 0] = g.dx1(X) - corr[:, 0]
    G[:, 1] = g.dx2(X) - corr[:, 1]
    G[:, 2] = corr[:, 2]
    return G


def div_phi(X, geom: FlattenedGeometry):
    X = np.asarray(X)
    if X.shape[0] != 3:
        raise ValueError("div_phi expects a 3-vector field")
    g = geom.grid
    r1, r2, inv = _ratios(geom)
    d3X = g.dz(X)
    vert = g.dealias(-r1 * d3X[0] - r2 * d3X[1] + inv * d3X[2])
    return g.dx1(X[0]) + g.dx2(X[1]) + vert


def curl_phi(X, geom: FlattenedGeometry):
    X = np.asarray(X)
    if X.shape[0] != 3:
        raise ValueError("curl_phi expects a 3-vector field")
    G = grad_phi_tensor(X, geom)
    return np.stack(
        [G[2, 1] - G[1, 2], G[0, 2] - G[2, 0], G[1, 0] - G[0, 1]]
    )


def directional_phi(a, X, geom: FlattenedGeometry):
    """(a . grad^phi) X for 3-vector fields a and X, assembled as
    a_tau d_tau X + ((a . NN)/d3phi) d3 X."""
    g = geom.grid
    aN = a[0] * geom.NN[0] + a[1] * geom.NN[1] + a[2] * geom.NN[2]
    coef = aN / geom.d3phi
    out = a[0] * g.dx1(X) + a[1] * g.dx2(X) + coef * g.dz(X)
    return g.dealias(out)


def advective_coefficient(v, geom: FlattenedGeometry):
    """V_N = (v . NN - dt phi) / d3 phi, the vertical transport speed of
    D_t^phi. Vanishes on both boundaries when dt psi = v . N on Sigma."""
    vN = v[0] * geom.NN[0] + v[1] * geom.NN[1] + v[2] * geom.NN[2]
    return (vN - geom.dtphi) / geom.d3phi


def material_derivative(f, dtf, v, geom: FlattenedGeometry):
    """D_t^phi f from the expanded form d_t f + vbar . dbar f + V_N d3 f."""
    g = geom.grid
    g.check_volume(f)
    VN = advective_coefficient(v, geom)
    adv = g.dealias(v[0] * g.dx1(f) + v[1] * g.dx2(f) + VN * g.dz(f))
    return dtf + adv


def mean_curvature(psi, grid: Grid):
    """H(psi) = -div( grad psi / sqrt(1 + |grad psi|^2) ), so that the
    surface pressure condition reads q = sigma H(psi) on Sigma."""
    psi = grid.check_surface(psi)
    d1 = grid.dx1(psi)
    d2 = grid.dx2(psi)
    norm = np.sqrt(1.0 + d1 ** 2 + d2 ** 2)
    flux = grid.dealias(np.stack([d1 / norm, d2 / norm]))
    return -(grid.dx1(flux[0]) + grid.dx2(flux[1]))


_SYMBOLS = ("one_minus_lap", "one_minus_lap_sq", "bracket")


def multiplier(f, symbol, grid: Grid):
    """Fourier multiplier on a surface field: (1+|k|^2), (1+|k|^2)^2 or
    the Japanese bracket sqrt(1+|k|^2)."""
    if symbol not in _SYMBOLS:
        raise ValueError(f"symbol must be one of {_SYMBOLS}")
    fh = grid.spectrum(grid.check_surface(f))
    w = 1.0 + grid.k_sq
    if symbol == "one_minus_lap_sq":
        w = w ** 2
    elif symbol == "bracket":
        w = np.sqrt(w)
    return grid.inverse_spectrum(w * fh)


def sobolev_norm_surface(f, s, grid: Grid):
    """|f|_s = (sum_k (1+|k|^2)^s |fhat(k)|^2 (2 pi)^2)^(1/2); s >= 0 real."""
    if s < 0:
        raise ValueError("s must be >= 0")
    fh = grid.spectrum(grid.check_surface(f))
    total = np.sum((1.0 + grid.k_sq) ** s * np.abs(fh) ** 2)
    return math.sqrt(float(total) * (2.0 * np.pi) ** 2)


def _derivative_table(f, order, grid: Grid):
    """All flat derivatives d^gamma f with |gamma| <= order, built
    incrementally so each entry costs one operator application."""
    table = {(0, 0, 0): np.asarray(f, dtype=float)}
    for total in range(1, order + 1):
        for g1 in range(total + 1):
            for g2 in range(total + 1 - g1):
                g3 = total - g1 - g2
                key = (g1, g2, g3)
                if g1 > 0:
                    table[key] = grid.dx1(table[(g1 - 1, g2, g3)])
                elif g2 > 0:
                    table[key] = grid.dx2(table[(g1, g2 - 1, g3)])
                else:
                    table[key] = grid.dz(table[(g1, g2, g3 - 1)])
    return table


def sobolev_norm_interior(f, s_int, grid: Grid):
    """||f||_{s_int} with integer s_int in {0,...,4}: flat derivatives,
    horizontal-spectral / vertical-Chebyshev, Clenshaw-Curtis in z."""
    if s_int not in (0, 1, 2, 3, 4):
        raise ValueError("s_int must be an integer in 0..4")
    grid.check_volume(f)
    table = _derivative_table(f, s_int, grid)
    total = 0.0
    for df in table.values():
        total += grid.vol_integral(df * df)
    return math.sqrt(total)
