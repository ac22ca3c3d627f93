"""Discrete slab T^2 x (-b, 0): Fourier collocation in the two periodic
horizontal directions, Chebyshev-Gauss-Lobatto collocation vertically.

Conventions used everywhere downstream:

* volume scalars are arrays of shape (nx, ny, nz), vectors (3, nx, ny, nz),
  tensors-of-columns (3, 3, nx, ny, nz) indexed [row, column, ...];
* surface fields live on z = 0 and have shape (nx, ny);
* the forward horizontal transform divides by nx*ny, so ``fh[0, 0]`` is the
  horizontal mean;
* vertical nodes increase from z_0 = -b to z_{nz-1} = 0.
"""

import json
from pathlib import Path

import numpy as np


class GridError(ValueError):
    pass


def _cgl_nodes_and_matrix(n):
    """Chebyshev-Gauss-Lobatto points x_j = cos(pi j / (n-1)) on [-1, 1]
    (decreasing in j) and the standard differentiation matrix."""
    N = n - 1
    j = np.arange(n)
    x = np.cos(np.pi * j / N)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c = c * (-1.0) ** j
    X = np.tile(x, (n, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n))
    D = D - np.diag(D.sum(axis=1))
    return x, D


def _clenshaw_curtis_weights(n):
    """Quadrature weights on the CGL points for integration over [-1, 1]."""
    N = n - 1
    w = np.zeros(n)
    theta = np.pi * np.arange(n) / N
    for j in range(n):
        s = 0.0
        for m in range(1, N // 2 + 1):
            factor = 2.0 if 2 * m < N else 1.0
            s += factor * np.cos(2 * m * theta[j]) / (4 * m * m - 1)
        w[j] = 1.0 - s
    w *= 2.0 / N
    w[0] /= 2.0
    w[-1] /= 2.0
    return w


class Grid:
    """Tensor-product collocation grid for the slab.

    Attributes:
        nx, ny: horizontal mode counts (even, >= 8); period 2*pi each.
        nz: vertical node count (>= 9).
        b: slab depth; z in [-b, 0].
        z: vertical nodes, increasing, z[0] = -b, z[-1] = 0.
        k1, k2: integer wavenumber meshes of shape (nx, ny).
        Dz: vertical differentiation matrix acting on the last axis.
        wz: vertical quadrature weights for integration in z over (-b, 0).
    """

    def __init__(self, nx, ny, nz, b):
        if nx % 2 != 0:
            raise GridError("nx must be even")
        if ny % 2 != 0:
            raise GridError("ny must be even")
        if nx < 8 or ny < 8:
            raise GridError("nx, ny must be >= 8")
        if nz < 9:
            raise GridError("nz must be >= 9")
        if b <= 0:
            raise GridError("b must be > 0")
        self.nx, self.ny, self.nz = int(nx), int(ny), int(nz)
        self.b = float(b)

        self.x1 = 2.0 * np.pi * np.arange(nx) / nx
        self.x2 = 2.0 * np.pi * np.arange(ny) / ny
        xc, D = _cgl_nodes_and_matrix(nz)
        # z = -(b/2)(1 + x): maps x = 1 -> -b, x = -1 -> 0, keeps index order
        self.z = -(self.b / 2.0) * (1.0 + xc)
        self.z[0] = -self.b
        self.z[-1] = 0.0
        self.Dz = -(2.0 / self.b) * D
        self.wz = (self.b / 2.0) * _clenshaw_curtis_weights(nz)

        kx = np.fft.fftfreq(nx, d=1.0 / nx).astype(int)
        ky = np.fft.fftfreq(ny, d=1.0 / ny).astype(int)
        self.k1, self.k2 = np.meshgrid(kx, ky, indexing="ij")
        self.k_sq = (self.k1 ** 2 + self.k2 ** 2).astype(float)
        # derivative multipliers zero the one-sided Nyquist column so that
        # d/dx of a real field stays a real-field spectrum
        kd1 = self.k1.astype(float)
        kd1[np.abs(self.k1) == nx // 2] = 0.0
        kd2 = self.k2.astype(float)
        kd2[np.abs(self.k2) == ny // 2] = 0.0
        self.kd1, self.kd2 = kd1, kd2
        self.kd_sq = kd1 ** 2 + kd2 ** 2
        # 2/3-rule band: modes with |k| above n/3 are dropped after products
        self.kx_cut = nx // 3
        self.ky_cut = ny // 3
        self.dealias_mask = (np.abs(self.k1) <= self.kx_cut) & (
            np.abs(self.k2) <= self.ky_cut
        )

        self.X1, self.X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        self.X1v = self.X1[:, :, None] * np.ones(nz)
        self.X2v = self.X2[:, :, None] * np.ones(nz)
        self.Zv = np.ones((nx, ny, 1)) * self.z

    # ------------------------------------------------------------------
    # shapes
    # ------------------------------------------------------------------
    def check_surface(self, f):
        f = np.asarray(f)
        if f.shape[-2:] != (self.nx, self.ny):
            raise GridError(
                f"surface field shape {f.shape} does not match grid "
                f"({self.nx}, {self.ny})"
            )
        return f

    def check_volume(self, f):
        f = np.asarray(f)
        if f.shape[-3:] != (self.nx, self.ny, self.nz):
            raise GridError(
                f"volume field shape {f.shape} does not match grid "
                f"({self.nx}, {self.ny}, {self.nz})"
            )
        return f

    # ------------------------------------------------------------------
    # horizontal spectral transforms
    # ------------------------------------------------------------------
    def spectrum(self, f):
        """Forward transform over the horizontal axes, mean-normalized."""
        f = np.asarray(f)
        ax = (-2, -1) if f.shape[-1] == self.ny else (-3, -2)
        return np.fft.fft2(f, axes=ax) / (self.nx * self.ny)

    def inverse_spectrum(self, fh):
        fh = np.asarray(fh)
        ax = (-2, -1) if fh.shape[-1] == self.ny else (-3, -2)
        return np.fft.ifft2(fh * (self.nx * self.ny), axes=ax).real

    def dealias(self, f):
        """Apply the 2/3-rule mask; call after every nonlinear product."""
        fh = self.spectrum(f)
        if fh.shape[-1] == self.ny:
            fh *= self.dealias_mask
        else:
            fh *= self.dealias_mask[..., None]
        return self.inverse_spectrum(fh)

    # ------------------------------------------------------------------
    # derivatives
    # ------------------------------------------------------------------
    def dx1(self, f):
        fh = self.spectrum(f)
        if fh.shape[-1] == self.ny:
            fh = 1j * self.kd1 * fh
        else:
            fh = 1j * self.kd1[..., None] * fh
        return self.inverse_spectrum(fh)

    def dx2(self, f):
        fh = self.spectrum(f)
        if fh.shape[-1] == self.ny:
            fh = 1j * self.kd2 * fh
        else:
            fh = 1j * self.kd2[..., None] * fh
        return self.inverse_spectrum(fh)

    def dz(self, f):
        self.check_volume(f)
        return np.asarray(f) @ self.Dz.T

    # ------------------------------------------------------------------
    # integrals
    # ------------------------------------------------------------------
    def surf_integral(self, f):
        """Integral of a scalar surface field over Sigma = T^2."""
        self.check_surface(f)
        return float(np.sum(f)) * (2.0 * np.pi) ** 2 / (self.nx * self.ny)

    def vol_integral(self, f):
        """Integral of a scalar volume field over Omega (measure dx)."""
        f = np.asarray(f)
        if f.ndim != 3:
            raise GridError("vol_integral expects a scalar volume field")
        self.check_volume(f)
        col = f @ self.wz
        return float(np.sum(col)) * (2.0 * np.pi) ** 2 / (self.nx * self.ny)

    def min_spacing_horizontal(self):
        return min(2.0 * np.pi / self.nx, 2.0 * np.pi / self.ny)

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and (self.nx, self.ny, self.nz) == (other.nx, other.ny, other.nz)
            and self.b == other.b
        )

    def __repr__(self):
        return f"Grid(nx={self.nx}, ny={self.ny}, nz={self.nz}, b={self.b})"


def make_grid(nx, ny, nz, b):
    return Grid(nx, ny, nz, b)


# ----------------------------------------------------------------------
# snapshot files: raw little-endian float64, x1 fastest, then x2, then z;
# leading component axis slowest for vector/tensor fields
# ----------------------------------------------------------------------
def save_field(path, f, grid, time=0.0):
    f = np.asarray(f, dtype=float)
    if f.shape[-1] == grid.ny and f.ndim <= 3:  # surface
        arity = 1 if f.ndim == 2 else f.shape[0]
        data = np.swapaxes(f, -2, -1)
        nz = 0
    else:
        grid.check_volume(f)
        lead = f.shape[:-3]
        arity = int(np.prod(lead)) if lead else 1
        data = np.moveaxis(f.reshape((arity,) + f.shape[-3:]), [1, 2, 3], [3, 2, 1])
        nz = grid.nz
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(data, dtype="<f8").tobytes())
    header = {
        "nx": grid.nx,
        "ny": grid.ny,
        "nz": nz,
        "b": grid.b,
        "arity": arity,
        "time": float(time),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header))


def load_field(path, grid=None):
    path = Path(path)
    header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    nx, ny, nz, arity = header["nx"], header["ny"], header["nz"], header["arity"]
    if nz == 0:
        f = raw.reshape((arity, ny, nx) if arity > 1 else (ny, nx))
        f = np.swapaxes(f, -2, -1)
    else:
        f = raw.reshape((arity, nz, ny, nx))
        f = np.moveaxis(f, [1, 2, 3], [3, 2, 1])
        if arity == 1:
            f = f[0]
    if grid is not None:
        if (nx, ny) != (grid.nx, grid.ny) or (nz not in (0, grid.nz)):
            raise GridError("snapshot grid does not match")
    return np.ascontiguousarray(f), header
