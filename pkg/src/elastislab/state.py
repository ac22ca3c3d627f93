"""Unknowns (v, F, q, psi), constraint-compatible initial data, constraint
checking and state serialization.

Initial data is built from closed-form potentials so that the constraints
hold up to discretization error only:

* velocity: v = (curl A) o Phi, the plain pullback of a physical-space curl.
  The flattened divergence of a pullback is the pulled-back physical
  divergence, so div^phi v = 0 analytically.
* deformation columns: F_j = grad^phi(h_j) x grad^phi(x3) with a scalar
  stream h_j.  This is the pullback of nabla(h) x nabla(c), hence
  divergence-free, and since grad^phi(x3) = NN/d3phi it satisfies
  F_j . NN = 0 pointwise on the whole slab (so F_j . N = 0 on Sigma and
  F_3j = 0 on Sigma_b exactly).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Grid, save_field, load_field
from .geometry import FlattenedGeometry, build_geometry
from . import flat_calculus as fc


class ConstraintResidualTooLarge(RuntimeError):
    pass


@dataclass
class Params:
    sigma: float = 0.5
    kappa: float = 0.1
    b: float = 1.0
    delta0: float = 0.1

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.b <= 0:
            raise ValueError("b must be > 0")
        if not 0 < self.delta0 < self.b / 2:
            raise ValueError("delta0 must lie in (0, b/2)")


@dataclass
class State:
    """Snapshot of the unknowns at one time.

    v: (3, nx, ny, nz); F: (3, 3, nx, ny, nz) indexed [row, column, ...];
    q: (nx, ny, nz); psi, dtpsi: (nx, ny); t: time.
    """

    v: np.ndarray
    F: np.ndarray
    q: np.ndarray
    psi: np.ndarray
    dtpsi: np.ndarray
    t: float = 0.0
    dissipation: float = 0.0

    def copy(self):
        return State(self.v.copy(), self.F.copy(), self.q.copy(),
                     self.psi.copy(), self.dtpsi.copy(), self.t,
                     self.dissipation)


# ----------------------------------------------------------------------
# analytic building blocks
# ----------------------------------------------------------------------
def _mode_value(mode, X1, X2):
    amp = mode["amp"]
    kx = mode.get("kx", 0)
    ky = mode.get("ky", 0)
    ph = mode.get("phase", 0.0)
    arg = kx * X1 + ky * X2 + ph
    return amp * np.sin(arg), amp * kx * np.cos(arg), amp * ky * np.cos(arg)


def _zprofile(mode, Z, b):
    """(y3 + b)^p and its derivative; p >= 1 keeps curl A slip-compatible."""
    p = mode.get("zpow", 2)
    base = Z + b
    val = base ** p
    dval = p * base ** (p - 1) if p > 0 else np.zeros_like(base)
    return val, dval


def stream_velocity(stream_spec, X1, X2, Y3, b):
    """curl A evaluated at physical points (X1, X2, Y3).

    stream_spec = {"modes": [{"comp": 0|1|2, "amp", "kx", "ky", "phase",
    "zpow"}, ...]}.  Horizontal components of A carry a (y3+b)^p factor
    with p >= 2 so that (curl A)_3 vanishes at the bottom.
    """
    u = [np.zeros_like(Y3) for _ in range(3)]
    for mode in (stream_spec or {}).get("modes", []):
        comp = mode["comp"]
        f, fx, fy = _mode_value(mode, X1, X2)
        if comp in (0, 1) and mode.get("zpow", 2) < 2:
            raise ValueError("horizontal potential modes need zpow >= 2")
        s, ds = _zprofile(mode, Y3, b)
        A = f * s
        Ax, Ay, Az = fx * s, fy * s, f * ds
        if comp == 0:      # A = (A1, 0, 0): adds (0, d3A1, -d2A1)
            u[1] += Az
            u[2] -= Ay
        elif comp == 1:    # A = (0, A2, 0): adds (-d3A2, 0, d1A2)
            u[0] -= Az
            u[2] += Ax
        else:              # A = (0, 0, A3): adds (d2A3, -d1A3, 0)
            u[0] += Ay
            u[1] -= Ax
    return np.stack(u)


def _stream_scalar_grad(col_spec, grid: Grid):
    """Analytic (d1 h, d2 h, d3 h) of a deformation stream function
    h(xbar, x3) = c1 x1 + c2 x2 + sum of trig modes with (x3+b)^p."""
    shape = (grid.nx, grid.ny, grid.nz)
    hx = np.zeros(shape)
    hy = np.zeros(shape)
    hz = np.zeros(shape)
    lin = col_spec.get("linear", (0.0, 0.0))
    hx += lin[0]
    hy += lin[1]
    for mode in col_spec.get("modes", []):
        f, fx, fy = _mode_value(mode, grid.X1v, grid.X2v)
        s, ds = _zprofile(mode, grid.Zv, grid.b)
        hx += fx * s
        hy += fy * s
        hz += f * ds
    return hx, hy, hz


def deformation_columns(elastic_spec, geom: FlattenedGeometry):
    """F_j = grad^phi(h_j) x NN/d3phi, exactly tangent to the level sets
    of phi (F_j . NN = 0 pointwise) and analytically divergence-free."""
    grid = geom.grid
    F = np.zeros((3, 3, grid.nx, grid.ny, grid.nz))
    cols = (elastic_spec or {}).get("columns", [])
    t3 = geom.NN / geom.d3phi
    for j, col_spec in enumerate(cols[:3]):
        hx, hy, hz = _stream_scalar_grad(col_spec, grid)
        gh = np.stack([
            hx - geom.d1phi / geom.d3phi * hz,
            hy - geom.d2phi / geom.d3phi * hz,
            hz / geom.d3phi,
        ])
        F[:, j] = np.cross(gh, t3, axis=0)
    return F


def flat_tangent_elastic_spec(a=1.0):
    """Columns giving F_1 = a e_1, F_2 = a e_2, F_3 = 0 at psi = 0."""
    return {
        "columns": [
            {"linear": (0.0, a)},
            {"linear": (-a, 0.0)},
            {"linear": (0.0, 0.0)},
        ]
    }


def surface_velocity_normal(v, geom: FlattenedGeometry):
    """v . N on Sigma (dealiased)."""
    grid = geom.grid
    vs = v[:, :, :, -1]
    return grid.dealias(
        vs[0] * geom.N[0] + vs[1] * geom.N[1] + vs[2] * geom.N[2]
    )


def build_initial_data(psi0, stream_spec, elastic_spec, grid: Grid,
                       params: Params, residual_tol=1e-8, profile="poly"):
    """Assemble a constraint-compatible initial State.

    Raises ConstraintResidualTooLarge when any discrete constraint residual
    exceeds residual_tol; raises ValueError when |psi0|_inf >= b/3.
    """
    psi0 = grid.check_surface(np.asarray(psi0, dtype=float))
    if np.abs(psi0).max() >= grid.b / 3.0:
        raise ValueError("|psi0|_inf must be < b/3")

    geom = build_geometry(psi0, np.zeros_like(psi0), grid,
                          params.delta0, profile=profile)
    v = stream_velocity(stream_spec, grid.X1v, grid.X2v, geom.phi, grid.b)
    F = deformation_columns(elastic_spec, geom)
    dtpsi = surface_velocity_normal(v, geom)

    # rebuild with the kinematic dt psi so the pressure solve sees dt phi
    geom = build_geometry(psi0, dtpsi, grid, params.delta0, profile=profile)

    from .pressure import solve_pressure_fields

    q, _ = solve_pressure_fields(v, F, geom, params)
    state = State(v=v, F=F, q=q, psi=psi0.copy(), dtpsi=dtpsi, t=0.0)

    report = constraint_report(state, geom)
    worst = max(report.values())
    if worst > residual_tol:
        raise ConstraintResidualTooLarge(
            f"constraint residual {worst:.3e} > {residual_tol:.1e}: {report}"
        )
    return state


def constraint_report(state: State, geom: FlattenedGeometry):
    """Sup-norm residuals of the four constraint families."""
    grid = geom.grid
    r_divv = float(np.abs(fc.div_phi(state.v, geom)).max())
    r_divF = max(
        float(np.abs(fc.div_phi(state.F[:, j], geom)).max()) for j in range(3)
    )
    Fs = state.F[:, :, :, :, -1]
    r_FN = max(
        float(np.abs(Fs[0, j] * geom.N[0] + Fs[1, j] * geom.N[1]
                     + Fs[2, j] * geom.N[2]).max())
        for j in range(3)
    )
    r_bottom = float(np.abs(state.v[2, :, :, 0]).max())
    r_bottom = max(
        r_bottom,
        float(np.abs(state.F[2, :, :, :, 0]).max()),
    )
    return {"r_divv": r_divv, "r_divF": r_divF, "r_FN": r_FN,
            "r_bottom": r_bottom}


def compatibility_report(state: State, geom: FlattenedGeometry,
                         params: Params):
    """Order-0 and order-1 compatibility residuals: the pressure trace
    condition and the kinematic condition. Higher orders would need time
    derivatives of q at t = 0 and are not constructed."""
    grid = geom.grid
    q_top = state.q[:, :, -1]
    target = params.sigma * fc.mean_curvature(state.psi, grid)
    target += params.kappa * fc.multiplier(state.psi, "one_minus_lap_sq", grid)
    target += params.kappa * fc.multiplier(state.dtpsi, "one_minus_lap", grid)
    r_q = float(np.abs(q_top - target).max())
    r_kin = float(
        np.abs(state.dtpsi - surface_velocity_normal(state.v, geom)).max()
    )
    return {"order0_pressure": r_q, "order0_kinematic": r_kin}


# ----------------------------------------------------------------------
# serialization: one snapshot file per field plus a JSON manifest
# ----------------------------------------------------------------------
def save_state(directory, state: State, grid: Grid, params: Params):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_field(directory / "v.bin", state.v, grid, state.t)
    save_field(directory / "F.bin", state.F, grid, state.t)
    save_field(directory / "q.bin", state.q, grid, state.t)
    save_field(directory / "psi.bin", state.psi, grid, state.t)
    save_field(directory / "dtpsi.bin", state.dtpsi, grid, state.t)
    manifest = {
        "t": state.t,
        "dissipation": state.dissipation,
        "sigma": params.sigma,
        "kappa": params.kappa,
        "b": params.b,
        "delta0": params.delta0,
        "grid": {"nx": grid.nx, "ny": grid.ny, "nz": grid.nz, "b": grid.b},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_state(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    g = manifest["grid"]
    grid = Grid(g["nx"], g["ny"], g["nz"], g["b"])
    v, _ = load_field(directory / "v.bin", grid)
    F, _ = load_field(directory / "F.bin", grid)
    F = F.reshape(3, 3, grid.nx, grid.ny, grid.nz)
    q, _ = load_field(directory / "q.bin", grid)
    psi, _ = load_field(directory / "psi.bin", grid)
    dtpsi, _ = load_field(directory / "dtpsi.bin", grid)
    params = Params(sigma=manifest["sigma"], kappa=manifest["kappa"],
                    b=manifest["b"], delta0=manifest["delta0"])
    state = State(v=v, F=F, q=q, psi=psi, dtpsi=dtpsi,
                  t=manifest["t"], dissipation=manifest.get("dissipation", 0.0))
    return state, grid, params
