"""Pseudo-spectral 2D vorticity solver and the exact radial heat oracle."""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.integrate import quad
from scipy.linalg import solve_banded
from scipy.special import ive

from .field2d import (
    FFT_WORKERS,
    ScalarField2D,
    _irfft2,
    _rfft2,
    patch_indicator,
    velocity_from_hat,
)

__all__ = [
    "SimulationConfig",
    "CFLError",
    "SimulationError",
    "step",
    "run",
    "RadialProfile1D",
    "radial_heat_oracle",
    "radial_heat_bessel",
    "Diagnostics",
    "diagnostics",
]


class SimulationError(RuntimeError):
    """Non-finite state detected; ``step_index`` is the failing step."""

    def __init__(self, message, step_index):
        super().__init__(message)
        self.step_index = step_index


class CFLError(SimulationError):
    """Time step too large for the current velocity; see ``required_dt``."""

    def __init__(self, message, step_index, required_dt):
        super().__init__(message, step_index)
        self.required_dt = required_dt


@dataclass(frozen=True)
class SimulationConfig:
    """Time-stepping parameters.

    ``dt`` must satisfy ``dt <= cfl_safety * spacing / max|v|``; the bound is
    re-checked at every step against the current velocity.
    """

    nu: float
    dt: float
    t_end: float
    dealias: bool = True
    cfl_safety: float = 0.5

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")

    @property
    def n_steps(self):
        return _steps_for(self.t_end, self.dt)


def _steps_for(t, dt):
    k = int(round(t / dt))
    if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not an integer multiple of dt={dt}")
    return k


class _Integrator:
    """Integrating-factor RK4 in Fourier space (rfft2 layout)."""

    def __init__(self, grid, cfg):
        self.grid = grid
        self.cfg = cfg
        k1, k2 = grid.wavenumbers
        self.ik1, self.ik2 = grid.derivative_symbols
        self.half = np.exp(-0.5 * cfg.nu * grid.k_squared * cfg.dt)
        self.full = self.half**2
        if cfg.dealias:
            cut = 2.0 / 3.0 * grid.nyquist
            self.mask = (np.abs(k1) < cut) & (np.abs(k2) < cut)
        else:
            self.mask = None
        self.vmax = 0.0

    def rhs(self, w_hat):
        n = self.grid.n
        u, v = velocity_from_hat(w_hat, self.grid)
        wx = _irfft2(self.ik1 * w_hat, n)
        wy = _irfft2(self.ik2 * w_hat, n)
        out = -_rfft2(u * wx + v * wy)
        if self.mask is not None:
            out *= self.mask
        self._last_speed = float(np.sqrt(np.max(u * u + v * v)))
        return out

    def advance(self, w_hat, index):
        dt = self.cfg.dt
        E, E2 = self.half, self.full
        r1 = self.rhs(w_hat)
        self._check_cfl(index)
        a = E * (w_hat + 0.5 * dt * r1)
        r2 = self.rhs(a)
        b = E * w_hat + 0.5 * dt * r2
        r3 = self.rhs(b)
        c = E2 * w_hat + dt * E * r3
        r4 = self.rhs(c)
        out = E2 * w_hat + dt / 6.0 * (E2 * r1 + 2.0 * E * (r2 + r3) + r4)
        if not np.all(np.isfinite(out)):
            raise SimulationError(f"non-finite vorticity at step {index}", index)
        return out

    def _check_cfl(self, index):
        speed = self._last_speed
        self.vmax = max(self.vmax, speed)
        if speed > 0:
            limit = self.cfg.cfl_safety * self.grid.spacing / speed
            if self.cfg.dt > limit:
                raise CFLError(
                    f"dt={self.cfg.dt} violates CFL at step {index}; "
                    f"need dt <= {limit:.3e}",
                    index,
                    limit,
                )


def step(omega, cfg):
    """Advance ``omega`` by one integrating-factor RK4 step of size ``cfg.dt``."""
    if not np.all(np.isfinite(omega.values)):
        raise SimulationError("non-finite input vorticity", 0)
    integ = _Integrator(omega.grid, cfg)
    w_hat = integ.advance(_rfft2(omega.values), 0)
    return ScalarField2D(omega.grid, _irfft2(w_hat, omega.grid.n))


def run(omega0, cfg, snapshot_times=None):
    """Integrate to ``cfg.t_end`` and return ``[(t, field), ...]``.

    ``snapshot_times`` defaults to ``[t_end]``; each must be an integer
    multiple of ``dt`` within ``[0, t_end]``. The initial field is always
    the first entry.
    """
    grid = omega0.grid
    n_steps = cfg.n_steps
    times = [cfg.t_end] if snapshot_times is None else list(snapshot_times)
    wanted = {}
    for t in times:
        if t < 0 or t > cfg.t_end + 1e-12:
            raise ValueError(f"snapshot time {t} outside [0, {cfg.t_end}]")
        wanted[_steps_for(t, cfg.dt)] = t
    out = [(0.0, omega0)]
    if n_steps == 0:
        return out
    integ = _Integrator(grid, cfg)
    w_hat = _rfft2(omega0.values)
    for k in range(1, n_steps + 1):
        w_hat = integ.advance(w_hat, k)
        if k in wanted:
            out.append((k * cfg.dt, ScalarField2D(grid, _irfft2(w_hat, grid.n))))
    return out


@dataclass(frozen=True, eq=False)
class RadialProfile1D:
    """Radial samples ``omega(r)``; calling it interpolates with a cubic spline.

    Beyond ``r[-1]`` the far-field value ``values[-1]`` is returned.
    """

    r: np.ndarray
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape:
            raise ValueError("r and values must be 1D arrays of equal length")
        if np.any(np.diff(r) <= 0):
            raise ValueError("r must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite profile values")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    def __call__(self, rq):
        rq = np.asarray(rq, dtype=float)
        spline = CubicSpline(self.r, self.values)
        return np.where(rq > self.r[-1], self.values[-1], spline(np.clip(rq, self.r[0], None)))


def _radial_data(spec):
    """Radial data function and its non-smooth points for a radial spec."""
    if not spec.is_radial:
        raise ValueError(f"{spec.kind} patch is not radially symmetric")

    def chi(r):
        r = np.asarray(r, dtype=float)
        return spec.omega_out + (spec.omega_in - spec.omega_out) * patch_indicator(
            spec, r, np.zeros_like(r)
        )

    breaks = []
    for R in spec.radii:
        breaks.extend([R - spec.epsilon, R, R + spec.epsilon])
    return chi, sorted(set(b for b in breaks if b > 0))


def _cell_averages(chi, breaks, edges):
    """r-weighted cell averages of ``chi`` by piecewise Gauss-Legendre."""
    gx, gw = np.polynomial.legendre.leggauss(8)
    lo, hi = edges[:-1], edges[1:]
    num = np.zeros(lo.size)
    # split each cell at the breakpoints it contains
    pieces = [(lo.copy(), hi.copy())]
    for b in breaks:
        new = []
        for a, c in pieces:
            inside = (a < b) & (b < c)
            if np.any(inside):
                c1 = np.where(inside, b, c)
                a2 = np.where(inside, b, c)
                new.append((a, c1))
                new.append((a2, c))
            else:
                new.append((a, c))
        pieces = new
    for a, c in pieces:
        mid, half = 0.5 * (a + c), 0.5 * (c - a)
        for x, w in zip(gx, gw):
            rr = mid + half * x
            num += w * half * rr * chi(rr)
    return num / (0.5 * (hi**2 - lo**2))


def _fv_heat(chi, breaks, nu, t, r_max, n_cells, n_steps):
    """Finite-volume Crank-Nicolson solve of the radial heat equation.

    Returns cell centres, final cell averages and the initial/final masses.
    Steps are graded as ``t*(k/K)^2``; the first four are backward Euler to
    damp the non-smooth data (Rannacher start).
    """
    h = r_max / n_cells
    edges = np.arange(n_cells + 1) * h
    rc = 0.5 * (edges[:-1] + edges[1:])
    vol = 0.5 * (edges[1:] ** 2 - edges[:-1] ** 2)
    w = _cell_averages(chi, breaks, edges)
    mass0 = float(np.sum(vol * w))
    # dw_i/dt = (F_{i+1/2} - F_{i-1/2}) / vol_i with F = nu r_face (w_{i+1}-w_i)/h
    face = edges[1:-1]
    c = nu * face / h
    lower = np.zeros(n_cells)
    upper = np.zeros(n_cells)
    upper[:-1] = c / vol[:-1]
    lower[1:] = c / vol[1:]
    diag = -(upper + lower)
    times = t * (np.arange(n_steps + 1) / n_steps) ** 2
    for k in range(n_steps):
        dt = times[k + 1] - times[k]
        theta = 1.0 if k < 4 else 0.5
        ab = np.zeros((3, n_cells))
        ab[0, 1:] = -theta * dt * upper[:-1]
        ab[1] = 1.0 - theta * dt * diag
        ab[2, :-1] = -theta * dt * lower[1:]
        explicit = w + (1.0 - theta) * dt * (
            diag * w
            + np.concatenate([upper[:-1] * w[1:], [0.0]])
            + np.concatenate([[0.0], lower[1:] * w[:-1]])
        )
        w = solve_banded((1, 1), ab, explicit)
    mass1 = float(np.sum(vol * w))
    return rc, w, mass0, mass1


def _even_spline(rc, w):
    """Cubic spline through cell centres, mirrored to be even in r."""
    return CubicSpline(np.concatenate([-rc[::-1], rc]), np.concatenate([w[::-1], w]))


def radial_heat_oracle(spec, nu, t, r, cells_per_width=24, n_steps=400):
    """Exact radial Navier-Stokes solution for disc or annulus data.

    Radial vorticity induces a purely azimuthal velocity, so advection
    vanishes and the vorticity obeys the radial heat equation. It is solved
    by a mass-conserving finite-volume Crank-Nicolson scheme at two
    resolutions (cells and steps doubled) and Richardson-extrapolated.

    Parameters
    ----------
    spec : PatchSpec
        Disc or annulus (sharp, mollified or kink data).
    nu, t : float
        Viscosity and time, both positive.
    r : array_like
        Sample radii (strictly increasing, starting at or above 0).
    cells_per_width : int
        Coarse cells per diffusion length ``sqrt(nu t)``.
    n_steps : int
        Coarse number of time steps.

    Returns
    -------
    RadialProfile1D
        ``info`` holds ``mass_initial``, ``mass_final`` (of ``omega - omega_out``
        weighted by ``2 pi r``) and the coarse cell count.
    """
    if not (nu > 0 and t > 0):
        raise ValueError("nu and t must be positive")
    chi, breaks = _radial_data(spec)
    r = np.asarray(r, dtype=float)
    delta = np.sqrt(nu * t)
    r_max = max(spec.extent + spec.epsilon + 20.0 * delta, float(r.max()) + 10 * delta)
    n_cells = int(min(max(np.ceil(r_max / delta * cells_per_width), 400), 150_000))

    def shifted(rr):
        return chi(rr) - spec.omega_out

    rc, wc, m0, m1 = _fv_heat(shifted, breaks, nu, t, r_max, n_cells, n_steps)
    rf, wf, _, _ = _fv_heat(shifted, breaks, nu, t, r_max, 2 * n_cells, 2 * n_steps)
    coarse = _even_spline(rc, wc)(r)
    fine = _even_spline(rf, wf)(r)
    values = spec.omega_out + (4.0 * fine - coarse) / 3.0
    info = {
        "mass_initial": 2.0 * np.pi * m0,
        "mass_final": 2.0 * np.pi * m1,
        "n_cells": n_cells,
        "r_max": r_max,
    }
    return RadialProfile1D(r, values, info)


def radial_heat_bessel(spec, nu, t, r):
    """Independent quadrature of the radial heat kernel for a sharp disc/annulus.

    ``omega(r) = omega_out + (omega_in - omega_out) * int_{patch} r'/(2 nu t)
    exp(-(r - r')^2 / (4 nu t)) I0e(r r' / (2 nu t)) dr'``.
    """
    if spec.epsilon != 0 or spec.profile != "step":
        raise ValueError("bessel quadrature covers sharp step data only")
    if not spec.is_radial:
        raise ValueError(f"{spec.kind} patch is not radially symmetric")
    s = 2.0 * nu * t
    lo, hi = (0.0, spec.radii[0]) if spec.kind == "disc" else spec.radii
    out = []
    for ri in np.atleast_1d(np.asarray(r, dtype=float)):
        f = lambda rp: rp / s * np.exp(-((ri - rp) ** 2) / (2 * s)) * ive(0, ri * rp / s)
        pts = [ri] if lo < ri < hi else None
        val, _ = quad(f, lo, hi, points=pts, limit=400, epsabs=1e-13, epsrel=1e-12)
        out.append(val)
    return spec.omega_out + (spec.omega_in - spec.omega_out) * np.array(out)


@dataclass(frozen=True)
class Diagnostics:
    mean: float
    l2: float
    linf: float
    energy: float


def diagnostics(omega):
    """Grid-sum mean, L2 norm, max norm and kinetic energy of ``omega``."""
    g = omega.grid
    w = omega.values
    area = g.cell_area()
    u, v = velocity_from_hat(_rfft2(w), g)
    return Diagnostics(
        mean=float(w.mean()),
        l2=float(np.sqrt(np.sum(w * w) * area)),
        linf=float(np.abs(w).max()),
        energy=float(0.5 * np.sum(u * u + v * v) * area),
    )
