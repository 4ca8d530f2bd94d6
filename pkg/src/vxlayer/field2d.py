"""Periodic 2D grids, spectral calculus, Biot-Savart inversion and patch data.

Arrays are indexed ``values[i, j]`` with ``i`` along x1 (axis 0) and ``j``
along x2 (axis 1); node ``(i, j)`` sits at ``(i*dx, j*dx)``. Spectral
transforms use ``scipy.fft.rfft2`` with its default ("backward")
normalization: forward unscaled, inverse divided by ``n**2``.
"""

from dataclasses import dataclass
from functools import cached_property
import struct

import numpy as np
import scipy.fft as sfft
from scipy.special import j1, jv

__all__ = [
    "Grid2D",
    "ScalarField2D",
    "VectorField2D",
    "PatchSpec",
    "make_patch_vorticity",
    "band_limited_patch_vorticity",
    "level_function",
    "biot_savart",
    "spectral_derivative",
    "laplacian",
    "curl",
    "divergence",
    "save_snapshot",
    "load_snapshot",
]

FFT_WORKERS = -1


def _rfft2(a):
    return sfft.rfft2(a, workers=FFT_WORKERS)


def _irfft2(a, n):
    return sfft.irfft2(a, s=(n, n), workers=FFT_WORKERS)


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid with ``n`` nodes per side on ``[0, length)^2``."""

    n: int
    length: float = 2.0 * np.pi

    def __post_init__(self):
        n = int(self.n)
        if n != self.n or n < 16 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def spacing(self):
        return self.length / self.n

    @cached_property
    def coords(self):
        return np.arange(self.n) * self.spacing

    def mesh(self):
        """Coordinate arrays ``(x1, x2)`` of shape (n, n)."""
        return np.meshgrid(self.coords, self.coords, indexing="ij")

    @cached_property
    def wavenumbers(self):
        """Physical wavenumbers ``(k1, k2)`` broadcastable to the rfft2 shape."""
        scale = 2.0 * np.pi / self.length
        k1 = sfft.fftfreq(self.n, 1.0 / self.n) * scale
        k2 = sfft.rfftfreq(self.n, 1.0 / self.n) * scale
        return k1[:, None], k2[None, :]

    @cached_property
    def derivative_symbols(self):
        """``i*k`` per axis with the Nyquist modes zeroed (odd derivatives)."""
        k1, k2 = self.wavenumbers
        k1 = k1.copy()
        k2 = k2.copy()
        k1[self.n // 2, 0] = 0.0
        k2[0, -1] = 0.0
        return 1j * k1, 1j * k2

    @cached_property
    def k_squared(self):
        k1, k2 = self.wavenumbers
        return k1**2 + k2**2

    @property
    def nyquist(self):
        """Largest resolved physical wavenumber, ``pi * n / length``."""
        return np.pi * self.n / self.length

    def cell_area(self):
        return self.spacing**2


def _frozen_array(values):
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField2D:
    """Real samples of a periodic scalar field on a :class:`Grid2D`."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"expected shape {(self.grid.n, self.grid.n)}, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def mean(self):
        return float(self.values.mean())

    def with_values(self, values):
        return ScalarField2D(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _values_of(other))

    def __sub__(self, other):
        return self.with_values(self.values - _values_of(other))

    def __mul__(self, scalar):
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__


def _values_of(other):
    return other.values if isinstance(other, ScalarField2D) else other


@dataclass(frozen=True, eq=False)
class VectorField2D:
    """Two scalar components on a shared grid.

    ``removed_mean`` records the mean vorticity dropped by
    :func:`biot_savart` for periodic solvability (zero otherwise).
    """

    u: ScalarField2D
    v: ScalarField2D
    removed_mean: float = 0.0

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise ValueError("components must share a grid")

    @property
    def grid(self):
        return self.u.grid

    def magnitude(self):
        return np.hypot(self.u.values, self.v.values)


@dataclass(frozen=True)
class PatchSpec:
    """Vortex patch initial data.

    Parameters
    ----------
    kind : {"disc", "annulus", "ellipse"}
    radii : tuple of float
        Disc: ``(R,)``. Annulus: ``(r_inner, r_outer)``. Ellipse: semi-axes
        ``(a, b)`` along x1 and x2.
    center : tuple of float, optional
        Patch centre; ``None`` places it at the middle of the cell.
    omega_in, omega_out : float
        Vorticity inside and outside the patch.
    epsilon : float
        Mollification half-width in signed distance; 0 gives the sharp
        indicator.
    profile : {"step", "kink"}
        ``"kink"`` replaces the indicator by the continuous disc profile
        ``(1 - r^2/R^2)_+`` whose gradient jumps across the boundary.
    """

    kind: str
    radii: tuple
    center: tuple | None = None
    omega_in: float = 1.0
    omega_out: float = 0.0
    epsilon: float = 0.0
    profile: str = "step"

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        expected = {"disc": 1, "annulus": 2, "ellipse": 2}
        if self.kind not in expected:
            raise ValueError(f"unknown patch kind {self.kind!r}")
        if len(self.radii) != expected[self.kind]:
            raise ValueError(f"{self.kind} needs {expected[self.kind]} radii")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if self.kind == "annulus" and not self.radii[0] < self.radii[1]:
            raise ValueError("annulus needs inner radius < outer radius")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.profile not in ("step", "kink"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == "kink" and self.kind != "disc":
            raise ValueError("kink profile is only defined for discs")

    @property
    def is_radial(self):
        return self.kind in ("disc", "annulus")

    @property
    def extent(self):
        return max(self.radii)

    @property
    def interface_radii(self):
        """Radii of the circular interfaces (radial kinds only)."""
        if not self.is_radial:
            raise ValueError("non-radial patch has no interface radii")
        return self.radii

    @property
    def interface_separation(self):
        """Smallest distance across the patch between two interface points."""
        if self.kind == "annulus":
            return self.radii[1] - self.radii[0]
        return 2.0 * min(self.radii)

    def center_on(self, grid):
        if self.center is None:
            return (0.5 * grid.length, 0.5 * grid.length)
        return self.center

    def validate(self, grid):
        """Check the clearance and mollification constraints on ``grid``."""
        if self.extent + 4.0 * self.epsilon > 0.5 * grid.length:
            raise ValueError(
                f"patch extent {self.extent} + 4*epsilon exceeds half the cell "
                f"length {0.5 * grid.length}"
            )
        if 0 < self.epsilon < 2.0 * grid.spacing:
            raise ValueError(
                f"epsilon={self.epsilon} is below two grid cells "
                f"({2.0 * grid.spacing})"
            )


def _offsets(spec, grid):
    """Minimum-image displacement of every node from the patch centre."""
    c1, c2 = spec.center_on(grid)
    x1, x2 = grid.mesh()
    L = grid.length
    d1 = (x1 - c1 + 0.5 * L) % L - 0.5 * L
    d2 = (x2 - c2 + 0.5 * L) % L - 0.5 * L
    return d1, d2


def _ellipse_distance(y0, y1, e0, e1, iterations=120):
    """Unsigned distance from points ``(y0, y1) >= 0`` to an ellipse.

    Bisection on the Lagrange-multiplier equation of the nearest-point
    problem, with semi-axes ``e0 >= e1``.
    """
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    dist = np.empty(np.broadcast(y0, y1).shape)

    gen = (y1 > 0) & (y0 > 0)
    if np.any(gen):
        a0, a1 = y0[gen], y1[gen]
        z0, z1 = a0 / e0, a1 / e1
        g = z0**2 + z1**2 - 1.0
        r0 = (e0 / e1) ** 2
        n0 = r0 * z0
        s0 = z1 - 1.0
        s1 = np.where(g < 0, 0.0, np.hypot(n0, z1) - 1.0)
        for _ in range(iterations):
            s = 0.5 * (s0 + s1)
            gs = (n0 / (s + r0)) ** 2 + (z1 / (s + 1.0)) ** 2 - 1.0
            s0 = np.where(gs > 0, s, s0)
            s1 = np.where(gs > 0, s1, s)
        s = 0.5 * (s0 + s1)
        x0 = r0 * a0 / (s + r0)
        x1 = a1 / (s + 1.0)
        dist[gen] = np.hypot(x0 - a0, x1 - a1)

    on_minor = (y0 <= 0) & (y1 > 0)
    dist[on_minor] = np.abs(y1[on_minor] - e1)

    on_major = y1 <= 0
    if np.any(on_major):
        a0 = y0[on_major]
        numer = e0 * a0
        denom = e0**2 - e1**2
        inner = numer < denom
        xde = np.where(inner, numer / denom, 1.0)
        x0 = e0 * xde
        x1 = e1 * np.sqrt(np.clip(1.0 - xde**2, 0.0, None))
        dist[on_major] = np.where(inner, np.hypot(x0 - a0, x1), np.abs(a0 - e0))
    return dist


def signed_distance(spec, d1, d2):
    """Signed distance to the patch boundary, positive inside.

    ``d1, d2`` are displacements from the patch centre. For the annulus the
    value is ``min(r - r_inner, r_outer - r)``: positive inside the ring,
    and the nearest interface decides the magnitude outside it.
    """
    r = np.hypot(d1, d2)
    if spec.kind == "disc":
        return spec.radii[0] - r
    if spec.kind == "annulus":
        r1, r2 = spec.radii
        return np.minimum(r - r1, r2 - r)
    a, b = spec.radii
    y0, y1 = np.abs(d1), np.abs(d2)
    if a < b:
        a, b = b, a
        y0, y1 = y1, y0
    if a == b:
        return a - r
    dist = _ellipse_distance(y0, y1, a, b)
    inside = (y0 / a) ** 2 + (y1 / b) ** 2 < 1.0
    return np.where(inside, dist, -dist)


def smoothstep(d, eps):
    """Quintic ramp in signed distance: 0 for d <= -eps, 1 for d >= eps."""
    s = np.clip((np.asarray(d, dtype=float) + eps) / (2.0 * eps), 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def level_function(spec, grid):
    """Signed distance ``phi0`` to the patch boundary (positive inside)."""
    spec.validate(grid)
    d1, d2 = _offsets(spec, grid)
    return ScalarField2D(grid, signed_distance(spec, d1, d2))


def patch_indicator(spec, d1, d2):
    """Mollified indicator ``chi_eps`` at displacements from the centre."""
    if spec.profile == "kink":
        R = spec.radii[0]
        return np.clip(1.0 - (d1**2 + d2**2) / R**2, 0.0, None)
    dist = signed_distance(spec, d1, d2)
    if spec.epsilon > 0:
        return smoothstep(dist, spec.epsilon)
    return np.where(dist > 0, 1.0, np.where(dist < 0, 0.0, 0.5))


def make_patch_vorticity(spec, grid):
    """Sample ``omega_out + (omega_in - omega_out) * chi_eps`` on the grid."""
    spec.validate(grid)
    d1, d2 = _offsets(spec, grid)
    chi = patch_indicator(spec, d1, d2)
    return ScalarField2D(grid, spec.omega_out + (spec.omega_in - spec.omega_out) * chi)


def _disc_transform(k, R):
    """Fourier transform of the indicator of a disc of radius R at |k|."""
    kr = k * R
    safe = np.where(kr > 0, kr, 1.0)
    return np.where(kr > 0, 2.0 * np.pi * R**2 * j1(safe) / safe, np.pi * R**2)


def _kink_transform(k, R):
    """Fourier transform of ``(1 - r^2/R^2)_+`` at |k|."""
    kr = k * R
    safe = np.where(kr > 0, kr, 1.0)
    return np.where(
        kr > 0, 4.0 * np.pi * R**2 * jv(2, safe) / safe**2, 0.5 * np.pi * R**2
    )


def band_limited_patch_vorticity(spec, grid):
    """Sharp patch data truncated to the disc ``|k| < nyquist`` in frequency.

    The Fourier coefficients of the exact indicator are evaluated in closed
    form and every mode with ``|k|`` below the Nyquist wavenumber is kept.
    The truncation set is isotropic, so radial data stays radial to
    round-off, and nothing is lost to pointwise sampling of a jump.
    """
    if spec.epsilon != 0:
        raise ValueError("band-limited data represents the sharp patch; set epsilon=0")
    spec.validate(grid)
    n, L = grid.n, grid.length
    scale = 2.0 * np.pi / L
    k1 = (sfft.fftfreq(n, 1.0 / n) * scale)[:, None]
    k2 = (sfft.fftfreq(n, 1.0 / n) * scale)[None, :]
    kk = np.hypot(k1, k2)
    if spec.kind == "disc" and spec.profile == "kink":
        hat = _kink_transform(kk, spec.radii[0])
    elif spec.kind == "disc":
        hat = _disc_transform(kk, spec.radii[0])
    elif spec.kind == "annulus":
        hat = _disc_transform(kk, spec.radii[1]) - _disc_transform(kk, spec.radii[0])
    else:
        a, b = spec.radii
        q = np.hypot(a * k1, b * k2)
        hat = _disc_transform(q, 1.0) * a * b
    c1, c2 = spec.center_on(grid)
    coef = hat * np.exp(-1j * (k1 * c1 + k2 * c2)) / L**2
    coef[kk >= grid.nyquist] = 0.0
    chi = sfft.ifft2(coef * n * n, workers=FFT_WORKERS).real
    return ScalarField2D(grid, spec.omega_out + (spec.omega_in - spec.omega_out) * chi)


def spectral_derivative(f, axis):
    """Fourier-multiplier derivative of ``f`` along ``axis`` (0 or 1)."""
    g = f.grid
    sym = g.derivative_symbols[axis]
    return ScalarField2D(g, _irfft2(sym * _rfft2(f.values), g.n))


def laplacian(f):
    g = f.grid
    return ScalarField2D(g, _irfft2(-g.k_squared * _rfft2(f.values), g.n))


def curl(vel):
    """Scalar curl ``d1 v - d2 u`` of a vector field."""
    return ScalarField2D(
        vel.grid,
        spectral_derivative(vel.v, 0).values - spectral_derivative(vel.u, 1).values,
    )


def divergence(vel):
    return ScalarField2D(
        vel.grid,
        spectral_derivative(vel.u, 0).values + spectral_derivative(vel.v, 1).values,
    )


def velocity_from_hat(w_hat, grid):
    """Velocity components from the rfft2 of vorticity (mean mode ignored)."""
    k2 = grid.k_squared
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    psi_hat = w_hat * inv
    d1, d2 = grid.derivative_symbols
    u = _irfft2(d2 * psi_hat, grid.n)
    v = _irfft2(-d1 * psi_hat, grid.n)
    return u, v


def biot_savart(omega):
    """Divergence-free velocity whose curl is ``omega - mean(omega)``.

    Solves ``-Lap psi = omega - mean`` and returns ``(d2 psi, -d1 psi)``.
    The dropped mean is stored in ``removed_mean``.
    """
    g = omega.grid
    if not np.all(np.isfinite(omega.values)):
        raise ValueError("non-finite vorticity")
    u, v = velocity_from_hat(_rfft2(omega.values), g)
    return VectorField2D(ScalarField2D(g, u), ScalarField2D(g, v), removed_mean=omega.mean)


_MAGIC = b"VXL1"


def save_snapshot(path, field_, metadata=None):
    """Write ``field_`` in the VXL1 binary layout plus a ``.meta`` sidecar."""
    g = field_.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IId", g.n, g.n, g.length))
        fh.write(np.ascontiguousarray(field_.values, dtype="<f8").tobytes())
    meta = dict(metadata or {})
    with open(f"{path}.meta", "w") as fh:
        for key in sorted(meta):
            fh.write(f"{key} = {meta[key]}\n")


def load_snapshot(path):
    """Read a VXL1 snapshot; returns ``(ScalarField2D, metadata dict)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a VXL1 snapshot")
    nx, ny, length = struct.unpack("<IId", blob[4:20])
    if nx != ny:
        raise ValueError(f"{path}: only square grids are supported")
    data = np.frombuffer(blob[20:], dtype="<f8")
    if data.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {data.size}")
    meta = {}
    try:
        with open(f"{path}.meta") as fh:
            for line in fh:
                if "=" in line:
                    key, value = line.split("=", 1)
                    meta[key.strip()] = value.strip()
    except FileNotFoundError:
        pass
    return ScalarField2D(Grid2D(nx, length), data.reshape(nx, ny)), meta
