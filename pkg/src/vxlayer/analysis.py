"""Measurement of viscous layers in simulated fields.

Layer sampling, widths, log-log rate fits, remainder norms, superposition
defects, polarization of the velocity perturbation, and Littlewood-Paley
block norms on the periodic frequency lattice.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates, spline_filter
from scipy.optimize import bisect, brentq

from .field2d import FFT_WORKERS, ScalarField2D, biot_savart
from .profile import (
    EllipticTransmissionProblem,
    ProfileGrid,
    TwoSidedProfile,
    jump_from_vorticity,
    solve_elliptic,
    vorticity_profile,
)

__all__ = [
    "UnderResolvedError",
    "LayerSample",
    "FieldSampler",
    "extract_layer",
    "layer_width",
    "RateFit",
    "fit_rate",
    "leading_layer_profile",
    "diffusion_coefficient",
    "layer_field",
    "RemainderNorms",
    "remainder_norms",
    "SuperpositionResult",
    "OverlapNotReachedError",
    "superposition_check",
    "polarization_ratio",
    "BesovSpectrum",
    "dyadic_blocks",
    "besov_norm",
    "lp_cutoff",
]


class UnderResolvedError(ValueError):
    """The layer scale is too small for the grid or the mollification."""


class OverlapNotReachedError(ValueError):
    """Two layers never reach the overlap regime at the requested time."""


class FieldSampler:
    """Periodic bicubic-spline interpolation of a field at arbitrary points."""

    def __init__(self, field):
        self.grid = field.grid
        self.coeffs = spline_filter(field.values, order=3, mode="grid-wrap")

    def __call__(self, x1, x2):
        h = self.grid.spacing
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        pts = [np.ravel(x1) / h, np.ravel(x2) / h]
        out = map_coordinates(self.coeffs, pts, order=3, mode="grid-wrap", prefilter=False)
        return out.reshape(x1.shape)


def _periodic_gradient(field):
    """Fourth-order centred differences of a periodic field."""
    v = field.values
    h = field.grid.spacing
    out = []
    for axis in (0, 1):
        d = (
            -np.roll(v, -2, axis) + 8 * np.roll(v, -1, axis)
            - 8 * np.roll(v, 1, axis) + np.roll(v, 2, axis)
        ) / (12 * h)
        out.append(ScalarField2D(field.grid, d))
    return out


@dataclass(frozen=True, eq=False)
class LayerSample:
    """Values of a field along the normal ray through one interface point.

    ``X`` is the fast variable; the physical points are
    ``anchor + X * scale * normal`` with ``scale = sqrt(nu t)``.
    ``values`` is ``omega_nu - omega0`` (the measured layer) and
    ``total`` is ``omega_nu`` itself.
    """

    anchor: np.ndarray
    normal: np.ndarray
    X: np.ndarray
    values: np.ndarray
    total: np.ndarray
    omega0: np.ndarray
    nu: float
    t: float
    scale: float


def _ray_anchor(sampler, center, theta, r_max, crossing, dr):
    r = np.arange(0.0, r_max, dr)
    d = np.array([np.cos(theta), np.sin(theta)])
    vals = sampler(center[0] + r * d[0], center[1] + r * d[1])
    sgn = np.sign(vals)
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    exact = np.nonzero(vals == 0)[0]
    roots = []
    for i in idx:
        f = lambda s: float(sampler(center[0] + s * d[0], center[1] + s * d[1]))
        roots.append(bisect(f, r[i], r[i + 1], xtol=1e-13, maxiter=200))
    roots.extend(r[exact].tolist())
    roots.sort()
    if len(roots) <= crossing:
        raise ValueError(f"ray at angle {theta:.3f} has no crossing number {crossing}")
    s = roots[crossing]
    return np.array(center) + s * d


def extract_layer(
    omega_nu,
    omega0,
    phi0,
    nu,
    t,
    rays,
    center=None,
    crossing=0,
    X=None,
    eta=None,
    epsilon=0.0,
    scale=None,
):
    """Sample the measured layer along normal rays through the interface.

    Parameters
    ----------
    omega_nu : ScalarField2D
        Simulated vorticity.
    omega0 : ScalarField2D or (float, float)
        Inviscid reference: a smooth field interpolated at the sample
        points, or the one-sided values ``(omega_minus, omega_plus)`` used
        according to the sign of X (``X = 0`` takes the plus side, matching
        :class:`TwoSidedProfile` evaluation).
    phi0 : ScalarField2D
        Level function, positive on the plus side.
    nu, t : float
        Viscosity and time; the layer scale is ``sqrt(nu t)``.
    rays : int or sequence of float
        Ray angles about ``center`` (an int means equally spaced rays).
    center : (float, float), optional
        Ray origin; defaults to the middle of the cell.
    crossing : int
        Which zero of ``phi0`` along each ray, counted outwards.
    X : array, optional
        Fast-variable samples (symmetric about 0); defaults to 161 points
        on ``|X| <= min(6, eta/scale)``.
    eta : float, optional
        Band half-width; defaults to ``0.3 * 2 max(phi0)``, i.e. 0.3 times
        the interface separation of a disc or annulus.
    epsilon : float
        Mollification width of the data, for the resolution check.
    scale : float, optional
        Override of ``sqrt(nu t)`` (needed when ``nu t = 0``).

    Raises
    ------
    UnderResolvedError
        If ``scale < 8 epsilon`` or ``scale < 4 * spacing``.
    """
    grid = omega_nu.grid
    scale = np.sqrt(nu * t) if scale is None else float(scale)
    problems = []
    if scale < 4.0 * grid.spacing:
        problems.append(f"scale {scale:.3e} < 4 * spacing = {4 * grid.spacing:.3e}")
    if scale < 8.0 * epsilon:
        problems.append(f"scale {scale:.3e} < 8 * epsilon = {8 * epsilon:.3e}")
    if problems:
        raise UnderResolvedError("under-resolved layer: " + "; ".join(problems))
    if eta is None:
        eta = 0.6 * float(phi0.values.max())
    if X is None:
        xl = min(6.0, eta / scale)
        X = np.linspace(-xl, xl, 161)
    X = np.asarray(X, float)
    if not np.allclose(X, -X[::-1]):
        raise ValueError("X samples must be symmetric about 0")
    if np.abs(X).max() > eta / scale * (1 + 1e-12):
        raise ValueError("X samples leave the band |phi0| < eta")
    if center is None:
        center = (0.5 * grid.length, 0.5 * grid.length)
    if np.isscalar(rays):
        rays = np.linspace(0.0, 2 * np.pi, int(rays), endpoint=False)

    phi_s = FieldSampler(phi0)
    g1, g2 = _periodic_gradient(phi0)
    g1_s, g2_s = FieldSampler(g1), FieldSampler(g2)
    w_s = FieldSampler(omega_nu)
    w0_s = FieldSampler(omega0) if isinstance(omega0, ScalarField2D) else None
    out = []
    for theta in rays:
        anchor = _ray_anchor(phi_s, center, theta, 0.5 * grid.length, crossing, 0.5 * grid.spacing)
        n = np.array([float(g1_s(*anchor)), float(g2_s(*anchor))])
        n /= np.linalg.norm(n)
        p1 = anchor[0] + X * scale * n[0]
        p2 = anchor[1] + X * scale * n[1]
        total = w_s(p1, p2)
        if w0_s is not None:
            ref = w0_s(p1, p2)
        else:
            om_minus, om_plus = omega0
            ref = np.where(X >= 0, om_plus, om_minus)
        out.append(LayerSample(anchor, n, X, total - ref, total, ref, nu, t, scale))
    return out


def layer_width(sample, lo=0.1, hi=0.9, omega_minus=None, omega_plus=None):
    """Physical distance between the ``lo`` and ``hi`` crossings of the transition.

    The transition fraction is ``(omega - omega_minus) / (omega_plus -
    omega_minus)`` with the side values taken from the reference values at
    the ends of the sample unless given.
    """
    X = sample.X
    total = sample.total
    wm = sample.omega0[0] if omega_minus is None else omega_minus
    wp = sample.omega0[-1] if omega_plus is None else omega_plus
    if wp == wm:
        raise ValueError("no transition: equal side values")
    frac = (total - wm) / (wp - wm)
    steps = np.diff(frac)
    tol = 1e-6 * max(1.0, np.abs(frac).max())
    if np.any(steps < -tol):
        raise ValueError("non-monotone transition sample")
    spline = CubicSpline(X, frac)
    levels = []
    for level in (lo, hi):
        above = np.nonzero(frac >= level)[0]
        if above.size == 0 or above[0] == 0:
            raise ValueError(f"level {level} is not crossed inside the sample")
        i = above[0]
        levels.append(brentq(lambda s: spline(s) - level, X[i - 1], X[i], xtol=1e-14))
    return float((levels[1] - levels[0]) * sample.scale)


@dataclass(frozen=True)
class RateFit:
    """Least-squares power law ``norm = exp(intercept) * scale**exponent``."""

    exponent: float
    intercept: float
    r_squared: float
    log_scale: tuple
    log_norm: tuple


def fit_rate(pairs):
    """Ordinary least squares of ``log norm`` against ``log scale``."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError("need at least 3 (scale, norm) pairs")
    s = np.array([p[0] for p in pairs], float)
    v = np.array([p[1] for p in pairs], float)
    if np.any(s <= 0) or np.any(v <= 0):
        raise ValueError("scales and norms must be positive")
    ls, lv = np.log(s), np.log(v)
    A = np.vstack([ls, np.ones_like(ls)]).T
    (p, c), *_ = np.linalg.lstsq(A, lv, rcond=None)
    resid = lv - (p * ls + c)
    ss_tot = np.sum((lv - lv.mean()) ** 2)
    ss_res = np.sum(resid**2)
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return RateFit(float(p), float(c), float(r2), tuple(ls), tuple(lv))


def leading_layer_profile(omega_plus, omega_minus, grid=None, a=1.0):
    """Leading vorticity layer ``Omega~`` built from the transmission problem.

    Solves ``E V = 0`` with the jump data of the vorticity traces (unit
    normal, coefficient ``a``), forms the vorticity profile and subtracts
    the one-sided states.
    """
    grid = grid or ProfileGrid(12.0, 2048)
    n = np.array([1.0, 0.0])
    g1, g2 = jump_from_vorticity(omega_plus, omega_minus, n, a)
    V = solve_elliptic(EllipticTransmissionProblem(a, None, g1, g2), grid)
    Om = vorticity_profile(V, n, omega_plus, omega_minus)
    return TwoSidedProfile(grid, Om.minus - omega_minus, Om.plus - omega_plus)


def diffusion_coefficient(phi0, floor=0.25):
    """Layer coefficient ``a = max(|grad phi0|^2, floor)`` on the grid of ``phi0``.

    Inside the interface band ``a = |n|^2``; the floor only extends ``a``
    away from the band, where it must not influence the layer.
    """
    if not floor > 0:
        raise ValueError("floor must be positive")
    g1, g2 = _periodic_gradient(phi0)
    return ScalarField2D(phi0.grid, np.maximum(g1.values**2 + g2.values**2, floor))


def layer_field(profile, phi0, scale):
    """``profile(phi0 / scale)`` on the grid of ``phi0``.

    Nodes exactly on the interface take the mean of the two one-sided
    values, matching the midpoint value of a sampled sharp patch.
    """
    X = phi0.values / scale
    vals = profile(X)
    on = X == 0
    if np.any(on):
        vals = np.where(on, 0.5 * (profile.minus[-1] + profile.plus[0]), vals)
    return ScalarField2D(phi0.grid, vals)


@dataclass(frozen=True)
class RemainderNorms:
    level0_l2: float
    level0_linf: float
    level1_l2: float | None
    level1_linf: float | None


def remainder_norms(omega_nu, omega0, layer=None, phi0=None, scale=None):
    """Grid-quadrature norms of the expansion remainders.

    Level 0 is ``omega_nu - omega0``; level 1 further subtracts the layer
    ``layer(phi0 / scale)`` (a profile or a list of profile/level pairs).
    """
    if omega_nu.grid != omega0.grid:
        raise ValueError("grid mismatch between omega_nu and omega0")
    area = omega_nu.grid.cell_area()
    r0 = omega_nu.values - omega0.values
    l2 = lambda a: float(np.sqrt(np.sum(a * a) * area))
    out1 = (None, None)
    if layer is not None:
        if isinstance(layer, (list, tuple)):
            pairs = layer
        else:
            pairs = [(layer, phi0)]
        r1 = r0.copy()
        for prof, phi in pairs:
            if phi.grid != omega_nu.grid:
                raise ValueError("grid mismatch for the level function")
            r1 -= layer_field(prof, phi, scale).values
        out1 = (l2(r1), float(np.abs(r1).max()))
    return RemainderNorms(l2(r0), float(np.abs(r0).max()), *out1)


@dataclass(frozen=True)
class SuperpositionResult:
    defect: float
    overlapping: bool
    band_points: int


def superposition_check(omega_nu, omega0, layers, scale, gap, band=None, require_overlap=True):
    """L-infinity defect of ``omega_nu - (omega0 + sum_i Omega~_i(phi_i/scale))``.

    ``layers`` is a list of ``(profile, phi_i)`` pairs, one per interface,
    each with its own level function (positive on its plus side). The
    defect is measured where some ``|phi_i| < band`` (default ``gap``).
    The layers overlap once ``3.6 scale > gap / 2``.
    """
    overlapping = 3.6 * scale > 0.5 * gap
    if require_overlap and not overlapping:
        raise OverlapNotReachedError(
            f"layers of width 3.6*{scale:.3e} do not overlap across gap {gap}"
        )
    band = gap if band is None else band
    model = omega0.values.copy()
    mask = np.zeros(model.shape, dtype=bool)
    for prof, phi in layers:
        model += layer_field(prof, phi, scale).values
        mask |= np.abs(phi.values) < band
    defect = np.abs(omega_nu.values - model)[mask]
    return SuperpositionResult(float(defect.max()), bool(overlapping), int(mask.sum()))


def polarization_ratio(omega_nu, omega0, phi0, eta):
    """Normal over tangential size of the velocity perturbation in the band.

    Returns ``max |dv . n| / max |dv . n_perp|`` over ``|phi0| < eta`` with
    ``dv = BS(omega_nu) - BS(omega0)`` and ``n`` the normalized gradient of
    ``phi0``.
    """
    dv = biot_savart(omega_nu - omega0)
    g1, g2 = _periodic_gradient(phi0)
    norm = np.hypot(g1.values, g2.values)
    mask = (np.abs(phi0.values) < eta) & (norm > 0.5)
    n1 = g1.values[mask] / norm[mask]
    n2 = g2.values[mask] / norm[mask]
    u, v = dv.u.values[mask], dv.v.values[mask]
    normal = np.abs(u * n1 + v * n2).max()
    tangential = np.abs(-u * n2 + v * n1).max()
    return float(normal / tangential)


def _smooth_step(s):
    """C-infinity transition from 0 (s <= 0) to 1 (s >= 1)."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def lp_cutoff(xi):
    """Radial ``chi``: 1 on ``|xi| <= 3/4``, 0 on ``|xi| >= 4/3``, smooth between."""
    r = np.abs(np.asarray(xi, float))
    return 1.0 - _smooth_step((r - 0.75) / (4.0 / 3.0 - 0.75))


@dataclass(frozen=True, eq=False)
class BesovSpectrum:
    """Block sup-norms ``||Delta_j f||_inf`` for ``j = -1, 0, ..., J``."""

    j: np.ndarray
    sup_norms: np.ndarray
    blocks: np.ndarray | None = None

    def weighted(self, lam):
        return 2.0 ** (self.j * float(lam)) * self.sup_norms


def dyadic_blocks(field, keep_blocks=False, length=None):
    """Littlewood-Paley blocks on the lattice of physical frequencies.

    ``Delta_{-1} = chi(D)`` and ``Delta_j = phi(2^-j D)`` with
    ``phi(xi) = chi(xi/2) - chi(xi)``. Blocks run up to the first J for
    which ``chi(2^-(J+1) xi) = 1`` on every resolved frequency, so the
    blocks sum to the field exactly.

    ``field`` is a :class:`ScalarField2D` or a periodic array of any
    dimension with equal ``length`` along every axis; the latter serves
    fields that vary in one direction only and need a finer lattice.
    """
    if isinstance(field, ScalarField2D):
        values, length = field.values, field.grid.length
    else:
        values = np.asarray(field, dtype=float)
        if length is None:
            raise ValueError("length is required for array input")
        if not np.all(np.isfinite(values)):
            raise ValueError("field must be finite")
    shape = values.shape
    freqs = [2 * np.pi * sfft.fftfreq(m, d=length / m) for m in shape[:-1]]
    freqs.append(2 * np.pi * sfft.rfftfreq(shape[-1], d=length / shape[-1]))
    grids = np.meshgrid(*freqs, indexing="ij", sparse=True)
    xi = np.sqrt(sum(k**2 for k in grids))
    xi_max = float(xi.max())
    J = max(0, int(np.ceil(np.log2(xi_max / 0.75))) - 1)
    f_hat = sfft.rfftn(values, workers=FFT_WORKERS)
    sups, blocks = [], []
    prev = lp_cutoff(xi)
    js = [-1]
    pieces = [prev]
    for j in range(0, J + 1):
        nxt = lp_cutoff(xi / 2.0 ** (j + 1))
        pieces.append(nxt - prev)
        js.append(j)
        prev = nxt
    for mult in pieces:
        b = sfft.irfftn(f_hat * mult, s=shape, workers=FFT_WORKERS)
        sups.append(np.abs(b).max())
        if keep_blocks:
            blocks.append(b)
    return BesovSpectrum(
        np.array(js), np.array(sups), np.array(blocks) if keep_blocks else None
    )


def besov_norm(field, lam, spectrum=None, length=None):
    """``sup_j 2^{j lam} ||Delta_j f||_inf`` over the resolved blocks.

    Raises OverflowError if ``2^{J lam}`` is not representable, reporting
    the largest usable block index.
    """
    spec = spectrum or dyadic_blocks(field, length=length)
    j_max = int(spec.j.max())
    if lam * j_max > 1000:
        usable = int(1000 // lam) if lam > 0 else j_max
        raise OverflowError(f"2^(j*{lam}) overflows for j > {usable}; max usable j = {usable}")
    return float(np.max(spec.weighted(lam)))
