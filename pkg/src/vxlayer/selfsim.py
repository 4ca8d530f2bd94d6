"""Exactly solvable self-similar companions: shear layer, Hermite ladder, Oseen vortex."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import map_coordinates, spline_filter
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.special import erfc

from .field2d import Grid2D, ScalarField2D
from .ns2d import SimulationConfig, run
from .profile import (
    EllipticTransmissionProblem,
    ProfileGrid,
    TwoSidedProfile,
    solve_elliptic,
)

__all__ = [
    "shear_layer_profile",
    "shear_layer_exact",
    "EigenResult",
    "hermite_eigenproblem",
    "oseen_profile",
    "oseen_residual",
    "OseenResult",
    "oseen_convergence",
]


def shear_layer_profile(f_jump, grid):
    """Solve ``V'' + (X/2) V' = 0`` with ``[V] = -[f]``, ``[V'] = 0``.

    Decay is imposed as homogeneous Dirichlet data at ``+-X_max``. The
    closed form is :func:`shear_layer_exact`.
    """
    problem = EllipticTransmissionProblem(1.0, None, -float(f_jump), 0.0)
    return solve_elliptic(problem, grid, reaction=0.0, check_boundary=False)


def shear_layer_exact(f_jump, grid):
    """``V+ = -([f]/2) erfc(X/2)``, ``V- = ([f]/2) erfc(-X/2)``.

    Interface values are ``-+[f]/2`` and both sides decay; the derivative
    is continuous.
    """
    half = 0.5 * float(f_jump)
    return TwoSidedProfile(grid, half * erfc(-0.5 * grid.minus), -half * erfc(0.5 * grid.plus))


@dataclass(frozen=True, eq=False)
class EigenResult:
    """Ascending eigenvalues and eigenfunctions sampled on ``x``.

    ``functions[k]`` has unit discrete L2 norm and a positive value at its
    largest-magnitude node on the right half line.
    """

    eigenvalues: np.ndarray
    x: np.ndarray
    functions: np.ndarray


def hermite_eigenproblem(k_max, grid=None):
    """Smallest eigenpairs of ``-(V'' + (X/2) V')`` on decaying functions.

    With ``V = e^{-X^2/8} u`` the operator becomes the symmetric oscillator
    ``-u'' + (X^2/16 + 1/4) u``, discretized with the fourth-order centred
    stencil on the whole line ``[-X_max, X_max]`` (Dirichlet ends), giving
    a symmetric banded matrix whose lowest eigenpairs come from
    shift-invert Lanczos about 0. Expected eigenvalues are ``k/2``.
    """
    grid = grid or ProfileGrid(12.0, 2048)
    if grid.x_max < 10:
        raise ValueError("x_max >= 10 needed to resolve the Gaussian tails")
    h = grid.h
    x = np.linspace(-grid.x_max, grid.x_max, 2 * grid.n_half + 1)[1:-1]
    n = x.size
    c0, c1, c2 = 30.0 / 12.0, -16.0 / 12.0, 1.0 / 12.0
    M = sp.diags(
        [c2 / h**2, c1 / h**2, c0 / h**2 + x**2 / 16.0 + 0.25, c1 / h**2, c2 / h**2],
        [-2, -1, 0, 1, 2],
        shape=(n, n),
        format="csc",
    )
    try:
        vals, vecs = eigsh(M, k=k_max, sigma=0.0, which="LM", v0=np.exp(-x**2 / 8.0))
    except ArpackNoConvergence as exc:
        raise RuntimeError(f"eigen-solver did not converge: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    funcs = (np.exp(-x**2 / 8.0)[:, None] * vecs).T
    funcs /= np.sqrt(h * np.sum(funcs**2, axis=1))[:, None]
    for f in funcs:
        right = f[x.size // 2 :]
        if right[np.argmax(np.abs(right))] < 0:
            f *= -1.0
    full_x = np.concatenate([[-grid.x_max], x, [grid.x_max]])
    full_f = np.pad(funcs, ((0, 0), (1, 1)))
    return EigenResult(vals, full_x, full_f)


def oseen_profile(X1, X2=0.0, beta=0.25, amplitude=1.0):
    """``amplitude * exp(-beta |X|^2)``."""
    X1 = np.asarray(X1, float)
    X2 = np.asarray(X2, float)
    return amplitude * np.exp(-beta * (X1**2 + X2**2))


def oseen_residual(X1, X2=0.0, beta=0.25, amplitude=1.0):
    """Max of ``|(Lap + (1/2) X.grad + 1) Omega|`` for a Gaussian profile.

    Derivatives are exact: ``d_i Omega = -2 beta X_i Omega`` and
    ``d_ii Omega = (4 beta^2 X_i^2 - 2 beta) Omega``. The residual vanishes
    identically only for ``beta = 1/4``.
    """
    X1 = np.asarray(X1, float)
    X2 = np.asarray(X2, float)
    om = oseen_profile(X1, X2, beta, amplitude)
    lap = (4 * beta**2 * X1**2 - 2 * beta + 4 * beta**2 * X2**2 - 2 * beta) * om
    drift = 0.5 * (X1 * (-2 * beta * X1 * om) + X2 * (-2 * beta * X2 * om))
    res = lap + drift + om
    return float(np.abs(res).max()) if res.size else 0.0


@dataclass(frozen=True, eq=False)
class OseenResult:
    times: np.ndarray
    distances: np.ndarray
    circulations: np.ndarray
    angular_variation: np.ndarray


def oseen_convergence(nu, t_list, grid=None, circulation=1.0, t0=None, dt=None, n_angles=8):
    """Run a Gaussian blob and measure its distance to the Oseen profile.

    The blob is the Oseen vortex at a virtual age ``t0``, so at simulation
    time t the field is the Oseen vortex of age ``t + t0``. Each snapshot is
    rescaled as ``nu t * omega(x_c + X sqrt(nu t))`` and compared with
    ``circulation/(4 pi) e^{-|X|^2/4}`` on ``|X| <= 6`` (relative discrete
    L2 over rays). The distance therefore decays like ``t0 / t``.

    Raises
    ------
    ValueError
        If the initial blob width ``sqrt(2 nu t0)`` is below 4 grid cells.
    """
    grid = grid or Grid2D(256)
    t_list = sorted(float(t) for t in t_list)
    if t0 is None:
        t0 = 8.0 * grid.spacing**2 / nu
    width = np.sqrt(2.0 * nu * t0)
    if width < 4.0 * grid.spacing:
        raise ValueError(
            f"blob under-resolved: width {width:.3e} < 4 cells ({4 * grid.spacing:.3e})"
        )
    c = 0.5 * grid.length
    x1, x2 = grid.mesh()
    r2 = (x1 - c) ** 2 + (x2 - c) ** 2
    omega0 = ScalarField2D(
        grid, circulation / (4 * np.pi * nu * t0) * np.exp(-r2 / (4 * nu * t0))
    )
    if dt is None:
        dt = min(t_list) / 10.0
    cfg = SimulationConfig(nu=nu, dt=dt, t_end=t_list[-1])
    snaps = run(omega0, cfg, t_list)
    X = np.linspace(0.0, 6.0, 61)
    angles = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    target = oseen_profile(X) * circulation / (4 * np.pi)
    dists, circs, angvar = [], [], []
    for t, field in snaps[1:]:
        coeffs = spline_filter(field.values, order=3, mode="grid-wrap")
        s = np.sqrt(nu * t)
        rays = []
        for th in angles:
            p1 = (c + X * s * np.cos(th)) / grid.spacing
            p2 = (c + X * s * np.sin(th)) / grid.spacing
            vals = map_coordinates(coeffs, [p1, p2], order=3, mode="grid-wrap", prefilter=False)
            rays.append(nu * t * vals)
        rays = np.array(rays)
        mean_ray = rays.mean(axis=0)
        dists.append(np.sqrt(np.sum((mean_ray - target) ** 2) / np.sum(target**2)))
        angvar.append(np.abs(rays - mean_ray).max() / np.abs(mean_ray).max())
        circs.append(field.values.sum() * grid.cell_area())
    return OseenResult(
        np.array([t for t, _ in snaps[1:]]),
        np.array(dists),
        np.array(circs),
        np.array(angvar),
    )
