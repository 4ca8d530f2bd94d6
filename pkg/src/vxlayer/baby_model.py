"""Closed-form 1D heat layers and their self-similar ODE checks.

Step data ``1_{x > 0}`` diffuses into ``Omega(x / sqrt(nu t))`` with
``Omega(X) = erfc(-X/2) / 2``; the layer correction about the two inviscid
states is ``Omega~ = Omega - 1_{X > 0}``.
"""

import numpy as np
from scipy.sparse.linalg import expm_multiply
from scipy.special import erfc

from ._stencils import derivative_matrix
from .profile import TwoSidedProfile

__all__ = [
    "heat_layer",
    "heat_layer_derivative",
    "heat_step_solution",
    "erf_layer_tilde",
    "layer_ode_residual",
    "heat_fd_solve",
]


def heat_layer(X):
    """``Omega(X) = (1/sqrt(pi)) int_{-X/2}^inf e^{-y^2} dy = erfc(-X/2)/2``."""
    return 0.5 * erfc(-0.5 * np.asarray(X, dtype=float))


def heat_layer_derivative(X):
    """``Omega'(X) = exp(-X^2/4) / (2 sqrt(pi))``."""
    X = np.asarray(X, dtype=float)
    return np.exp(-0.25 * X * X) / (2.0 * np.sqrt(np.pi))


def heat_step_solution(x, t, nu):
    """Heat-equation solution from unit step data, ``Omega(x / sqrt(nu t))``."""
    if not t > 0 or not nu > 0:
        raise ValueError("t and nu must be positive")
    return heat_layer(np.asarray(x, dtype=float) / np.sqrt(nu * t))


def erf_layer_tilde(grid, omega_minus=0.0, omega_plus=1.0):
    """Two-sided layer ``Omega~`` about the states ``omega_minus``/``omega_plus``.

    ``omega_minus + Omega~`` on ``X < 0`` and ``omega_plus + Omega~`` on
    ``X > 0`` both equal ``omega_minus + (omega_plus - omega_minus) Omega``.
    """
    jump = omega_plus - omega_minus
    return TwoSidedProfile(
        grid,
        jump * heat_layer(grid.minus),
        -jump * 0.5 * erfc(0.5 * grid.plus),
    )


def layer_ode_residual(profile):
    """``max |V'' + (X/2) V'|`` over the nodes with ``X != 0``.

    Derivatives are fourth-order finite differences on each side.
    """
    g = profile.grid
    if g.n_half < 64:
        raise ValueError("need at least 64 points per side")
    d2 = profile.derivative(2)
    d1 = profile.derivative(1)
    res_m = d2.minus + 0.5 * g.minus * d1.minus
    res_p = d2.plus + 0.5 * g.plus * d1.plus
    return float(max(np.abs(res_m[:-1]).max(), np.abs(res_p[1:]).max()))


def _fd_heat(nu, t, h, m, order):
    x = np.arange(-m, m + 1) * h
    u0 = np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))
    D2 = derivative_matrix(x.size, h, 2, order=order).tolil()
    D2[0, :] = 0.0
    D2[x.size - 1, :] = 0.0
    return x, expm_multiply((nu * t) * D2.tocsr(), u0)


def heat_fd_solve(nu, t, h, half_width=None, richardson=True, order=2):
    """Finite-difference solution of the 1D heat equation from step data.

    Centred differences in space on ``[-W, W]`` with the far values held at
    0 and 1; the semi-discrete system is integrated exactly in time with a
    Krylov matrix exponential. The step is sampled with the midpoint value
    1/2 at ``x = 0``.

    Sampling a jump leaves an error of size about ``h^2 / (75 nu t)`` that
    no stencil order removes (the data, not the operator, is the limit).
    Both it and the second-order stencil error are even in h, so with
    ``richardson=True`` the solve is repeated at ``h/2`` and combined as
    ``(4 u_{h/2} - u_h) / 3`` on the coarse nodes.

    Returns
    -------
    x, values : ndarray
        Coarse nodes and the (extrapolated) solution there.
    """
    if not t > 0 or not nu > 0 or not h > 0:
        raise ValueError("nu, t and h must be positive")
    if half_width is None:
        half_width = max(12.0 * np.sqrt(nu * t), 40.0 * h)
    m = int(np.ceil(half_width / h))
    x, u = _fd_heat(nu, t, h, m, order)
    if not richardson:
        return x, u
    _, fine = _fd_heat(nu, t, 0.5 * h, 2 * m, order)
    return x, (4.0 * fine[::2] - u) / 3.0
