"""Two-sided profiles in the fast variable X and their transmission solvers.

A profile lives on ``[-X_max, 0^-] U [0^+, X_max]`` with the interface
node stored twice. The elliptic operator is

    E V = a V'' + (X/2) V' - V/2,

with jump conditions ``[V] = g1`` and ``[V'] = g2`` at ``X = 0`` and
homogeneous Dirichlet conditions at ``X = +-X_max``. Derivatives use
fourth-order finite differences, one-sided at the interface.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu

from ._stencils import derivative_matrix, endpoint_weights

__all__ = [
    "ProfileGrid",
    "TwoSidedProfile",
    "EllipticTransmissionProblem",
    "EvolutionCoefficients",
    "EvolutionResult",
    "SingularSystemError",
    "BoundaryLeakError",
    "StepRejectedError",
    "lift_jumps",
    "solve_elliptic",
    "energy_identity",
    "discrete_coercivity",
    "solve_evolution",
    "graded_times",
    "reaction_matrix",
    "jump_from_vorticity",
    "vorticity_profile",
    "pressure_profile",
    "orthogonality_check",
    "elliptic_residual",
    "fuchsian_track",
]


class SingularSystemError(RuntimeError):
    def __init__(self, message, coercivity):
        super().__init__(f"{message} (discrete coercivity estimate {coercivity})")
        self.coercivity = coercivity


class BoundaryLeakError(RuntimeError):
    """Solution is not small at +-X_max: the truncated domain is too short."""


class StepRejectedError(RuntimeError):
    def __init__(self, message, step_index):
        super().__init__(message)
        self.step_index = step_index


@dataclass(frozen=True)
class ProfileGrid:
    """Uniform nodes on each side of the interface, ``n_half + 1`` per side."""

    x_max: float = 12.0
    n_half: int = 2048

    def __post_init__(self):
        if not self.x_max > 0:
            raise ValueError("x_max must be positive")
        if int(self.n_half) != self.n_half or self.n_half < 64:
            raise ValueError("n_half must be an integer >= 64")

    @property
    def h(self):
        return self.x_max / self.n_half

    @property
    def size(self):
        """Nodes per side."""
        return self.n_half + 1

    @cached_property
    def plus(self):
        return np.linspace(0.0, self.x_max, self.n_half + 1)

    @cached_property
    def minus(self):
        return -self.plus[::-1]

    @cached_property
    def x(self):
        return np.concatenate([self.minus, self.plus])

    @cached_property
    def d1(self):
        return derivative_matrix(self.size, self.h, 1)

    @cached_property
    def d2(self):
        return derivative_matrix(self.size, self.h, 2)


@dataclass(frozen=True, eq=False)
class TwoSidedProfile:
    """Values of a (possibly vector-valued) function of X on both sides.

    ``minus`` and ``plus`` have shape ``(n_half + 1,)`` or
    ``(n_half + 1, d)``; ``minus[-1]`` and ``plus[0]`` are the one-sided
    values at the interface.
    """

    grid: ProfileGrid
    minus: np.ndarray
    plus: np.ndarray

    def __post_init__(self):
        m = np.array(self.minus, dtype=float)
        p = np.array(self.plus, dtype=float)
        if m.shape != p.shape or m.shape[0] != self.grid.size or m.ndim > 2:
            raise ValueError("side arrays must have shape (n_half + 1[, d]) each")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(p))):
            raise ValueError("profile values must be finite")
        m.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "minus", m)
        object.__setattr__(self, "plus", p)

    @classmethod
    def from_function(cls, grid, fn):
        """Sample ``fn(X, side)`` with side = -1 or +1 on both halves."""
        return cls(grid, fn(grid.minus, -1), fn(grid.plus, +1))

    @classmethod
    def zeros(cls, grid, dim=None):
        shape = (grid.size,) if dim is None else (grid.size, dim)
        return cls(grid, np.zeros(shape), np.zeros(shape))

    @property
    def dim(self):
        return None if self.minus.ndim == 1 else self.minus.shape[1]

    @property
    def values(self):
        return np.concatenate([self.minus, self.plus])

    def jump(self):
        """``V(0+) - V(0-)``."""
        return self.plus[0] - self.minus[-1]

    def one_sided_derivatives(self, deriv=1):
        """``(V^(deriv)(0-), V^(deriv)(0+))`` from fourth-order stencils."""
        g = self.grid
        im, wm = endpoint_weights(g.size, g.h, deriv, at_start=False)
        ip, wp = endpoint_weights(g.size, g.h, deriv, at_start=True)
        return np.tensordot(wm, self.minus[im], axes=1), np.tensordot(
            wp, self.plus[ip], axes=1
        )

    def derivative_jump(self):
        dm, dp = self.one_sided_derivatives(1)
        return dp - dm

    def derivative(self, deriv=1):
        g = self.grid
        mat = g.d1 if deriv == 1 else g.d2
        if deriv not in (1, 2):
            raise ValueError("deriv must be 1 or 2")
        return TwoSidedProfile(g, mat @ self.minus, mat @ self.plus)

    def map(self, fn):
        return TwoSidedProfile(self.grid, fn(self.minus), fn(self.plus))

    def __add__(self, other):
        if isinstance(other, TwoSidedProfile):
            return TwoSidedProfile(self.grid, self.minus + other.minus, self.plus + other.plus)
        return TwoSidedProfile(self.grid, self.minus + other, self.plus + other)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        return TwoSidedProfile(self.grid, self.minus * scalar, self.plus * scalar)

    __rmul__ = __mul__

    def max_abs(self):
        return float(max(np.abs(self.minus).max(), np.abs(self.plus).max()))

    def __call__(self, X):
        """Cubic-spline evaluation; ``X >= 0`` uses the plus side."""
        X = np.asarray(X, dtype=float)
        sm = CubicSpline(self.grid.minus, self.minus, axis=0)
        spp = CubicSpline(self.grid.plus, self.plus, axis=0)
        Xc = np.clip(X, -self.grid.x_max, self.grid.x_max)
        vm = sm(np.minimum(Xc, 0.0))
        vp = spp(np.maximum(Xc, 0.0))
        mask = X >= 0
        if vm.ndim > X.ndim:
            mask = mask[..., None]
        out = np.where(mask, vp, vm)
        outside = np.abs(X) > self.grid.x_max
        if vm.ndim > X.ndim:
            outside = outside[..., None]
        return np.where(outside, 0.0, out)

    def to_csv(self, path, header=None):
        """Write ``side, X, v0[, v1 ...]`` rows; ``header`` lines become comments."""
        comps = 1 if self.dim is None else self.dim
        names = ",".join(f"v{i}" for i in range(comps))
        with open(path, "w") as fh:
            for line in header or []:
                fh.write(f"# {line}\n")
            fh.write(f"# jump = {np.atleast_1d(self.jump()).tolist()}\n")
            fh.write(f"# derivative_jump = {np.atleast_1d(self.derivative_jump()).tolist()}\n")
            fh.write(f"side,X,{names}\n")
            for side, xs, vals in (("-", self.grid.minus, self.minus), ("+", self.grid.plus, self.plus)):
                vals2 = vals.reshape(len(xs), -1)
                for x, row in zip(xs, vals2):
                    fh.write(side + "," + ",".join(f"{v:.17g}" for v in (x, *row)) + "\n")

    @classmethod
    def from_csv(cls, path):
        rows = {"-": [], "+": []}
        xs = {"-": [], "+": []}
        with open(path) as fh:
            for line in fh:
                if line.startswith("#") or line.startswith("side"):
                    continue
                parts = line.strip().split(",")
                xs[parts[0]].append(float(parts[1]))
                rows[parts[0]].append([float(p) for p in parts[2:]])
        m, p = np.array(rows["-"]), np.array(rows["+"])
        n_half = len(xs["+"]) - 1
        grid = ProfileGrid(x_max=xs["+"][-1], n_half=n_half)
        if m.shape[1] == 1:
            m, p = m[:, 0], p[:, 0]
        return cls(grid, m, p)


def _coefficient_samples(a, grid):
    """Broadcast a scalar or TwoSidedProfile coefficient to side arrays."""
    if isinstance(a, TwoSidedProfile):
        return np.asarray(a.minus, float), np.asarray(a.plus, float)
    val = float(a)
    return np.full(grid.size, val), np.full(grid.size, val)


@dataclass(frozen=True, eq=False)
class EllipticTransmissionProblem:
    """Data of ``E V = f`` with ``[V] = g1`` and ``[V'] = g2``.

    ``a`` is a positive constant or a scalar TwoSidedProfile; ``f`` is a
    TwoSidedProfile (scalar or vector) or ``None`` for zero; ``g1`` and
    ``g2`` are scalars or vectors matching the dimension of ``f``.
    """

    a: object
    f: TwoSidedProfile | None = None
    g1: object = 0.0
    g2: object = 0.0

    def coefficient_floor(self, grid):
        am, ap = _coefficient_samples(self.a, grid)
        return float(min(am.min(), ap.min()))

    def dim(self):
        if self.f is not None:
            return self.f.dim
        g1, g2 = np.asarray(self.g1, float), np.asarray(self.g2, float)
        size = max(g1.size, g2.size)
        if g1.ndim == 0 and g2.ndim == 0:
            return None
        return size


def _cutoff(x, sigma):
    """Smooth cutoff standing in for X inside the drift term.

    Equals X for ``|X| <= sigma`` and saturates smoothly at ``+-2 sigma``;
    ``sigma=None`` returns X itself.
    """
    if sigma is None:
        return x, np.ones_like(x)
    s = np.clip(np.abs(x) / sigma, 0.0, None)
    # chi(s) = s on [0,1], cubic blend to constant 1.5 on [1,2]
    blend = np.where(s <= 1, s, np.where(s >= 2, 1.5, s - 0.5 * (s - 1) ** 2))
    slope = np.where(s <= 1, 1.0, np.where(s >= 2, 0.0, 1.0 - (s - 1)))
    return np.sign(x) * sigma * blend, slope


class _TransmissionOperator:
    """Assembled ``E`` with interface and boundary rows for one grid.

    Unknown ordering: ``[minus (n+1 nodes), plus (n+1 nodes)]``. Row roles:
    minus node 0 and plus node n are Dirichlet rows, minus node n enforces
    ``[V]``, plus node 0 enforces ``[V']``; every other row is an ODE row.
    """

    def __init__(self, grid, a, sigma=None, reaction=-0.5):
        self.grid = grid
        n1 = grid.size
        self.n1 = n1
        self.size = 2 * n1
        am, ap = _coefficient_samples(a, grid)
        bm, self.slope_m = _cutoff(grid.minus, sigma)
        bp, self.slope_p = _cutoff(grid.plus, sigma)
        d1, d2 = grid.d1, grid.d2
        Em = sp.diags(am) @ d2 + sp.diags(0.5 * bm) @ d1 + reaction * sp.identity(n1)
        Ep = sp.diags(ap) @ d2 + sp.diags(0.5 * bp) @ d1 + reaction * sp.identity(n1)
        ode = np.ones(self.size, dtype=bool)
        self.dirichlet_rows = (0, self.size - 1)
        self.jump_row = n1 - 1
        self.flux_row = n1
        ode[[0, n1 - 1, n1, self.size - 1]] = False
        self.ode_rows = ode
        E = sp.block_diag([Em, Ep], format="lil")
        for row in (0, n1 - 1, n1, self.size - 1):
            E.rows[row] = []
            E.data[row] = []
        E[0, 0] = 1.0
        E[self.size - 1, self.size - 1] = 1.0
        E[n1 - 1, n1 - 1] = -1.0
        E[n1 - 1, n1] = 1.0
        im, wm = endpoint_weights(n1, grid.h, 1, at_start=False)
        ip, wp = endpoint_weights(n1, grid.h, 1, at_start=True)
        for i, w in zip(im, wm):
            E[n1, i] = -w
        for i, w in zip(ip, wp):
            E[n1, n1 + i] += w
        self.matrix = E.tocsc()
        self.selector = sp.diags(ode.astype(float))

    def rhs(self, f_values, g1, g2):
        """Right-hand side for side-stacked ``f`` of shape (size[, d])."""
        b = np.where(self.ode_rows.reshape((-1,) + (1,) * (f_values.ndim - 1)), f_values, 0.0)
        b[self.jump_row] = g1
        b[self.flux_row] = g2
        return b


def _stack(profile, grid, dim):
    if profile is None:
        shape = (2 * grid.size,) if dim is None else (2 * grid.size, dim)
        return np.zeros(shape)
    return profile.values


def _split(values, grid):
    return TwoSidedProfile(grid, values[: grid.size], values[grid.size :])


def _check_decay(f, tol=1e-8):
    if f is None:
        return
    scale = f.max_abs()
    if scale == 0:
        return
    edge = max(np.abs(f.minus[0]).max(), np.abs(f.plus[-1]).max())
    if edge > tol * scale:
        raise ValueError(
            f"right-hand side does not decay: |f(+-X_max)| = {edge:.3e} "
            f"exceeds {tol:g} * max|f|"
        )


def _check_boundary(V, tol=1e-6):
    scale = V.max_abs()
    if scale == 0:
        return
    k = max(2, V.grid.size // 40)
    edge = max(np.abs(V.minus[1:k]).max(), np.abs(V.plus[-k:-1]).max())
    if edge > tol * scale:
        raise BoundaryLeakError(
            f"solution near +-X_max is {edge:.3e} (> {tol:g} * max|V|); increase X_max"
        )


def lift_jumps(g1, g2, grid, a=1.0, flux=False):
    """Exponentially decaying profile W with ``[W] = g1`` and ``[W'] = g2``.

    ``W = sign(X) (g1/2)(2 e^{-|X|} - e^{-2|X|}) + (g2/2)(e^{-|X|} - e^{-2|X|})``.
    With ``flux=True`` the second datum is read as the jump of ``a W'`` and
    divided by ``a``. Vector data gives a vector profile.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float) / (float(a) if flux else 1.0)
    g1, g2 = np.broadcast_arrays(g1, g2)

    def side(X, s):
        ax = np.abs(X)
        e1, e2 = np.exp(-ax), np.exp(-2.0 * ax)
        odd = s * 0.5 * (2.0 * e1 - e2)
        even = 0.5 * (e1 - e2)
        return np.multiply.outer(odd, g1) + np.multiply.outer(even, g2)

    return TwoSidedProfile.from_function(grid, side)


def solve_elliptic(problem, grid, sigma=None, check_boundary=True, reaction=-0.5):
    """Solve the truncated transmission problem ``E V = f`` directly.

    ``reaction`` is the zeroth-order coefficient (``-1/2`` for E).

    The jumps enter as two coupling rows at the doubled interface node, so
    no explicit lifting is needed; :func:`lift_jumps` is the equivalent
    homogenization used by :func:`energy_identity`.
    """
    c = problem.coefficient_floor(grid)
    if not c > 0:
        raise ValueError(f"coefficient a must be bounded below by c > 0 (inf a = {c})")
    _check_decay(problem.f)
    op = _TransmissionOperator(grid, problem.a, sigma, reaction)
    dim = problem.dim()
    b = op.rhs(_stack(problem.f, grid, dim), problem.g1, problem.g2)
    try:
        lu = splu(op.matrix)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc), _safe_coercivity(problem, grid)) from exc
    V = _split(lu.solve(b), grid)
    if check_boundary:
        _check_boundary(V)
    return V


def elliptic_residual(V, a, f=None, sigma=None):
    """Pointwise ``E V - f`` at the ODE nodes (zero at constraint nodes)."""
    op = _TransmissionOperator(V.grid, a, sigma)
    r = op.matrix @ V.values - _stack(f, V.grid, V.dim)
    mask = op.ode_rows.reshape((-1,) + (1,) * (r.ndim - 1))
    return _split(np.where(mask, r, 0.0), V.grid)


def _integrate(profile):
    g = profile.grid
    return simpson(profile.minus, x=g.minus, axis=0) + simpson(profile.plus, x=g.plus, axis=0)


def energy_identity(problem, V, sigma=None):
    """Both sides of the energy balance of the transmission problem.

    Multiplying ``E V = f`` by V and integrating by parts on each side gives

        B(V, V) = -<f, V> - <a' V', V> + (a V' V)(0-) - (a V' V)(0+),

    with ``B(V, V) = int a |V'|^2 + 1/2 int (1 + chi'/2)|V|^2``, which is
    ``int a |V'|^2 + 3/4 int |V|^2`` without cutoff. The interface terms are
    what the lifted jump data contributes. Returns ``(B, rhs)``.
    """
    g = V.grid
    am, ap = _coefficient_samples(problem.a, g)
    a_prof = TwoSidedProfile(g, am, ap)
    dV = V.derivative(1)
    _, slope_m = _cutoff(g.minus, sigma)
    _, slope_p = _cutoff(g.plus, sigma)
    weight = TwoSidedProfile(g, 0.5 * (1 + 0.5 * slope_m), 0.5 * (1 + 0.5 * slope_p))

    def dot(p, q):
        pm, pp = p.minus, p.plus
        qm, qp = q.minus, q.plus
        if pm.ndim == 2:
            return TwoSidedProfile(g, np.sum(pm * qm, axis=1), np.sum(pp * qp, axis=1))
        return TwoSidedProfile(g, pm * qm, pp * qp)

    grad2 = dot(dV, dV)
    B = _integrate(TwoSidedProfile(g, am * grad2.minus, ap * grad2.plus)) + _integrate(
        TwoSidedProfile(g, weight.minus * dot(V, V).minus, weight.plus * dot(V, V).plus)
    )
    rhs = 0.0
    if problem.f is not None:
        rhs -= _integrate(dot(problem.f, V))
    da = a_prof.derivative(1)
    vdv = dot(dV, V)
    rhs -= _integrate(TwoSidedProfile(g, da.minus * vdv.minus, da.plus * vdv.plus))
    dm, dp = V.one_sided_derivatives(1)
    rhs += am[-1] * float(np.sum(dm * V.minus[-1])) - ap[0] * float(np.sum(dp * V.plus[0]))
    return float(B), float(rhs)


def discrete_coercivity(problem, V, sigma=None):
    """Ratio of the equation-side energy to ``c ||V'||^2 + 3/4 ||V||^2``.

    The numerator is the right-hand side of :func:`energy_identity`, i.e.
    the value of the bilinear form obtained through the discrete equation,
    and ``c = inf a``. Coercivity of the discrete problem means the ratio
    is at least 1 (it equals 1 up to quadrature error for constant a).
    """
    _, rhs = energy_identity(problem, V, sigma)
    c = problem.coefficient_floor(V.grid)
    dV = V.derivative(1)
    denom = c * _l2(dV) ** 2 + 0.75 * _l2(V) ** 2
    if denom == 0:
        return float("inf")
    return float(rhs / denom)


def _safe_coercivity(problem, grid):
    """Continuous coercivity floor ``min(inf a, 3/4)`` for error reports."""
    try:
        return min(problem.coefficient_floor(grid), 0.75)
    except Exception:  # diagnostics only
        return float("nan")


def graded_times(T, K):
    """``t_k = T (k/K)^2`` for ``k = 0..K``: refined near the degeneracy."""
    return T * (np.arange(K + 1) / K) ** 2


@dataclass(frozen=True, eq=False)
class EvolutionCoefficients:
    """Coefficient tracks of ``L V = E V - t (D + A) V`` along one label.

    Parameters
    ----------
    times : array, shape (K+1,)
        ``t_0 = 0 < t_1 < ... < t_K``.
    a : array, shape (K+1,)
        Diffusion coefficient per time.
    A : array, shape (K+1, d, d)
        Reaction matrix per time (zeros allowed).
    g : array, shape (K+1, d)
        Jump of ``dV/dX`` per time. The value jump is zero.
    f : list of TwoSidedProfile or None
        Source per time; ``None`` means zero.
    """

    times: np.ndarray
    a: np.ndarray
    A: np.ndarray
    g: np.ndarray
    f: list | None = None

    def __post_init__(self):
        t = np.asarray(self.times, float)
        if t.ndim != 1 or t.size < 2 or t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        a = np.broadcast_to(np.asarray(self.a, float), t.shape).copy()
        if not np.all(a > 0):
            raise ValueError("a must be bounded below by a positive constant")
        A = np.asarray(self.A, float)
        g = np.asarray(self.g, float)
        if A.ndim == 2:
            A = np.broadcast_to(A, (t.size,) + A.shape).copy()
        if g.ndim == 1:
            g = np.broadcast_to(g, (t.size, g.size)).copy()
        d = g.shape[1]
        if A.shape != (t.size, d, d) or g.shape != (t.size, d):
            raise ValueError("A and g shapes must be (K+1, d, d) and (K+1, d)")
        if self.f is not None and len(self.f) != t.size:
            raise ValueError("f must have one entry per time sample")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "g", g)

    @property
    def dim(self):
        return self.g.shape[1]

    def source(self, k, grid):
        if self.f is None or self.f[k] is None:
            return TwoSidedProfile.zeros(grid, self.dim)
        return self.f[k]


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    times: np.ndarray
    profiles: list
    sqrt_t_norms: np.ndarray = field(default=None)

    def max_norm_jump(self):
        """Largest step-to-step change of ``sqrt(t) ||V(t)||_{L2}``."""
        return float(np.max(np.abs(np.diff(self.sqrt_t_norms)))) if len(self.times) > 1 else 0.0


def _l2(profile):
    v = profile.values
    sq = v * v if v.ndim == 1 else np.sum(v * v, axis=1)
    return float(np.sqrt(_integrate(_split(sq, profile.grid))))


def solve_evolution(coeffs, grid):
    """Implicit time stepping of ``t dV/dt = E V - t A V - f``.

    ``V(0)`` is the elliptic trace (the equation at ``t = 0``); no other
    initial condition is imposed. For ``k >= 1``,

        (E - t_k A) V_k - t_k (V_k - V_{k-1}) / dt_k = f_k

    with the transmission rows at each step. A step is rejected when the
    reaction block ``1/2 + t/dt + t A_ii`` no longer dominates the
    off-diagonal coupling ``t sum_j |A_ij|`` of its row.
    """
    d = coeffs.dim
    K = coeffs.times.size - 1
    zeros = np.zeros(d)
    V0 = solve_elliptic(
        EllipticTransmissionProblem(coeffs.a[0], coeffs.source(0, grid), zeros, coeffs.g[0]),
        grid,
    )
    profiles = [V0]
    norms = [0.0]
    Id = sp.identity(d, format="csc")
    for k in range(1, K + 1):
        t = coeffs.times[k]
        dt = t - coeffs.times[k - 1]
        A = coeffs.A[k]
        diag = 0.5 + t / dt + t * np.diag(A)
        off = t * (np.sum(np.abs(A), axis=1) - np.abs(np.diag(A)))
        if np.any(diag < off):
            raise StepRejectedError(
                f"step {k} loses diagonal dominance (diag {diag.min():.3e} < off {off.max():.3e})",
                k,
            )
        op = _TransmissionOperator(grid, coeffs.a[k])
        S = op.selector
        M = sp.kron(Id, op.matrix) - t * sp.kron(sp.csc_matrix(A), S) - (t / dt) * sp.kron(Id, S)
        f = coeffs.source(k, grid).values
        f = f.reshape(op.size, d) if f.ndim == 2 else f[:, None]
        rhs = f - (t / dt) * profiles[-1].values.reshape(op.size, d)
        rhs = np.where(op.ode_rows[:, None], rhs, 0.0)
        rhs[op.flux_row] = coeffs.g[k]
        b = rhs.T.reshape(-1)
        sol = splu(M.tocsc()).solve(b).reshape(d, op.size).T
        Vk = _split(sol, grid)
        profiles.append(Vk)
        norms.append(np.sqrt(t) * _l2(Vk))
    return EvolutionResult(coeffs.times, profiles, np.array(norms))


def reaction_matrix(grad_v0, n, a):
    """``A = (I - 2 n n^T / a) G^T`` with ``G[i, j] = d_i v0_j``.

    Then ``A V = V.grad v0 - 2 ((V.grad v0).n / a) n``.
    """
    G = np.asarray(grad_v0, float)
    n = np.asarray(n, float)
    P = np.eye(n.size) - 2.0 * np.outer(n, n) / a
    return P @ G.T


def _perp(n):
    return np.array([-n[1], n[0]])


def jump_from_vorticity(omega_plus, omega_minus, n, a):
    """Transmission data ``([V], [V'])`` from the two vorticity traces.

    In 2D, ``n ^ w`` for a scalar ``w`` means ``w n_perp`` with
    ``n_perp = (-n2, n1)``; this orientation makes the total vorticity
    profile continuous. Returns ``(zeros(2), -(w+ - w-) n_perp / a)``.
    """
    n = np.asarray(n, float)
    norm = np.linalg.norm(n)
    if not norm > 1e-12:
        raise ValueError("degenerate normal: |n| = 0")
    if not a > 0:
        raise ValueError("a must be positive")
    g2 = -(float(omega_plus) - float(omega_minus)) * _perp(n) / a
    return np.zeros(2), g2


def vorticity_profile(V, n, omega_plus, omega_minus):
    """Scalar ``Omega = w+- + n1 dV2/dX - n2 dV1/dX`` on each side."""
    n = np.asarray(n, float)
    dV = V.derivative(1)
    dm, dp = V.one_sided_derivatives(1)
    wedge_m = n[0] * dV.minus[:, 1] - n[1] * dV.minus[:, 0]
    wedge_p = n[0] * dV.plus[:, 1] - n[1] * dV.plus[:, 0]
    # interface nodes take the one-sided stencils explicitly
    wedge_m[-1] = n[0] * dm[1] - n[1] * dm[0]
    wedge_p[0] = n[0] * dp[1] - n[1] * dp[0]
    return TwoSidedProfile(V.grid, omega_minus + wedge_m, omega_plus + wedge_p)


def pressure_profile(V, grad_v0, n, a):
    """Pressure layer ``P(X) = int_{+-X_max}^{X} -2 q(s) ds`` per side.

    ``q = ((V.grad v0).n) / a``, so that ``dP/dX = -2 q`` and ``P`` vanishes
    at the far ends.
    """
    G = np.asarray(grad_v0, float)
    n = np.asarray(n, float)
    g = V.grid
    qm = V.minus @ G @ n / a
    qp = V.plus @ G @ n / a
    Im = CubicSpline(g.minus, -2.0 * qm).antiderivative()
    Ip = CubicSpline(g.plus, -2.0 * qp).antiderivative()
    Pm = Im(g.minus) - Im(g.minus[0])
    Pp = Ip(g.plus) - Ip(g.plus[-1])
    return TwoSidedProfile(g, Pm, Pp)


def orthogonality_check(V, n):
    """``max |V.n| / (|n| max|V|)`` over all nodes (0 for V = 0)."""
    n = np.asarray(n, float)
    vals = V.values
    scale = np.abs(vals).max()
    if scale == 0:
        return 0.0
    vals = vals / scale
    return float(np.abs(vals @ n).max() / (np.linalg.norm(n) * np.max(np.linalg.norm(vals, axis=1))))


def fuchsian_track(times, start=None):
    """Apply the implicit time step to the X-independent law ``t dV/dt = -V/2``.

    With ``start=None`` the value at ``times[0] = 0`` is the trace of the
    equation there, ``-V/2 = 0``; otherwise ``start`` is imposed at
    ``times[0]`` (which may then be positive). Exact solutions are
    ``C / sqrt(t)``, so only the trace selects the bounded branch.
    """
    times = np.asarray(times, float)
    if start is None:
        if times[0] != 0:
            raise ValueError("the trace start needs times[0] = 0")
        v = 0.0
    else:
        v = float(start)
    out = [v]
    for k in range(1, times.size):
        t, dt = times[k], times[k] - times[k - 1]
        v = (t / dt) * v / (0.5 + t / dt)
        out.append(v)
    return np.array(out)
