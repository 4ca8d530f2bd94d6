import numpy as np
import pytest
import sympy as sy
from hypothesis import given, strategies as st
from scipy.special import erfc

from vxlayer.analysis import leading_layer_profile
from vxlayer.baby_model import erf_layer_tilde
from vxlayer.profile import (
    BoundaryLeakError,
    EllipticTransmissionProblem,
    EvolutionCoefficients,
    ProfileGrid,
    StepRejectedError,
    TwoSidedProfile,
    discrete_coercivity,
    elliptic_residual,
    energy_identity,
    fuchsian_track,
    graded_times,
    jump_from_vorticity,
    lift_jumps,
    orthogonality_check,
    pressure_profile,
    reaction_matrix,
    solve_elliptic,
    solve_evolution,
    vorticity_profile,
)


def v2(X):
    return np.exp(-X * X / 4) - np.sqrt(np.pi) * X / 2 * erfc(X / 2)


def v2_profile(grid):
    # [V] = 0, [V'] = 1
    s = np.sqrt(np.pi)
    return TwoSidedProfile(grid, -v2(-grid.minus) / s, -v2(grid.plus) / s)


UNIT_FLUX = EllipticTransmissionProblem(1.0, None, 0.0, 1.0)


class TestV2Oracle:
    def test_symbolic_solution(self):
        X = sy.symbols("X", real=True)
        V = sy.exp(-X**2 / 4) - sy.sqrt(sy.pi) * X / 2 * sy.erfc(X / 2)
        residual = sy.diff(V, X, 2) + X / 2 * sy.diff(V, X) - V / 2
        assert sy.simplify(residual) == 0
        assert V.subs(X, 0) == 1
        assert sy.simplify(sy.diff(V, X).subs(X, 0) + sy.sqrt(sy.pi) / 2) == 0
        assert sy.limit(V, X, sy.oo) == 0

    def test_oracle_jumps(self):
        g = ProfileGrid(12.0, 2048)
        ex = v2_profile(g)
        assert ex.jump() == pytest.approx(0.0, abs=1e-15)
        assert ex.derivative_jump() == pytest.approx(1.0, abs=1e-9)


class TestElliptic:
    def test_matches_v2(self):
        g = ProfileGrid(12.0, 2048)
        V = solve_elliptic(UNIT_FLUX, g)
        ex = v2_profile(g)
        assert (V - ex).max_abs() / ex.max_abs() <= 1e-5

    def test_convergence_order(self):
        errs = []
        for n in (128, 256, 512):
            g = ProfileGrid(12.0, n)
            ex = v2_profile(g)
            errs.append((solve_elliptic(UNIT_FLUX, g) - ex).max_abs() / ex.max_abs())
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert orders.min() >= 1.9

    def test_residual_small(self):
        g = ProfileGrid(12.0, 1024)
        V = solve_elliptic(UNIT_FLUX, g)
        assert elliptic_residual(V, 1.0).max_abs() < 1e-9

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_jump_conditions(self, g1, g2):
        g = ProfileGrid(12.0, 256)
        V = solve_elliptic(EllipticTransmissionProblem(1.0, None, g1, g2), g)
        assert V.jump() == pytest.approx(g1, abs=1e-12)
        assert V.derivative_jump() == pytest.approx(g2, abs=1e-10)

    def test_linear_in_data(self):
        g = ProfileGrid(12.0, 256)
        a = solve_elliptic(EllipticTransmissionProblem(1.0, None, 1.0, 0.0), g)
        b = solve_elliptic(EllipticTransmissionProblem(1.0, None, 0.0, 1.0), g)
        c = solve_elliptic(EllipticTransmissionProblem(1.0, None, 2.0, -3.0), g)
        assert (c - (2 * a - 3 * b)).max_abs() < 1e-12

    def test_manufactured_variable_coefficient(self):
        # V = c_side exp(-X^2/2), a = 1 + exp(-X^2)/2
        def exact(X, s):
            return (1.0 if s > 0 else -0.5) * np.exp(-X * X / 2)

        def source(X, s):
            c = 1.0 if s > 0 else -0.5
            e = np.exp(-X * X / 2)
            a = 1 + 0.5 * np.exp(-X * X)
            return c * (a * (X * X - 1) * e - 0.5 * X * X * e - 0.5 * e)

        errs = []
        for n in (256, 512):
            g = ProfileGrid(12.0, n)
            a = TwoSidedProfile.from_function(g, lambda X, s: 1 + 0.5 * np.exp(-X * X))
            f = TwoSidedProfile.from_function(g, source)
            V = solve_elliptic(EllipticTransmissionProblem(a, f, 1.5, 0.0), g)
            errs.append((V - TwoSidedProfile.from_function(g, exact)).max_abs())
        assert errs[1] < 1e-8
        assert np.log2(errs[0] / errs[1]) >= 1.9

    def test_vector_problem(self):
        g = ProfileGrid(12.0, 256)
        V = solve_elliptic(EllipticTransmissionProblem(1.0, None, np.zeros(2), np.array([1.0, -2.0])), g)
        ex = v2_profile(g)
        assert np.abs(V.plus[:, 0] - ex.plus).max() < 1e-6
        assert np.abs(V.plus[:, 1] + 2 * ex.plus).max() < 1e-6

    def test_rejects_nonpositive_coefficient(self):
        g = ProfileGrid(12.0, 128)
        with pytest.raises(ValueError):
            solve_elliptic(EllipticTransmissionProblem(0.0, None, 0.0, 1.0), g)
        a = TwoSidedProfile.from_function(g, lambda X, s: np.where(np.abs(X) < 1, -0.1, 1.0))
        with pytest.raises(ValueError):
            solve_elliptic(EllipticTransmissionProblem(a, None, 0.0, 1.0), g)

    def test_rejects_nondecaying_source(self):
        g = ProfileGrid(12.0, 128)
        f = TwoSidedProfile.from_function(g, lambda X, s: np.ones_like(X))
        with pytest.raises(ValueError):
            solve_elliptic(EllipticTransmissionProblem(1.0, f), g)

    def test_short_domain_leaks(self):
        with pytest.raises(BoundaryLeakError):
            solve_elliptic(UNIT_FLUX, ProfileGrid(2.0, 128))


class TestEnergy:
    def test_identity_and_coercivity(self):
        g = ProfileGrid(12.0, 2048)
        V = solve_elliptic(UNIT_FLUX, g)
        B, rhs = energy_identity(UNIT_FLUX, V)
        assert abs(B - rhs) / B < 1e-6
        assert discrete_coercivity(UNIT_FLUX, V) >= 1 - 1e-6

    def test_identity_closed_form(self):
        # B(V2) for V = -V2(|X|)/sqrt(pi) equals the interface term -V(0)[V'] = 1/sqrt(pi)
        g = ProfileGrid(12.0, 2048)
        B, rhs = energy_identity(UNIT_FLUX, v2_profile(g))
        assert rhs == pytest.approx(1 / np.sqrt(np.pi), rel=1e-8)
        assert B == pytest.approx(rhs, rel=1e-6)

    @given(st.floats(0.5, 3.0), st.floats(-2, 2), st.floats(-2, 2))
    def test_coercivity_property(self, a, g1, g2):
        if abs(g1) + abs(g2) < 1e-3:
            return
        g = ProfileGrid(16.0, 512)
        prob = EllipticTransmissionProblem(a, None, g1, g2)
        V = solve_elliptic(prob, g)
        assert discrete_coercivity(prob, V) >= 1 - 1e-4


class TestLifting:
    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_jumps_reproduced(self, g1, g2):
        g = ProfileGrid(12.0, 2048)
        W = lift_jumps(g1, g2, g)
        assert W.jump() == pytest.approx(g1, abs=1e-13)
        assert W.derivative_jump() == pytest.approx(g2, abs=1e-7 * (1 + abs(g1) + abs(g2)))
        assert max(abs(W.minus[0]), abs(W.plus[-1])) < 1e-4 * (abs(g1) + abs(g2) + 1)

    def test_flux_form(self):
        g = ProfileGrid(12.0, 2048)
        W = lift_jumps(0.0, 3.0, g, a=2.0, flux=True)
        assert W.derivative_jump() == pytest.approx(1.5, abs=1e-7)


class TestEvolution:
    def test_static_fixed_point(self):
        g = ProfileGrid(12.0, 256)
        times = graded_times(1.0, 100)
        _, g2 = jump_from_vorticity(1.0, 0.0, [1.0, 0.0], 1.0)
        res = solve_evolution(EvolutionCoefficients(times, 1.0, np.zeros((2, 2)), g2), g)
        drift = max((p - res.profiles[0]).max_abs() for p in res.profiles)
        assert drift <= 1e-8
        assert res.sqrt_t_norms[0] == 0.0

    def test_trace_is_elliptic_solution(self):
        g = ProfileGrid(12.0, 256)
        res = solve_evolution(EvolutionCoefficients([0.0, 0.5, 1.0], 1.0, np.zeros((1, 1)), [1.0]), g)
        ex = solve_elliptic(EllipticTransmissionProblem(1.0, None, np.zeros(1), np.ones(1)), g)
        assert (res.profiles[0] - ex).max_abs() < 1e-14

    def test_fuchsian_trace_selects_bounded_branch(self):
        times = graded_times(1.0, 100)
        assert np.abs(fuchsian_track(times)).max() <= 1e-6

    def test_fuchsian_other_branch(self):
        # imposed data at t0 > 0 follows C / sqrt(t)
        times = np.linspace(0.01, 1.0, 2001)
        v = fuchsian_track(times, start=10.0)
        # first-order stepping
        assert v[-1] == pytest.approx(1.0, rel=5e-2)
        assert v[-1] > 0.5
        with pytest.raises(ValueError):
            fuchsian_track(np.array([0.5, 1.0]))

    def test_strong_reaction_rejected(self):
        g = ProfileGrid(12.0, 128)
        A = np.array([[0.0, 1e4], [1e4, 0.0]])
        with pytest.raises(StepRejectedError) as info:
            solve_evolution(EvolutionCoefficients(graded_times(1.0, 4), 1.0, A, [0.0, 1.0]), g)
        assert info.value.step_index >= 1

    def test_coefficient_validation(self):
        with pytest.raises(ValueError):
            EvolutionCoefficients([0.1, 0.5], 1.0, np.zeros((1, 1)), [1.0])
        with pytest.raises(ValueError):
            EvolutionCoefficients([0.0, 0.5], -1.0, np.zeros((1, 1)), [1.0])

    def test_graded_times(self):
        t = graded_times(2.0, 4)
        assert t.tolist() == [0.0, 0.125, 0.5, 1.125, 2.0]


class TestVorticityLayer:
    @given(st.floats(0, 2 * np.pi), st.floats(-3, 3), st.floats(-3, 3))
    def test_total_vorticity_continuous(self, theta, wp, wm):
        g = ProfileGrid(12.0, 256)
        n = np.array([np.cos(theta), np.sin(theta)])
        g1, g2 = jump_from_vorticity(wp, wm, n, 1.0)
        V = solve_elliptic(EllipticTransmissionProblem(1.0, None, g1, g2), g, check_boundary=False)
        Om = vorticity_profile(V, n, wp, wm)
        assert Om.jump() == pytest.approx(0.0, abs=1e-7 * (1 + abs(wp - wm)))
        assert Om.minus[0] == pytest.approx(wm, abs=1e-6)
        assert Om.plus[-1] == pytest.approx(wp, abs=1e-6)
        assert orthogonality_check(V, n) <= 1e-7

    def test_leading_layer_is_erfc(self):
        g = ProfileGrid(12.0, 2048)
        lay = leading_layer_profile(1.5, -0.5, g)
        assert (lay - erf_layer_tilde(g, -0.5, 1.5)).max_abs() < 1e-6

    def test_degenerate_normal(self):
        with pytest.raises(ValueError):
            jump_from_vorticity(1.0, 0.0, [0.0, 0.0], 1.0)

    def test_reaction_matrix(self):
        G = np.array([[0.0, 1.0], [-1.0, 0.0]])
        n = np.array([1.0, 0.0])
        A = reaction_matrix(G, n, 1.0)
        V = np.array([0.3, 0.7])
        w = V @ G
        assert np.allclose(A @ V, w - 2 * (w @ n) * n)

    def test_pressure(self):
        g = ProfileGrid(12.0, 512)
        n = np.array([1.0, 0.0])
        G = np.array([[0.2, 0.5], [0.3, -0.2]])
        _, g2 = jump_from_vorticity(1.0, 0.0, n, 1.0)
        V = solve_elliptic(EllipticTransmissionProblem(1.0, None, np.zeros(2), g2), g)
        P = pressure_profile(V, G, n, 1.0)
        assert P.minus[0] == 0.0 and P.plus[-1] == 0.0
        q = TwoSidedProfile(g, V.minus @ G @ n, V.plus @ G @ n)
        dP = P.derivative(1)
        assert np.abs(dP.plus[5:-5] + 2 * q.plus[5:-5]).max() < 1e-6


def test_csv_round_trip(tmp_path):
    g = ProfileGrid(6.0, 64)
    V = solve_elliptic(EllipticTransmissionProblem(1.0, None, np.zeros(2), [1.0, 2.0]), g, check_boundary=False)
    path = tmp_path / "v.csv"
    V.to_csv(path, header=["test"])
    back = TwoSidedProfile.from_csv(path)
    assert back.grid == g
    assert np.array_equal(back.minus, V.minus) and np.array_equal(back.plus, V.plus)


def test_profile_evaluation_sides():
    g = ProfileGrid(4.0, 64)
    p = TwoSidedProfile.from_function(g, lambda X, s: s + 0 * X)
    assert p(np.array([-1.0, 0.0, 1.0, 5.0])).tolist() == [-1.0, 1.0, 1.0, 0.0]


def test_profile_validation():
    g = ProfileGrid(4.0, 64)
    with pytest.raises(ValueError):
        TwoSidedProfile(g, np.zeros(65), np.zeros(64))
    with pytest.raises(ValueError):
        ProfileGrid(4.0, 32)


class TestSmallExamples:
    def test_zero_lift(self):
        assert lift_jumps(0.0, 0.0, ProfileGrid(6.0, 64)).max_abs() == 0.0

    def test_zero_data_zero_solution(self):
        g = ProfileGrid(12.0, 128)
        assert solve_elliptic(EllipticTransmissionProblem(1.0), g).max_abs() == 0.0

    def test_bit_identical(self):
        g = ProfileGrid(12.0, 512)
        a = solve_elliptic(UNIT_FLUX, g)
        b = solve_elliptic(UNIT_FLUX, g)
        assert np.array_equal(a.values, b.values)

    def test_residual_is_linear(self):
        g = ProfileGrid(12.0, 256)
        rng = np.random.default_rng(4)
        V = TwoSidedProfile(g, rng.standard_normal(g.size), rng.standard_normal(g.size))
        r1 = elliptic_residual(V, 1.0)
        r2 = elliptic_residual(2.0 * V, 1.0)
        assert np.abs(r2.values - 2 * r1.values).max() <= 1e-12 * np.abs(r1.values).max()

    def test_jump_examples(self):
        n = np.array([0.6, 0.8])
        assert np.all(jump_from_vorticity(0.7, 0.7, n, 1.0)[1] == 0)
        _, g1 = jump_from_vorticity(1.0, 0.0, n, 1.0)
        _, g2 = jump_from_vorticity(1.0, 0.0, n, 2.0)
        assert np.linalg.norm(g1) == pytest.approx(1.0)
        assert g1 @ n == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(g2, 0.5 * g1)

    def test_orthogonality_not_vacuous(self):
        g = ProfileGrid(12.0, 256)
        n = np.array([1.0, 0.0])
        delta = 0.2
        data = np.array([delta, 1.0])
        V = solve_elliptic(EllipticTransmissionProblem(1.0, None, np.zeros(2), data), g)
        assert orthogonality_check(V, n) >= delta / 2

    def test_pressure_zero_cases(self):
        g = ProfileGrid(12.0, 128)
        n = np.array([1.0, 0.0])
        assert pressure_profile(TwoSidedProfile.zeros(g, 2), np.eye(2), n, 1.0).max_abs() == 0.0
        V = solve_elliptic(EllipticTransmissionProblem(1.0, None, np.zeros(2), [0.0, 1.0]), g)
        assert pressure_profile(V, np.zeros((2, 2)), n, 1.0).max_abs() == 0.0


class TestEvolutionStructure:
    def test_orthogonality_preserved(self):
        # time-dependent a and tangential data; A leaves the tangent line invariant
        g = ProfileGrid(12.0, 256)
        n = np.array([1.0, 0.0])
        times = graded_times(1.0, 40)
        a = 1.0 + 0.5 * times
        A = np.array([[0.3, 0.0], [0.0, 0.1]])
        gdata = np.array([[0.0, 1.0 + t] for t in times])
        res = solve_evolution(EvolutionCoefficients(times, a, A, gdata), g)
        assert max(orthogonality_check(p, n) for p in res.profiles) <= 1e-7

    def test_damping_reaction_lowers_norm(self):
        g = ProfileGrid(12.0, 256)
        times = graded_times(1.0, 40)
        static = solve_evolution(EvolutionCoefficients(times, 1.0, np.zeros((1, 1)), [1.0]), g)
        damped = solve_evolution(EvolutionCoefficients(times, 1.0, np.eye(1), [1.0]), g)
        assert np.all(damped.sqrt_t_norms <= static.sqrt_t_norms + 1e-14)
        assert damped.sqrt_t_norms[-1] < static.sqrt_t_norms[-1]

    def test_norm_track_continuous(self):
        g = ProfileGrid(12.0, 256)
        times = graded_times(1.0, 100)
        res = solve_evolution(EvolutionCoefficients(times, 1.0, 0.5 * np.eye(1), [1.0]), g)
        # sqrt(t)||V|| moves by at most O(dt) per step
        steps = np.abs(np.diff(res.sqrt_t_norms))
        assert res.max_norm_jump() == steps.max()
        assert steps.max() <= 10 * np.diff(np.sqrt(times)).max()
