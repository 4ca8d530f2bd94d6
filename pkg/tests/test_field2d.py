import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import j1

from vxlayer.field2d import (
    Grid2D,
    PatchSpec,
    ScalarField2D,
    band_limited_patch_vorticity,
    biot_savart,
    curl,
    divergence,
    laplacian,
    level_function,
    load_snapshot,
    make_patch_vorticity,
    save_snapshot,
    signed_distance,
    spectral_derivative,
)


def random_field(grid, seed, band=None):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((grid.n, grid.n))
    if band is not None:
        k1, k2 = grid.wavenumbers
        hat = np.fft.rfft2(vals)
        hat[np.hypot(k1, k2) > band] = 0
        vals = np.fft.irfft2(hat, s=(grid.n, grid.n))
    return ScalarField2D(grid, vals)


class TestGrid:
    def test_power_of_two(self):
        with pytest.raises(ValueError):
            Grid2D(48)
        with pytest.raises(ValueError):
            Grid2D(8)
        with pytest.raises(ValueError):
            Grid2D(32, -1.0)

    def test_coords_and_spacing(self):
        g = Grid2D(32, 4.0)
        assert g.spacing == pytest.approx(0.125)
        assert g.coords[0] == 0 and g.coords[-1] == pytest.approx(4.0 - 0.125)

    def test_field_rejects_nonfinite(self):
        g = Grid2D(16)
        bad = np.zeros((16, 16))
        bad[3, 3] = np.nan
        with pytest.raises(ValueError):
            ScalarField2D(g, bad)
        with pytest.raises(ValueError):
            ScalarField2D(g, np.zeros((16, 8)))


class TestPatch:
    def test_sharp_disc_values(self):
        g = Grid2D(64, 8.0)
        w = make_patch_vorticity(PatchSpec("disc", (1.0,)), g)
        assert w.values[32, 32] == 1.0
        assert w.values[0, 0] == 0.0

    def test_mollified_midpoint(self):
        spec = PatchSpec("disc", (1.0,), epsilon=0.3)
        d = signed_distance(spec, np.array([1.0]), np.array([0.0]))
        assert d[0] == 0.0
        g = Grid2D(64, 8.0)
        # node (4 + 1, 4) sits exactly on r = 1
        w = make_patch_vorticity(spec, g)
        assert w.values[40, 32] == 0.5

    def test_annulus_samples(self):
        g = Grid2D(64, 8.0)
        spec = PatchSpec("annulus", (0.5, 1.0))
        w = make_patch_vorticity(spec, g)
        # spacing 1/8: r = 0.25, 0.75, 1.25 are nodes 2, 6, 10 from the centre
        assert [w.values[32 + k, 32] for k in (2, 6, 10)] == [0.0, 1.0, 0.0]

    def test_two_values_off_interface(self):
        g = Grid2D(64, 8.0)
        w = make_patch_vorticity(PatchSpec("disc", (1.1,), omega_in=2.5, omega_out=-1.0), g)
        assert set(np.unique(w.values)) <= {2.5, -1.0, 0.75}

    def test_clearance_and_epsilon_errors(self):
        g = Grid2D(64, 2 * np.pi)
        with pytest.raises(ValueError):
            make_patch_vorticity(PatchSpec("disc", (3.2,)), g)
        with pytest.raises(ValueError):
            make_patch_vorticity(PatchSpec("disc", (1.0,), epsilon=0.5 * g.spacing), g)
        with pytest.raises(ValueError):
            PatchSpec("annulus", (1.0, 0.5))
        with pytest.raises(ValueError):
            PatchSpec("ellipse", (1.0,))

    def test_level_function_disc(self):
        g = Grid2D(64, 8.0)
        phi = level_function(PatchSpec("disc", (1.0,)), g)
        assert phi.values[32, 32] == pytest.approx(1.0)
        assert phi.values[40, 32] == pytest.approx(0.0)
        assert phi.values[48, 32] == pytest.approx(-1.0)

    def test_level_function_eikonal_band(self):
        g = Grid2D(256, 2 * np.pi)
        for spec in (PatchSpec("disc", (1.0,)), PatchSpec("annulus", (0.6, 1.4))):
            phi = level_function(spec, g).values
            g1, g2 = np.gradient(phi, g.spacing)
            eta = 0.3 * spec.interface_separation
            band = np.abs(phi) < eta
            assert np.abs(np.hypot(g1, g2)[band] - 1.0).max() <= 10 * g.spacing

    def test_ellipse_zero_set(self):
        spec = PatchSpec("ellipse", (1.0, 0.5))
        theta = np.linspace(0, 2 * np.pi, 200)
        d = signed_distance(spec, np.cos(theta), 0.5 * np.sin(theta))
        assert np.abs(d).max() < 1e-12

    def test_ellipse_distance_oracle(self):
        # brute-force nearest point on a dense parametrization
        spec = PatchSpec("ellipse", (1.0, 0.5))
        rng = np.random.default_rng(1)
        pts = rng.uniform(-1.5, 1.5, size=(40, 2))
        s = np.linspace(0, 2 * np.pi, 200001)
        ex, ey = np.cos(s), 0.5 * np.sin(s)
        brute = np.array([np.hypot(ex - p[0], ey - p[1]).min() for p in pts])
        d = signed_distance(spec, pts[:, 0], pts[:, 1])
        assert np.allclose(np.abs(d), brute, atol=1e-9)
        inside = (pts[:, 0]) ** 2 + (pts[:, 1] / 0.5) ** 2 < 1
        assert np.all((d > 0) == inside)

    def test_band_limited_disc_coefficients(self):
        g = Grid2D(64, 8.0)
        spec = PatchSpec("disc", (1.0,))
        w = band_limited_patch_vorticity(spec, g)
        hat = np.fft.fft2(w.values) * g.cell_area()
        k = 2 * np.pi / g.length
        # mode (1, 0) with the centre phase removed
        phase = np.exp(1j * k * 4.0)
        assert (hat[1, 0] * phase).real == pytest.approx(2 * np.pi * j1(k) / k, rel=1e-12)
        assert w.mean * g.length**2 == pytest.approx(np.pi, rel=1e-12)

    def test_band_limited_requires_sharp(self):
        with pytest.raises(ValueError):
            band_limited_patch_vorticity(PatchSpec("disc", (1.0,), epsilon=0.2), Grid2D(64, 8.0))


class TestSpectral:
    def test_derivatives(self):
        g = Grid2D(64)
        x1, x2 = g.mesh()
        f = ScalarField2D(g, np.sin(x1))
        assert np.abs(spectral_derivative(f, 0).values - np.cos(x1)).max() < 1e-12
        assert np.abs(spectral_derivative(f, 1).values).max() < 1e-12
        lap = laplacian(ScalarField2D(g, np.sin(2 * x2))).values
        assert np.abs(lap + 4 * np.sin(2 * x2)).max() < 1e-11
        const = ScalarField2D(g, np.full((64, 64), 3.0))
        assert np.abs(spectral_derivative(const, 0).values).max() < 1e-14

    def test_biot_savart_single_mode(self):
        g = Grid2D(64)
        x1, _ = g.mesh()
        v = biot_savart(ScalarField2D(g, np.sin(x1)))
        assert np.abs(v.u.values).max() < 1e-13
        assert np.abs(v.v.values + np.cos(x1)).max() < 1e-13

    def test_biot_savart_zero(self):
        g = Grid2D(32)
        v = biot_savart(ScalarField2D(g, np.zeros((32, 32))))
        assert v.magnitude().max() == 0.0 and v.removed_mean == 0.0

    def test_mean_reported(self):
        g = Grid2D(32)
        x1, _ = g.mesh()
        v = biot_savart(ScalarField2D(g, 0.7 + np.cos(x1)))
        assert v.removed_mean == pytest.approx(0.7)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([16, 32, 64]))
    def test_divergence_free_and_curl(self, seed, n):
        g = Grid2D(n)
        w = random_field(g, seed)
        v = biot_savart(w)
        vmax = v.magnitude().max()
        assert np.abs(divergence(v).values).max() <= 1e-12 * vmax / g.spacing
        # odd-derivative symbols vanish on the Nyquist lines, so compare the
        # remaining modes only
        k1, k2 = g.wavenumbers
        keep = (np.abs(k1) < g.nyquist) & (np.abs(k2) < g.nyquist)

        def project(a):
            return np.fft.irfft2(np.fft.rfft2(a) * keep, s=(n, n))

        back = project(curl(v).values)
        target = project(w.values - w.mean)
        assert np.abs(back - target).max() <= 1e-10 * np.abs(target).max()

    @given(st.integers(0, 2**32 - 1))
    def test_curl_band_limited_exact(self, seed):
        g = Grid2D(32)
        w = random_field(g, seed, band=10.0)
        back = curl(biot_savart(w)).values
        assert np.abs(back - (w.values - w.mean)).max() <= 1e-10 * np.abs(w.values).max()


class TestSnapshot:
    def test_round_trip(self, tmp_path):
        g = Grid2D(16, 3.0)
        w = random_field(g, 3)
        path = tmp_path / "w.vxl"
        save_snapshot(path, w, {"nu": 0.001, "t": 0.5})
        back, meta = load_snapshot(path)
        assert back.grid == g
        assert np.array_equal(back.values, w.values)
        assert float(meta["nu"]) == 0.001

    def test_layout(self, tmp_path):
        g = Grid2D(16, 2.0)
        vals = np.arange(256.0).reshape(16, 16)
        path = tmp_path / "w.vxl"
        save_snapshot(path, ScalarField2D(g, vals))
        blob = path.read_bytes()
        assert blob[:4] == b"VXL1"
        assert np.frombuffer(blob[4:12], "<u4").tolist() == [16, 16]
        assert np.frombuffer(blob[12:20], "<f8")[0] == 2.0
        assert np.array_equal(np.frombuffer(blob[20:], "<f8"), vals.ravel())

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.vxl"
        path.write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(ValueError):
            load_snapshot(path)
