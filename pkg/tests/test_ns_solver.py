import numpy as np
import pytest

import lcstrack.ns_solver as ns
from lcstrack.errors import BlowUpError


def single_mode_state(n=64, nu=1e-3, k=(4, 3)):
    x = np.arange(n) * 2 * np.pi / n
    X, Y = np.meshgrid(x, x)
    w0 = np.cos(k[0] * X + k[1] * Y)
    return ns.SpectralState(n=n, nu=nu, t=0.0, omega_hat=np.fft.fft2(w0)), w0


class TestStepVorticity:
    def test_single_mode_viscous_decay(self):
        k = (4, 3)
        state, w0 = single_mode_state(k=k)
        for _ in range(100):
            state = ns.step_vorticity(state, 0.01)
        expected = w0 * np.exp(-state.nu * (k[0] ** 2 + k[1] ** 2) * state.t)
        rel = np.max(np.abs(state.vorticity() - expected)) \
            / np.max(np.abs(expected))
        assert rel < 1e-8

    def test_zero_state_stays_zero(self):
        state = ns.SpectralState(n=32, nu=1e-3, t=0.0,
                                 omega_hat=np.zeros((32, 32), complex))
        for _ in range(5):
            state = ns.step_vorticity(state, 0.01)
        assert np.all(state.omega_hat == 0)

    def test_energy_decays_without_forcing(self):
        w0 = ns.band_limited_vorticity(64, (1.5, 8.5), 2.0, seed=3)
        state = ns.SpectralState(n=64, nu=1e-3, t=0.0, omega_hat=w0)
        energies = [state.kinetic_energy()]
        for _ in range(50):
            state = ns.step_vorticity(state, 0.01)
            energies.append(state.kinetic_energy())
        diffs = np.diff(energies)
        assert np.all(diffs <= 0)

    def test_dealiased_modes_exactly_zero(self):
        rng = np.random.default_rng(0)
        state = ns.SpectralState(
            n=64, nu=1e-3, t=0.0,
            omega_hat=np.fft.fft2(rng.standard_normal((64, 64))))
        state = ns.step_vorticity(state, 1e-3)
        kx, ky = ns._wavenumbers(64)
        outside = np.sqrt(kx ** 2 + ky ** 2) > (2.0 / 3.0) * 32.0
        assert np.all(state.omega_hat[outside] == 0)

    def test_vorticity_real_to_machine_precision(self):
        w0 = ns.band_limited_vorticity(64, (2.5, 9.5), 1.0, seed=1)
        state = ns.SpectralState(n=64, nu=1e-4, t=0.0, omega_hat=w0)
        for _ in range(10):
            state = ns.step_vorticity(state, 0.01)
        w = np.fft.ifft2(state.omega_hat)
        assert np.max(np.abs(w.imag)) < 1e-12 * max(np.max(np.abs(w.real)), 1)

    def test_blow_up_aborts_with_diagnostic(self):
        state, _ = single_mode_state(nu=1e-3)
        bad = state.omega_hat.copy()
        bad[3, 3] = np.inf
        state = ns.SpectralState(n=state.n, nu=state.nu, t=0.0, omega_hat=bad)
        with pytest.raises(BlowUpError, match="non-finite"):
            ns.step_vorticity(state, 0.01)


class TestRandomForcing:
    def test_band_support(self):
        f = ns.random_forcing((3.5, 4.5), 0.7, seed=9, n=128)
        kx, ky = ns._wavenumbers(128)
        kk = np.sqrt(kx ** 2 + ky ** 2)
        nz = np.abs(f) > 1e-12
        assert nz.any()
        assert np.all((kk[nz] > 3.5) & (kk[nz] < 4.5))

    def test_same_seed_bit_identical(self):
        a = ns.random_forcing((3.5, 4.5), 0.7, seed=9, n=64)
        b = ns.random_forcing((3.5, 4.5), 0.7, seed=9, n=64)
        assert np.array_equal(a, b)
        c = ns.random_forcing((3.5, 4.5), 0.7, seed=10, n=64)
        assert not np.array_equal(a, c)

    def test_zero_amplitude(self):
        f = ns.random_forcing((3.5, 4.5), 0.0, seed=9, n=64)
        assert np.all(f == 0)

    def test_conjugate_symmetric(self):
        f = ns.random_forcing((3.5, 4.5), 1.0, seed=2, n=64)
        phys = np.fft.ifft2(f)
        assert np.max(np.abs(phys.imag)) < 1e-12

    def test_empty_or_invalid_band(self):
        with pytest.raises(ValueError, match="no.*lattice|lattice"):
            ns.random_forcing((4.01, 4.09), 1.0, seed=0, n=64)
        with pytest.raises(ValueError, match="cutoff"):
            ns.random_forcing((3.5, 60.0), 1.0, seed=0, n=128)
        with pytest.raises(ValueError, match="invalid"):
            ns.random_forcing((4.5, 3.5), 1.0, seed=0, n=64)


class TestGenerateTurbulence:
    def test_desk_scale_file_properties(self, tmp_path):
        out = tmp_path / "turb.lcsgrid"
        cfg = ns.TurbulenceConfig(n=48, nu=1e-3, spin_up=0.5, window=1.0,
                                  interval=0.25, forcing_amplitude=0.2,
                                  seed=5, out=str(out))
        field = ns.generate_turbulence(cfg)
        assert field.periodic == (True, True)
        assert len(field.times) == int(round(cfg.window / cfg.interval)) + 1
        assert field.bounds == (0.0, 2 * np.pi, 0.0, 2 * np.pi)
        import lcstrack as lt
        disk = lt.load_gridded_field(out)
        assert np.array_equal(disk.u, field.u)

    def test_snapshots_divergence_free(self, tmp_path):
        cfg = ns.TurbulenceConfig(n=48, nu=1e-3, spin_up=0.3, window=0.5,
                                  interval=0.25, forcing_amplitude=0.2,
                                  seed=5, out=str(tmp_path / "t.lcsgrid"))
        field = ns.generate_turbulence(cfg)
        kx, ky = ns._wavenumbers(48)
        for i in range(len(field.times)):
            div = np.fft.ifft2(1j * kx * np.fft.fft2(field.u[i])
                               + 1j * ky * np.fft.fft2(field.v[i])).real
            scale = max(np.max(np.abs(field.u[i])), 1e-30)
            assert np.max(np.abs(div)) < 1e-12 * max(scale, 1.0)

    def test_deterministic_given_seed(self, tmp_path):
        cfg_kw = dict(n=48, nu=1e-3, spin_up=0.3, window=0.5, interval=0.25,
                      forcing_amplitude=0.2, seed=11)
        a = ns.generate_turbulence(
            ns.TurbulenceConfig(out=str(tmp_path / "a.bin"), **cfg_kw))
        b = ns.generate_turbulence(
            ns.TurbulenceConfig(out=str(tmp_path / "b.bin"), **cfg_kw))
        assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)
        assert (tmp_path / "a.bin").read_bytes() == \
            (tmp_path / "b.bin").read_bytes()

    def test_upsampled_output_resolution(self, tmp_path):
        cfg = ns.TurbulenceConfig(n=48, nu=1e-3, spin_up=0.2, window=0.25,
                                  interval=0.25, forcing_amplitude=0.2,
                                  seed=5, out=str(tmp_path / "u.bin"),
                                  out_resolution=96)
        field = ns.generate_turbulence(cfg)
        assert field.u.shape[1:] == (96, 96)
        # node subset agrees with the native synthesis (exact zero-padding)
        cfg2 = ns.TurbulenceConfig(n=48, nu=1e-3, spin_up=0.2, window=0.25,
                                   interval=0.25, forcing_amplitude=0.2,
                                   seed=5, out=str(tmp_path / "n.bin"))
        native = ns.generate_turbulence(cfg2)
        assert np.allclose(field.u[:, ::2, ::2], native.u, atol=1e-12)


def test_paper_scale_reference_config_stored_not_run():
    ref = ns.PAPER_SCALE_CONFIG
    assert ref["n"] == 512
    assert ref["nu"] == 1e-5
    assert ref["t_start"] == 0.0 and ref["t_end"] == 100.0
    assert ref["forcing_band"] == (3.5, 4.5)
