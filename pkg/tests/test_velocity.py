import numpy as np
import pytest

import lcstrack as lt
from lcstrack.errors import DomainError, GridFileError

from conftest import tiny_gridded_field


class TestDuffing:
    def test_saddle_equilibrium(self):
        f = lt.duffing_field()
        assert np.allclose(f.eval(np.array([0.0, 0.0]), 0.0), [0.0, 0.0])
        assert np.allclose(f.eval(np.array([0.0, 0.0]), 17.3), [0.0, 0.0])

    def test_known_values(self):
        f = lt.duffing_field()
        assert np.allclose(f.eval(np.array([1.0, 0.0]), 0.0), [0.0, 3.0])
        assert np.allclose(f.eval(np.array([0.0, 1.0]), 0.0), [1.0, 0.0])

    def test_divergence_free_symbolically(self):
        import sympy as sp
        x, y = sp.symbols("x y")
        H = x ** 4 / 4 - 2 * x ** 2 + y ** 2 / 2
        u, v = sp.diff(H, y), -sp.diff(H, x)
        assert sp.simplify(sp.diff(u, x) + sp.diff(v, y)) == 0
        # and the implementation matches the Hamiltonian vector field
        f = lt.duffing_field()
        for px, py in [(0.3, -0.7), (-1.4, 2.2), (2.0, 0.0)]:
            expected = [float(u.subs({x: px, y: py})),
                        float(v.subs({x: px, y: py}))]
            assert np.allclose(f.eval(np.array([px, py]), 0.0), expected)


class TestGridded:
    def test_constant_field_two_slices(self):
        f = tiny_gridded_field()
        pts = np.array([[0.0, 0.0], [0.3, -0.4], [0.99, 0.99]])
        uv = f.eval(pts, 0.37)
        assert np.allclose(uv, [[1.0, 0.0]] * 3)

    def test_nodes_reproduced_exactly(self):
        rng = np.random.default_rng(11)
        n = 9
        data = rng.standard_normal((2, 2, n, n))
        f = lt.gridded_field((-1, 1, -1, 1), (False, False),
                             np.array([0.0, 1.0]), data[0], data[1])
        xs = np.linspace(-1, 1, n)
        for iy in range(n):
            for ix in range(0, n, 3):
                uv = f.eval(np.array([xs[ix], xs[iy]]), 1.0)
                assert uv[0] == pytest.approx(data[0, 1, iy, ix], abs=1e-13)
                assert uv[1] == pytest.approx(data[1, 1, iy, ix], abs=1e-13)

    def test_cubic_exact_on_linear_field(self):
        f = tiny_gridded_field(fn=lambda X, Y, t: (X, -Y))
        rng = np.random.default_rng(3)
        pts = rng.uniform(-0.999, 0.999, size=(40, 2))
        uv = f.eval(pts, 0.5)
        assert np.allclose(uv[:, 0], pts[:, 0], atol=1e-12)
        assert np.allclose(uv[:, 1], -pts[:, 1], atol=1e-12)

    def test_periodic_wrap(self):
        two_pi = 2 * np.pi
        f = tiny_gridded_field(periodic=(True, True), n=16,
                               bounds=(0, two_pi, 0, two_pi),
                               fn=lambda X, Y, t: (np.sin(X) * np.cos(Y),
                                                   np.cos(X)))
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, two_pi, size=(25, 2))
        base = f.eval(pts, 0.5)
        for shift in ([two_pi, 0.0], [0.0, two_pi], [-two_pi, two_pi]):
            assert np.allclose(f.eval(pts + shift, 0.5), base, atol=1e-12)

    def test_out_of_domain_raises(self):
        f = tiny_gridded_field()
        with pytest.raises(DomainError):
            f.eval(np.array([1.5, 0.0]), 0.5)
        with pytest.raises(DomainError):
            f.eval(np.array([0.0, 0.0]), 2.0)

    def test_linear_time_interpolation(self):
        f = tiny_gridded_field(fn=lambda X, Y, t: (np.full_like(X, t),
                                                   np.zeros_like(X)))
        uv = f.eval(np.array([0.2, 0.1]), 0.25)
        assert uv[0] == pytest.approx(0.25, abs=1e-13)


class TestGridFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        f = tiny_gridded_field(fn=lambda X, Y, t: (
            rng.standard_normal(X.shape), rng.standard_normal(X.shape)))
        path = tmp_path / "field.lcsgrid"
        lt.save_gridded_field(f, path)
        g = lt.load_gridded_field(path)
        assert np.array_equal(f.u, g.u)
        assert np.array_equal(f.v, g.v)
        assert np.array_equal(f.times, g.times)
        assert f.bounds == g.bounds and f.periodic == g.periodic

    def test_non_monotone_times(self, tmp_path):
        f = tiny_gridded_field()
        path = tmp_path / "bad.lcsgrid"
        lt.save_gridded_field(f, path)
        raw = bytearray(path.read_bytes())
        # header is 8s 3q 4d 2B = 66 bytes; times follow
        times = np.array([1.0, 0.5])
        raw[66:66 + 16] = times.astype("<f8").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(GridFileError, match="non-monotone time axis"):
            lt.load_gridded_field(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC" + b"\0" * 100)
        with pytest.raises(GridFileError, match="malformed header"):
            lt.load_gridded_field(path)

    def test_shape_mismatch(self, tmp_path):
        f = tiny_gridded_field()
        path = tmp_path / "bad.lcsgrid"
        lt.save_gridded_field(f, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(GridFileError, match="shape mismatch"):
            lt.load_gridded_field(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "tiny.bin"
        path.write_bytes(b"LCSGRID1")
        with pytest.raises(GridFileError, match="malformed header"):
            lt.load_gridded_field(path)


def test_eval_velocity_wrapper():
    f = lt.duffing_field()
    assert np.allclose(lt.eval_velocity(f, (0.0, 1.0), 0.0), [1.0, 0.0])


def test_builtin_field_unknown_name():
    with pytest.raises(ValueError, match="unknown builtin"):
        lt.builtin_field("vortex")
