import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvsigma import torus
from nvsigma.errors import InvalidShape, NonZeroMean, ShapeMismatch
from nvsigma.torus import GridFunction, TorusShape, clean_spectrum, read_csv, solve_dzbar, write_csv


def dz_symbol_by_hand(m, n, tau):
    # X = x + Re(tau) y, Y = Im(tau) y and d/dz = (d/dX - i d/dY) / 2
    t1, t2 = tau.real, tau.imag
    return np.pi * 1j * m + np.pi * (n - t1 * m) / t2


@pytest.mark.parametrize("tau", [1j, 0.3 + 1.1j, -0.45 + 0.8j])
@pytest.mark.parametrize("m,n", [(1, 0), (0, 1), (2, -3), (-4, 1)])
def test_mode_derivatives_match_hand_symbols(tau, m, n):
    s = TorusShape(tau, 16, 16)
    f = GridFunction.fourier_mode(s, m, n)
    dz = dz_symbol_by_hand(m, n, tau)
    assert np.allclose(f.d("z").values, dz * f.values, atol=1e-12)
    # conj(d/dz) acting on conj(f)
    dzbar = np.conj(dz_symbol_by_hand(-m, -n, tau))
    assert np.allclose(f.d("zbar").values, dzbar * f.values, atol=1e-12)
    assert np.allclose(f.d("x").values, 2j * np.pi * m * f.values, atol=1e-12)


def test_spectral_derivative_of_smooth_function():
    s = TorusShape(1j, 32, 32)
    f = GridFunction.from_function(s, lambda x, y: np.exp(np.cos(2 * np.pi * x)))
    x, _ = s.grid()
    exact = -np.pi * np.sin(2 * np.pi * x) * np.exp(np.cos(2 * np.pi * x))
    assert np.max(np.abs(f.d("z").values - exact)) < 1e-12
    assert np.max(np.abs(f.d("zbar").values - exact)) < 1e-12


def test_laplacian_factorization():
    # 4 d dbar = d_X^2 + d_Y^2 for tau = i
    s = TorusShape(1j, 16, 16)
    f = GridFunction.fourier_mode(s, 2, 1) + GridFunction.fourier_mode(s, -1, 3, 0.5j)
    lap = f.d("x", 2).values + f.d("y", 2).values
    assert np.allclose(4 * f.d("zbar").d("z").values, lap, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solve_dzbar_round_trip(seed):
    rng = np.random.default_rng(seed)
    s = TorusShape(0.2 + 0.9j, 16, 16)
    g = GridFunction.zeros(s)
    for m in range(-3, 4):
        for n in range(-3, 4):
            if (m, n) != (0, 0):
                g = g + GridFunction.fourier_mode(s, m, n, rng.normal() + 1j * rng.normal())
    sol = solve_dzbar(g)
    assert abs(sol.mean()) < 1e-13
    assert np.max(np.abs(sol.d("zbar").values - g.values)) < 1e-11 * g.norm()


def test_solve_dzbar_rejects_mean():
    s = TorusShape(1j, 8, 8)
    with pytest.raises(NonZeroMean):
        solve_dzbar(GridFunction.constant(s, 1.0))


def test_noise_floor_is_read_at_call_time(monkeypatch):
    fhat = np.array([1.0, 1e-16, 1e-3])
    assert clean_spectrum(fhat)[1] == 0.0
    monkeypatch.setattr(torus, "SPECTRAL_NOISE_FLOOR", 0.0)
    assert clean_spectrum(fhat)[1] == 1e-16
    assert clean_spectrum(fhat, floor=1e-2)[2] == 0.0


def test_mean_and_arithmetic():
    s = TorusShape(1j, 8, 8)
    f = GridFunction.constant(s, 2 - 1j) + GridFunction.fourier_mode(s, 1, 1)
    assert f.mean() == pytest.approx(2 - 1j, abs=1e-15)
    assert ((f * 2) - f - f).norm() == 0.0


def test_csv_round_trip(tmp_path):
    s = TorusShape(0.1 + 1.3j, 8, 10)
    f = GridFunction.fourier_mode(s, 1, 2, 0.3 - 0.7j)
    write_csv(f, tmp_path / "f.csv")
    g = read_csv(tmp_path / "f.csv")
    assert g.shape == s
    assert np.array_equal(g.values, f.values)


@pytest.mark.parametrize("tau,nx,ny", [(1.0 + 0j, 8, 8), (-1j, 8, 8), (1j, 7, 8), (1j, 6, 6)])
def test_invalid_shapes(tau, nx, ny):
    with pytest.raises(InvalidShape):
        TorusShape(tau, nx, ny)


def test_shape_mismatch():
    a = GridFunction.zeros(TorusShape(1j, 8, 8))
    b = GridFunction.zeros(TorusShape(1j, 16, 16))
    with pytest.raises(ShapeMismatch):
        a + b
    with pytest.raises(ShapeMismatch):
        GridFunction(TorusShape(1j, 8, 8), np.zeros((8, 10)))
