import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import trig_potential
from nvsigma.ba import (BlochWave, bloch_wave, converged_order, dual_conditions, dual_series, multiplier_exponents,
                        recursion_defect, reflected_residue, self_dualize, self_duality_defect, series_divide,
                        series_product, series_reflect, series_sqrt)
from nvsigma.errors import NotConstantRatio
from nvsigma.torus import GridFunction, TorusShape

seeds = st.integers(0, 2**32 - 1)


def random_trig(shape, rng, modes=2, amp=0.4):
    u = GridFunction.zeros(shape)
    for m in range(-modes, modes + 1):
        for n in range(-modes, modes + 1):
            c = (rng.normal() + 1j * rng.normal()) * amp * np.exp(-(m * m + n * n))
            u = u + GridFunction.fourier_mode(shape, m, n, c)
    return u


@pytest.mark.parametrize("c", [0.0, 1.0, -0.4 + 2.5j])
def test_constant_potential_gives_c_over_k(c):
    s = TorusShape(1j, 8, 8)
    w = bloch_wave(GridFunction.constant(s, c), 8)
    assert w.ells[0] == pytest.approx(c, abs=1e-15)
    assert np.max(np.abs(w.ells[1:])) <= 1e-12
    assert max(z.norm() for z in w.zetas) <= 1e-12
    assert np.max(recursion_defect(w)) <= 1e-10


@pytest.mark.parametrize("tau,m,n", [(1j, 1, 0), (1j, 0, 1), (0.3 + 0.9j, 1, 1), (0.3 + 0.9j, 2, -1)])
def test_two_mode_potential_by_hand(tau, m, n):
    # u = c e + d/e: ell_1 = ell_2 = 0, ell_3 = -2 c d s/sbar with s, sbar the
    # d/dz and d/dzbar symbols of e, from substituting zeta_1 and zeta_2 by hand
    s = TorusShape(tau, 16, 16)
    c, d = 0.3 - 0.1j, 0.2 + 0.25j
    u = GridFunction.fourier_mode(s, m, n, c) + GridFunction.fourier_mode(s, -m, -n, d)
    t1, t2 = tau.real, tau.imag
    sym = np.pi * 1j * m + np.pi * (n - t1 * m) / t2
    symbar = np.conj(np.pi * 1j * -m + np.pi * (-n + t1 * m) / t2)
    w = bloch_wave(u, 4)
    assert abs(w.ells[0]) < 1e-14 and abs(w.ells[1]) < 1e-14
    assert w.ells[2] == pytest.approx(-2 * c * d * sym / symbar, abs=1e-13)


def test_recursion_defect_through_order_8():
    s = TorusShape(0.2 + 1.1j, 32, 32)
    w = bloch_wave(trig_potential(s), 8)
    assert np.max(recursion_defect(w)) <= 1e-10
    assert np.max(w.defects) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_dual_series_solves_its_conditions(seed):
    s = TorusShape(1j, 16, 16)
    w = bloch_wave(random_trig(s, np.random.default_rng(seed)), 6)
    assert np.max(dual_conditions(w, dual_series(w), 6)) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_random_potentials_are_self_dual(seed):
    s = TorusShape(1j, 16, 16)
    res = self_dualize(bloch_wave(random_trig(s, np.random.default_rng(seed), modes=1), 6))
    top = res.converged
    assert np.max(self_duality_defect(res.wave)[:top]) <= 1e-8
    assert res.h.odd_defect() <= 1e-8
    assert res.rho.odd_defect() == 0.0
    even = [abs(res.wave.ells[k - 1]) for k in range(2, 7, 2)]
    assert max(even) <= 1e-10


def test_self_dual_wave_of_trig_potential(trig16):
    u, w = trig16
    assert np.max(self_duality_defect(w)[:converged_order(8)]) <= 1e-10
    assert abs(w.ells[2]) > 1e-2  # ell_3 is a genuine odd coefficient
    assert reflected_residue(w, 0, 0).values == pytest.approx(-1.0)


def test_perturbed_wave_is_rejected(trig16):
    u, w = trig16
    zetas = list(w.zetas)
    zetas[1] = zetas[1] + GridFunction.fourier_mode(u.shape, 1, 0, 0.1)
    with pytest.raises(NotConstantRatio):
        self_dualize(BlochWave(u, zetas, w.ells))


def test_self_dualize_is_idempotent(trig16):
    _, w = trig16
    again = self_dualize(w)
    assert np.max(np.abs(np.array(again.h.coeffs[: again.converged]))) <= 1e-10


@pytest.mark.parametrize("S,top", [(2, 1), (3, 1), (6, 4), (8, 6)])
def test_converged_order(S, top):
    assert converged_order(S) == top


def test_multiplier_exponents_constant():
    s = TorusShape(0.25 + 0.8j, 8, 8)
    c = 0.7 - 0.2j
    w = bloch_wave(GridFunction.constant(s, c), 4)
    ex = multiplier_exponents(w, "x")
    ey = multiplier_exponents(w, "y")
    k = 1.3 + 0.4j
    assert ex(k) == pytest.approx(k + c / k, abs=1e-14)
    assert ey(k) == pytest.approx(s.tau * k + np.conj(s.tau) * c / k, abs=1e-14)
    with pytest.raises(ValueError):
        multiplier_exponents(w, "z")


def test_wave_save_load(tmp_path, trig16):
    _, w = trig16
    w.save(tmp_path / "wave")
    back = BlochWave.load(tmp_path / "wave")
    assert back.self_dual and back.S == w.S
    assert np.array_equal(back.ells, w.ells)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(back.zetas, w.zetas))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False), min_size=6, max_size=6))
def test_series_helpers(coeffs):
    a = [1.0 + 0j] + coeffs[:3]
    b = [1.0 + 0j] + coeffs[3:]
    S = 3
    q = series_divide(series_product(a, b, S), b, S)
    assert np.allclose(q, a, atol=1e-9 * max(1, max(map(abs, coeffs))) ** 6)
    r = series_sqrt(a, S)
    assert np.allclose(series_product(r, r, S), a, atol=1e-9 * max(1, max(map(abs, coeffs))) ** 6)
    assert series_reflect(series_reflect(a)) == a


def test_order_must_be_at_least_two():
    with pytest.raises(ValueError):
        bloch_wave(GridFunction.zeros(TorusShape(1j, 8, 8)), 1)
