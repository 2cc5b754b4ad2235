"""Weierstrass functions on the lattice Z + tau Z and elliptic instanton factors.

sigma is evaluated through the Jacobi theta function theta_1 with nome
q = exp(i pi tau)::

    sigma(z) = exp(eta1 z^2) theta_1(pi z) / (pi theta_1'(0)),   eta1 = zeta(1/2)

after reducing z to the cell centred at the origin with the quasi-periodicity
sigma(z + m + n tau) = (-1)^(m+n+mn) exp(2 (m eta1 + n eta2)(z + (m + n tau)/2)) sigma(z).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import NormViolation, PoleAtLattice, PoleHit

THETA_TERMS = 40
LATTICE_ATOL = 1e-14


@functools.lru_cache(maxsize=64)
def _lattice_cached(tau: complex) -> "EllipticLattice":
    return EllipticLattice(tau)


def lattice(tau) -> "EllipticLattice":
    """Shared, cached lattice for modulus ``tau``."""
    return _lattice_cached(complex(tau))


class EllipticLattice:
    """Weierstrass sigma, zeta, p and invariants for periods 1 and tau.

    Attributes
    ----------
    eta1, eta2 : complex
        zeta(1/2) and zeta(tau/2).
    g2, g3 : complex
        Invariants from the Eisenstein series.
    """

    def __init__(self, tau):
        tau = complex(tau)
        if not tau.imag > 0:
            raise ValueError(f"Im(tau) must be positive, got {tau}")
        self.tau = tau
        self.nome = np.exp(1j * np.pi * tau)
        n = np.arange(THETA_TERMS)
        self._odd = 2 * n + 1
        self._weights = 2.0 * (-1.0) ** n * self.nome ** ((n + 0.5) ** 2)
        d1 = np.sum(self._weights * self._odd)
        d3 = -np.sum(self._weights * self._odd**3)
        self.theta1_prime0 = d1
        self.eta1 = -(np.pi**2 / 6.0) * d3 / d1
        self.eta2 = complex(self._zeta_reduced(np.asarray(tau / 2)))
        q2 = np.exp(2j * np.pi * tau)
        m = np.arange(1, 200)
        qm = q2**m
        keep = np.abs(qm) > 1e-300
        m, qm = m[keep], qm[keep]
        sig3 = np.array([sum(d**3 for d in range(1, k + 1) if k % d == 0) for k in m], dtype=float)
        sig5 = np.array([sum(d**5 for d in range(1, k + 1) if k % d == 0) for k in m], dtype=float)
        self.E4 = 1 + 240 * np.sum(sig3 * qm)
        self.E6 = 1 - 504 * np.sum(sig5 * qm)
        self.g2 = complex(4 * np.pi**4 / 3 * self.E4)
        self.g3 = complex(8 * np.pi**6 / 27 * self.E6)

    # theta_1 and its derivatives in v = pi z --------------------------------

    def _theta(self, v, deriv: int = 0):
        v = np.asarray(v, dtype=complex)
        arg = np.multiply.outer(v, self._odd)
        w = self._weights * self._odd**deriv
        if deriv % 4 == 0:
            terms = np.sin(arg)
        elif deriv % 4 == 1:
            terms = np.cos(arg)
        elif deriv % 4 == 2:
            terms = -np.sin(arg)
        else:
            terms = -np.cos(arg)
        return np.sum(w * terms, axis=-1)

    # lattice reduction -------------------------------------------------------

    def lattice_coords(self, z):
        """Real coordinates (s, t) with z = s + t tau."""
        z = np.asarray(z, dtype=complex)
        t = z.imag / self.tau.imag
        s = z.real - t * self.tau.real
        return s, t

    def reduce(self, z):
        """Split z = z0 + m + n tau with z0 in the cell centred at 0."""
        s, t = self.lattice_coords(z)
        m = np.round(s)
        n = np.round(t)
        return np.asarray(z) - m - n * self.tau, m, n

    def reduce_fundamental(self, z):
        """Representative with lattice coordinates in [0, 1) x [0, 1)."""
        s, t = self.lattice_coords(z)
        return np.asarray(z) - np.floor(s) - np.floor(t) * self.tau

    def lattice_distance(self, z):
        """Euclidean distance from z to the nearest lattice point."""
        z0, _, _ = self.reduce(z)
        best = np.abs(z0)
        for dm in (-1, 0, 1):
            for dn in (-1, 0, 1):
                best = np.minimum(best, np.abs(z0 + dm + dn * self.tau))
        return best

    def _check_poles(self, z, name):
        if np.any(self.lattice_distance(z) < LATTICE_ATOL):
            raise PoleAtLattice(f"{name} has a pole at lattice points")

    # Weierstrass functions ---------------------------------------------------

    def _sigma_reduced(self, z0):
        return np.exp(self.eta1 * z0**2) * self._theta(np.pi * z0) / (np.pi * self.theta1_prime0)

    def _zeta_reduced(self, z0):
        v = np.pi * z0
        return 2 * self.eta1 * z0 + np.pi * self._theta(v, 1) / self._theta(v)

    def _wp_reduced(self, z0):
        v = np.pi * z0
        th = self._theta(v)
        th1 = self._theta(v, 1)
        th2 = self._theta(v, 2)
        return -2 * self.eta1 - np.pi**2 * (th2 * th - th1**2) / th**2

    def sigma(self, z):
        z = np.asarray(z, dtype=complex)
        z0, m, n = self.reduce(z)
        lam = m + n * self.tau
        sign = np.where(((m + n + m * n) % 2) == 0, 1.0, -1.0)
        factor = sign * np.exp(2 * (m * self.eta1 + n * self.eta2) * (z0 + lam / 2))
        return factor * self._sigma_reduced(z0)

    def zeta(self, z):
        z = np.asarray(z, dtype=complex)
        self._check_poles(z, "zeta")
        z0, m, n = self.reduce(z)
        return self._zeta_reduced(z0) + 2 * (m * self.eta1 + n * self.eta2)

    def wp(self, z):
        z = np.asarray(z, dtype=complex)
        self._check_poles(z, "wp")
        z0, _, _ = self.reduce(z)
        return self._wp_reduced(z0)

    def wp_prime(self, z):
        z = np.asarray(z, dtype=complex)
        self._check_poles(z, "wp_prime")
        return -self.sigma(2 * z) / self.sigma(z) ** 4

    @property
    def half_periods(self) -> tuple:
        return (0.5, self.tau / 2, (1 + self.tau) / 2)

    def e_values(self) -> np.ndarray:
        """p at the three half periods."""
        return np.array([complex(self.wp(w)) for w in self.half_periods])

    def legendre_defect(self) -> float:
        return abs(self.eta1 * self.tau / 2 - self.eta2 / 2 - np.pi * 1j / 2)


# convenience wrappers ---------------------------------------------------------

def sigma_w(z, tau=1j):
    return lattice(tau).sigma(z)


def zeta_w(z, tau=1j):
    return lattice(tau).zeta(z)


def wp(z, tau=1j):
    return lattice(tau).wp(z)


def sigma_product(z, tau, M: int = 200):
    """Weierstrass product for sigma over |m|, |n| <= M (slow; reference only)."""
    m, n = np.meshgrid(np.arange(-M, M + 1), np.arange(-M, M + 1), indexing="ij")
    lam = (m + n * tau).ravel()
    lam = lam[(m.ravel() != 0) | (n.ravel() != 0)]
    out = []
    for zz in np.atleast_1d(np.asarray(z, dtype=complex)):
        r = zz / lam
        out.append(zz * np.exp(np.sum(np.log1p(-r) + r + r * r / 2)))
    return np.array(out)


# instanton factor ------------------------------------------------------------

@dataclass(frozen=True)
class InstantonData:
    """v(z) = A prod sigma(z - a_i) / sigma(z - b_i).

    The sector is ``"periodic"`` when sum(a - b) is a lattice vector and
    ``"twisted"`` when only twice the sum is.
    """

    A: complex
    a: tuple
    b: tuple
    tau: complex = 1j

    def __post_init__(self):
        object.__setattr__(self, "A", complex(self.A))
        object.__setattr__(self, "tau", complex(self.tau))
        object.__setattr__(self, "a", tuple(complex(x) for x in self.a))
        object.__setattr__(self, "b", tuple(complex(x) for x in self.b))
        if len(self.a) != len(self.b) or not self.a:
            raise ValueError("need equally many zeros and poles, at least one of each")
        if self.A == 0:
            raise ValueError("amplitude must be nonzero")
        L = lattice(self.tau)
        for i, x in enumerate(self.a):
            for y in self.a[i + 1:]:
                if L.lattice_distance(x - y) < 1e-12:
                    raise ValueError("zeros must be pairwise distinct modulo the lattice")
        for i, x in enumerate(self.b):
            for y in self.b[i + 1:]:
                if L.lattice_distance(x - y) < 1e-12:
                    raise ValueError("poles must be pairwise distinct modulo the lattice")
        if self.sector is None:
            raise ValueError("sum(a - b) must be a lattice vector or half of one")

    @property
    def ell(self) -> int:
        return len(self.a)

    @property
    def shift(self) -> complex:
        return sum(self.a) - sum(self.b)

    @property
    def sector(self):
        L = lattice(self.tau)
        if L.lattice_distance(self.shift) < 1e-10:
            return "periodic"
        if L.lattice_distance(2 * self.shift) < 1e-10:
            return "twisted"
        return None

    def cancelled(self) -> bool:
        """True when every zero coincides with a pole, so v is the constant A."""
        L = lattice(self.tau)
        return all(min(L.lattice_distance(x - y) for y in self.b) < 1e-12 for x in self.a)


def instanton_v(d: InstantonData, z, pole_guard: float = 0.0):
    """Evaluate v at z (array).  ``PoleHit`` if some z lies within ``pole_guard`` of a pole."""
    L = lattice(d.tau)
    z = np.asarray(z, dtype=complex)
    if d.cancelled():
        return np.full(z.shape, d.A)
    for b in d.b:
        if np.any(L.lattice_distance(z - b) <= max(pole_guard, LATTICE_ATOL)):
            raise PoleHit(f"evaluation point within {pole_guard} of the pole {b}")
    out = np.full(z.shape, d.A)
    for a, b in zip(d.a, d.b):
        out = out * L.sigma(z - a) / L.sigma(z - b)
    return out


def instanton_inverse(d: InstantonData, z):
    """1/v, finite at the poles of v."""
    L = lattice(d.tau)
    z = np.asarray(z, dtype=complex)
    if d.cancelled():
        return np.full(z.shape, 1 / d.A)
    out = np.full(z.shape, 1 / d.A)
    for a, b in zip(d.a, d.b):
        out = out * L.sigma(z - b) / L.sigma(z - a)
    return out


def monodromy(d: InstantonData, samples: int = 16, seed: int = 0) -> tuple:
    """Measured (v(z+1)/v(z), v(z+tau)/v(z)) and the spread of each ratio over sample points."""
    rng = np.random.default_rng(seed)
    L = lattice(d.tau)
    pts = []
    while len(pts) < samples:
        z = rng.uniform(0, 1) + rng.uniform(0, 1) * d.tau
        far = all(L.lattice_distance(z - p) > 0.05 for p in d.a + d.b)
        far = far and all(L.lattice_distance(z + sh - p) > 0.05 for p in d.a + d.b for sh in (1, d.tau))
        if far:
            pts.append(z)
    z = np.array(pts)
    v = instanton_v(d, z)
    rx = instanton_v(d, z + 1) / v
    ry = instanton_v(d, z + d.tau) / v
    mx, my = complex(np.mean(rx)), complex(np.mean(ry))
    spread = max(float(np.max(np.abs(rx - mx))), float(np.max(np.abs(ry - my))))
    return (mx, my), spread


def predicted_monodromy(d: InstantonData) -> tuple:
    """Multipliers exp(-2 eta1 s), exp(-2 eta2 s) with s = sum(a - b)."""
    L = lattice(d.tau)
    return complex(np.exp(-2 * L.eta1 * d.shift)), complex(np.exp(-2 * L.eta2 * d.shift))


def count_zeros(d: InstantonData, n: int = 200, offset: complex = 0.0) -> int:
    """Number of zeros of v in a fundamental cell, by plaquette winding numbers.

    Each grid plaquette contributes the winding number of v around its
    boundary; the positive windings are summed.  ``offset`` shifts the cell so
    that no zero or pole lies on a plaquette edge.
    """
    s = (np.arange(n + 1) + 0.5) / n
    S, T = np.meshgrid(s, s, indexing="ij")
    z = S + T * d.tau + offset
    v = instanton_v(d, z)
    ph = np.angle(v)

    def wrap(a):
        return (a + np.pi) % (2 * np.pi) - np.pi

    w = (wrap(ph[1:, :-1] - ph[:-1, :-1]) + wrap(ph[1:, 1:] - ph[1:, :-1])
         + wrap(ph[:-1, 1:] - ph[1:, 1:]) + wrap(ph[:-1, :-1] - ph[:-1, 1:]))
    winding = np.round(w / (2 * np.pi)).astype(int)
    return int(winding[winding > 0].sum())


def fractional_linear(v, c: complex, d: complex, atol: float = 1e-12):
    """(c v + d) / (-conj(d) v + conj(c)) for |c|^2 + |d|^2 = 1."""
    if abs(abs(c) ** 2 + abs(d) ** 2 - 1) > atol:
        raise NormViolation(f"|c|^2 + |d|^2 = {abs(c) ** 2 + abs(d) ** 2!r}, expected 1")
    v = np.asarray(v, dtype=complex)
    return (c * v + d) / (-np.conj(d) * v + np.conj(c))
