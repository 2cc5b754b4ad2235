"""Formal Bloch solutions of the zero-energy Schrodinger equation on the torus.

The wave is psi = exp(k z + ell(k) zbar) * zeta(k) with
zeta(k) = 1 + sum_s zeta_s k^-s and ell(k) = sum_s ell_s k^-s, solving
(-d dbar + u) psi = 0 order by order in 1/k.  Series in 1/k whose
coefficients are fields are stored as lists of (nx, ny) arrays indexed by
the power of 1/k, entry 0 being the constant term.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NotConstantRatio, OddObstruction
from .pdo import binom, derivative_stack
from .torus import GridFunction, TorusShape, derivative_values, read_csv, solve_dzbar, write_csv

DEFAULT_ORDER = 8
RATIO_TOL = 1e-8
ODD_TOL = 1e-8


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


# scalar series ------------------------------------------------------------

@dataclass(frozen=True)
class FormalSeries:
    """Series ``head*k + const + sum_{s=1}^S coeffs[s-1] k^-s`` with complex coefficients."""

    coeffs: tuple
    head: complex = 0.0
    const: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(complex(c) for c in self.coeffs))

    @property
    def S(self) -> int:
        return len(self.coeffs)

    def coefficient(self, power: int) -> complex:
        """Coefficient of k^power."""
        if power == 1:
            return complex(self.head)
        if power == 0:
            return complex(self.const)
        if -self.S <= power < 0:
            return self.coeffs[-power - 1]
        return 0.0j

    def __call__(self, k):
        k = np.asarray(k, dtype=complex)
        out = self.head * k + self.const
        for s, c in enumerate(self.coeffs, start=1):
            out = out + c * k ** (-s)
        return out

    def even_defect(self) -> float:
        """Largest |c_s| over even s >= 2 (zero for an odd tail)."""
        return max((abs(c) for s, c in enumerate(self.coeffs, start=1) if s % 2 == 0), default=0.0)

    def odd_defect(self) -> float:
        """Largest |c_s| over odd s (zero for an even tail)."""
        return max((abs(c) for s, c in enumerate(self.coeffs, start=1) if s % 2 == 1), default=0.0)

    def to_list(self) -> list:
        return [[c.real, c.imag] for c in self.coeffs]


# field-valued series helpers ---------------------------------------------

def series_product(a: list, b: list, S: int) -> list:
    """Cauchy product of two 1/k series, truncated after k^-S."""
    out = []
    for n in range(S + 1):
        acc = 0.0
        for i in range(max(0, n - len(b) + 1), min(n, len(a) - 1) + 1):
            acc = acc + a[i] * b[n - i]
        out.append(acc)
    return out


def series_divide(a: list, b: list, S: int) -> list:
    """Quotient a/b of 1/k series; b[0] must be nowhere zero."""
    out = []
    for n in range(S + 1):
        acc = a[n] if n < len(a) else 0.0
        for j in range(1, min(n, len(b) - 1) + 1):
            acc = acc - b[j] * out[n - j]
        out.append(acc / b[0])
    return out


def series_reflect(a: list) -> list:
    """zeta(k) -> zeta(-k)."""
    return [(-1) ** s * c for s, c in enumerate(a)]


def series_sqrt(a: list, S: int) -> list:
    """Formal square root of a series with constant term 1."""
    out = [np.ones_like(np.asarray(a[0], dtype=complex))]
    for n in range(1, S + 1):
        acc = a[n] if n < len(a) else 0.0
        for j in range(1, n):
            acc = acc - out[j] * out[n - j]
        out.append(acc / 2.0)
    return out


class WaveSeries:
    """A field-valued series zeta(k) with cached z-derivatives of its coefficients.

    ``power_action(i, lowest)`` returns the coefficients of
    exp(-kz) d^i (exp(kz) zeta(k)) = (k + d)^i zeta(k) for powers of k down
    to ``lowest``; ``i`` may be negative, in which case (k + d)^i is expanded
    as sum_j C(i, j) k^(i-j) d^j.
    """

    def __init__(self, shape: TorusShape, coeffs: list):
        self.shape = shape
        self.coeffs = [np.asarray(c, dtype=complex) * np.ones((shape.nx, shape.ny)) for c in coeffs]
        self._stacks: dict = {}

    @property
    def S(self) -> int:
        return len(self.coeffs) - 1

    def derivative(self, t: int, j: int) -> np.ndarray:
        stack = self._stacks.get(t)
        if stack is None or len(stack) <= j:
            stack = derivative_stack(self.coeffs[t], self.shape, max(j + 1, 2 * len(stack) if stack else 4))
            self._stacks[t] = stack
        return stack[j]

    def power_action(self, i: int, lowest: int) -> dict:
        out: dict = {}
        zero = np.zeros((self.shape.nx, self.shape.ny), dtype=complex)
        for b in range(i, lowest - 1, -1):
            acc = zero
            # k^(i-j-t) = k^b  =>  t = i - j - b
            jmax = i - b if i < 0 else min(i, i - b)
            for j in range(0, jmax + 1):
                t = i - j - b
                if t < 0 or t > self.S:
                    continue
                c = binom(i, j)
                if c == 0.0:
                    continue
                acc = acc + c * self.derivative(t, j)
            out[b] = acc
        return out


def k0_coefficient(left: list, right: dict, power: int = 0) -> np.ndarray:
    """[k^power] of (sum_a left[a] k^-a) * (sum_b right[b] k^b), always as a field."""
    acc = np.zeros(np.shape(left[0]), dtype=complex)
    for a, la in enumerate(left):
        rb = right.get(power + a)
        if rb is not None:
            acc = acc + la * rb
    return acc


# Bloch wave -----------------------------------------------------------------

@dataclass
class BlochWave:
    """Formal Bloch solution data.

    Attributes
    ----------
    u : GridFunction
        The potential.
    zetas : list of GridFunction
        zeta_1 .. zeta_S.
    ells : ndarray
        ell_1 .. ell_S.
    defects : ndarray
        Relative recursion defect at each level (raw waves only).
    self_dual : bool
        True once the wave has been gauge-normalized by :func:`self_dualize`;
        the zero-mean normalization of the zeta_s no longer holds then.
    """

    u: GridFunction
    zetas: list
    ells: np.ndarray
    defects: np.ndarray = field(default_factory=lambda: np.zeros(0))
    self_dual: bool = False

    @property
    def S(self) -> int:
        return len(self.zetas)

    @property
    def shape(self) -> TorusShape:
        return self.u.shape

    def zeta_list(self) -> list:
        """[1, zeta_1, ..., zeta_S] as raw arrays."""
        one = np.ones((self.shape.nx, self.shape.ny), dtype=complex)
        return [one] + [z.values for z in self.zetas]

    def series(self) -> WaveSeries:
        return WaveSeries(self.shape, self.zeta_list())

    def ell_series(self) -> FormalSeries:
        return FormalSeries(tuple(self.ells))

    def save(self, directory) -> Path:
        """Write ``wave.json`` plus one CSV per zeta_s (and the potential)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_csv(self.u, directory / "u.csv")
        files = []
        for s, z in enumerate(self.zetas, start=1):
            name = f"zeta_{s}.csv"
            write_csv(z, directory / name)
            files.append(name)
        manifest = {
            "S": self.S,
            "ells": [[complex(c).real, complex(c).imag] for c in self.ells],
            "self_dual": self.self_dual,
            "u": "u.csv",
            "zetas": files,
        }
        path = directory / "wave.json"
        path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, directory) -> "BlochWave":
        directory = Path(directory)
        manifest = json.loads((directory / "wave.json").read_text(encoding="utf-8"))
        u = read_csv(directory / manifest["u"])
        zetas = [read_csv(directory / name) for name in manifest["zetas"]]
        ells = np.array([complex(re, im) for re, im in manifest["ells"]])
        return cls(u, zetas, ells, self_dual=manifest.get("self_dual", False))


def bloch_wave(u: GridFunction, S: int = DEFAULT_ORDER) -> BlochWave:
    """Build zeta_1..zeta_S and ell_1..ell_S for the potential ``u``.

    Substituting psi into (-d dbar + u) psi = 0 and collecting k^-s gives::

        dbar zeta_{s+1} = u zeta_s - d dbar zeta_s
                          - sum_{j=1}^{s+1} ell_j (zeta_{s+1-j} + d zeta_{s-j})

    with zeta_0 = 1 and zeta_{-1} = 0.  The constant ell_{s+1} is the one that
    makes the right-hand side mean-free; zeta_{s+1} is the mean-free solution.
    """
    if S < 2:
        raise ValueError("series order S must be at least 2")
    shape = u.shape
    one = np.ones((shape.nx, shape.ny), dtype=complex)
    zeta = [one]
    dzeta = [np.zeros_like(one)]
    ells: list = []
    defects = []
    for s in range(S):
        zs = zeta[s]
        rhs = u.values * zs
        if s > 0:
            rhs = rhs - derivative_values(derivative_values(zs, shape, "zbar"), shape, "z")
        for j in range(1, s + 1):
            rhs = rhs - ells[j - 1] * (zeta[s + 1 - j] + dzeta[s - j])
        ell_next = complex(np.mean(rhs))
        ells.append(ell_next)
        rhs = rhs - ell_next
        # the mean is now zero up to roundoff; remove it exactly
        rhs = rhs - np.mean(rhs)
        znew = solve_dzbar(GridFunction(shape, rhs)).values
        check = derivative_values(znew, shape, "zbar")
        scale = max(float(np.max(np.abs(rhs))), 1e-300)
        defects.append(float(np.max(np.abs(check - rhs))) / scale if np.any(rhs) else 0.0)
        zeta.append(znew)
        dzeta.append(derivative_values(znew, shape, "z"))
    return BlochWave(u, [GridFunction(shape, z) for z in zeta[1:]], np.array(ells), np.array(defects))


def recursion_defect(w: BlochWave) -> np.ndarray:
    """Relative defect of the substitution identity at each level, recomputed from scratch."""
    shape = w.shape
    zeta = w.zeta_list()
    dz = [derivative_values(z, shape, "z") for z in zeta]
    out = []
    for s in range(w.S):
        terms = [w.u.values * zeta[s], -derivative_values(derivative_values(zeta[s], shape, "zbar"), shape, "z")]
        for j in range(1, s + 2):
            terms.append(-w.ells[j - 1] * (zeta[s + 1 - j] + (dz[s - j] if s - j >= 0 else 0.0)))
        lhs = derivative_values(zeta[s + 1], shape, "zbar")
        # relative to the largest term, since the two sides may cancel to roundoff
        scale = max(_sup(t) for t in terms + [lhs])
        out.append(_sup(lhs - sum(terms)) / scale if scale > 0 else 0.0)
    return np.array(out)


def dual_series(w: BlochWave) -> list:
    """Coefficients zeta*_1..zeta*_S of the dual wave exp(-kz - ell zbar) zeta*(k).

    They solve the triangular system [k^0] (zeta*(k) (k + d)^s zeta(k)) = delta_{s0}.
    """
    series = w.series()
    dual = [np.ones((w.shape.nx, w.shape.ny), dtype=complex)]
    for s in range(1, w.S + 1):
        P = series.power_action(s, 0)
        acc = 0.0
        for a in range(s):
            acc = acc + dual[a] * P[a]
        dual.append(-acc)
    return [GridFunction(w.shape, d) for d in dual[1:]]


def dual_conditions(w: BlochWave, dual: list, smax: int, relative: bool = True) -> np.ndarray:
    """Sup norm of [k^0](zeta* (k + d)^s zeta) - delta_{s0} for s = 0..smax.

    The powers (k + d)^s are built by applying (k + d) repeatedly, independently
    of the binomial expansion used in :func:`dual_series`.  With ``relative``
    each level is divided by max(1, largest product term entering it).
    """
    shape = w.shape
    zeta = w.zeta_list()
    left = [np.ones_like(zeta[0])] + [d.values for d in dual]
    current = {-t: zeta[t] for t in range(len(zeta))}
    out = []
    for s in range(smax + 1):
        val = k0_coefficient(left, current) - (1.0 if s == 0 else 0.0)
        scale = 1.0
        if relative:
            scale = max([1.0] + [_sup(left[t]) * _sup(current[t]) for t in range(len(left)) if t in current])
        out.append(_sup(val) / scale)
        nxt = {}
        for b, c in current.items():
            nxt[b + 1] = nxt.get(b + 1, 0.0) + c
            nxt[b] = nxt.get(b, 0.0) + derivative_values(c, shape, "z")
        current = nxt
    return np.array(out)


@dataclass(frozen=True)
class SelfDualResult:
    """Outcome of :func:`self_dualize`.

    ``ratio_spreads[s-1]`` is the relative variation over the torus of the
    k^-s coefficient of zeta(-k)/zeta*(k); only levels up to ``converged``
    (= S - 2) enter the constancy and parity gates.
    """

    wave: BlochWave
    h: FormalSeries
    rho: FormalSeries
    ratio_spread: float
    ratio_spreads: np.ndarray
    converged: int


def converged_order(S: int) -> int:
    """Highest power of 1/k whose residue data is fully determined at series order S."""
    return max(S - 2, 1)


def identifying_series(w: BlochWave) -> tuple:
    """Pointwise series zeta(-k) / zeta*(k), its torus means and per-level scales.

    The scale of level s is the largest product sup|zeta(-k)_a| sup|zeta*_b|
    over a + b = s, the natural size of the terms that cancel in the quotient.
    """
    S = w.S
    refl = series_reflect(w.zeta_list())
    dual = [np.ones((w.shape.nx, w.shape.ny), dtype=complex)] + [d.values for d in dual_series(w)]
    ratio = series_divide(refl, dual, S)
    means = [complex(np.mean(r)) for r in ratio]
    sr = [_sup(a) for a in refl]
    sd = [_sup(b) for b in dual]
    scales = [max(1.0, max(sr[a] * sd[s - a] for a in range(s + 1))) for s in range(S + 1)]
    return ratio, means, scales


def self_dualize(w: BlochWave, ratio_tol: float = RATIO_TOL, odd_tol: float = ODD_TOL) -> SelfDualResult:
    """Rescale the wave by an even constant series so that zeta*(k) = zeta(-k).

    The ratio h(k) = zeta(-k) / zeta*(k) must be constant over the torus and
    even in k; the wave is multiplied by the even series rho with rho^2 = 1/h.
    Coefficients of h above ``converged_order(S)`` are used as computed but
    are not gated.

    Raises
    ------
    NotConstantRatio
        If a converged coefficient of the ratio varies over the grid by more
        than ``ratio_tol`` relative to its level scale.
    OddObstruction
        If a converged odd coefficient of h exceeds ``odd_tol`` relative to its level scale.
    """
    S = w.S
    top = converged_order(S)
    ratio, means, scales = identifying_series(w)
    spreads = np.array([_sup(ratio[s] - means[s]) / scales[s] for s in range(1, S + 1)])
    spread = float(np.max(spreads[:top]))
    if spread > ratio_tol:
        raise NotConstantRatio(f"ratio series varies over the torus by {spread:.3e}")
    h = FormalSeries(tuple(means[1:]), const=1.0)
    odd = max((abs(means[s]) / scales[s] for s in range(1, top + 1) if s % 2), default=0.0)
    if odd > odd_tol:
        raise OddObstruction(f"odd coefficients of h reach {odd:.3e} relative to their level")
    # even-only inverse square root, computed on scalars
    h_even = [1.0 + 0j] + [means[s] if s % 2 == 0 else 0.0 for s in range(1, S + 1)]
    inv = series_divide([1.0 + 0j], h_even, S)
    rho = series_sqrt(inv, S)
    rho = [complex(c) if s % 2 == 0 else 0.0j for s, c in enumerate(rho)]
    new = series_product(w.zeta_list(), rho, S)
    zetas = [GridFunction(w.shape, np.asarray(z) * np.ones((w.shape.nx, w.shape.ny))) for z in new[1:]]
    wave = BlochWave(w.u, zetas, np.array(w.ells), w.defects, self_dual=True)
    return SelfDualResult(wave, h, FormalSeries(tuple(rho[1:]), const=1.0), spread, spreads, top)


def self_duality_defect(w: BlochWave, relative: bool = True) -> np.ndarray:
    """|zeta*_s - (-1)^s zeta_s| for s = 1..S.

    With ``relative`` (default) each level is divided by max(1, sup|zeta_s|),
    since the coefficients grow roughly geometrically with s.
    """
    dual = dual_series(w)
    out = []
    for s, (d, z) in enumerate(zip(dual, w.zetas), start=1):
        err = _sup(d.values - (-1) ** s * z.values)
        out.append(err / max(1.0, _sup(z.values)) if relative else err)
    return np.array(out)


def reflected_residue(w: BlochWave, i: int, m: int = 0) -> GridFunction:
    """res at infinity of psi(-k) d^i psi(k) dk / k^(2m+1), i.e. -[k^2m](zeta(-k) (k + d)^i zeta(k))."""
    left = series_reflect(w.zeta_list())
    P = w.series().power_action(i, 2 * m - w.S)
    return GridFunction(w.shape, -k0_coefficient(left, P, 2 * m))


def multiplier_exponents(w: BlochWave, direction: str = "x") -> FormalSeries:
    """k-series of log of the Floquet multiplier: k + ell(k) along x, tau k + conj(tau) ell(k) along y."""
    tau = w.shape.tau
    if direction == "x":
        return FormalSeries(tuple(w.ells), head=1.0)
    if direction == "y":
        return FormalSeries(tuple(np.conj(tau) * np.asarray(w.ells)), head=tau)
    raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")
