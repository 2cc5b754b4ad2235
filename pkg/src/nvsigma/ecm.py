"""Spectral curves of the elliptic Calogero-Moser system.

The Lax matrix depends on a spectral parameter alpha on the elliptic curve
C / (Z + tau Z).  Its characteristic polynomial R(k, alpha) = det(k - L(alpha))
is compared with the representation

    R(k, alpha) = f(k + sign * zeta(beta), beta),   beta = orientation * alpha,
    f(p, beta) = F(p, beta) / sigma(beta),
    F(p, beta) = sum_{n=0}^{N} (1/n!) sigma^(n)(beta) H^(n)(p),

with H(p) = p^N + I_1 p^(N-1) + ... + I_N.  With the Lax matrix below the
identity holds for every N at sign = -1, orientation = -1.  For N <= 2, R is
even in alpha and orientation +1 works as well; for N >= 3 it does not.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .elliptic import EllipticLattice, lattice
from .errors import ConstraintsNotMet, DistinctnessWarning, IllConditioned, SingularAlpha

SINGULAR_ATOL = 1e-12
COND_LIMIT = 1e10
TURNING_TOL = 1e-8
ROOT_GAP = 1e-6
DEFAULT_SIGN = -1
DEFAULT_ORIENTATION = -1


@dataclass(frozen=True)
class ECMConfig:
    """Particle positions z, momenta rho and coupling nu on the lattice Z + tau Z."""

    z: tuple
    rho: tuple
    tau: complex = 1j
    nu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(complex(v) for v in self.z))
        object.__setattr__(self, "rho", tuple(complex(v) for v in self.rho))
        object.__setattr__(self, "tau", complex(self.tau))
        if len(self.z) < 1:
            raise ValueError("at least one particle is required")
        if len(self.z) != len(self.rho):
            raise ValueError(f"{len(self.z)} positions but {len(self.rho)} momenta")
        lat = lattice(self.tau)
        for i in range(self.N):
            for j in range(i + 1, self.N):
                if lat.lattice_distance(self.z[i] - self.z[j]) < SINGULAR_ATOL:
                    raise ValueError(f"particles {i} and {j} coincide modulo the lattice")

    @property
    def N(self) -> int:
        return len(self.z)

    def permuted(self, order) -> "ECMConfig":
        return ECMConfig(tuple(self.z[i] for i in order), tuple(self.rho[i] for i in order), self.tau, self.nu)


@dataclass(frozen=True)
class ECMIntegrals:
    """Coefficients I_1..I_N of H(p) = p^N + sum_l I_l p^(N-l)."""

    I: tuple
    tau: complex = 1j

    def __post_init__(self):
        object.__setattr__(self, "I", tuple(complex(v) for v in self.I))
        object.__setattr__(self, "tau", complex(self.tau))
        if len(self.I) < 1:
            raise ValueError("at least one integral is required")

    @property
    def N(self) -> int:
        return len(self.I)

    def h_coefficients(self) -> np.ndarray:
        """Coefficients of H in increasing powers of p."""
        return np.array([1.0 + 0j] + list(self.I))[::-1]

    def odd_part(self) -> float:
        return max((abs(c) for l, c in enumerate(self.I, start=1) if l % 2), default=0.0)


# Lax matrix ------------------------------------------------------------------

def _check_alpha(lat: EllipticLattice, alpha, diffs=()):
    if lat.lattice_distance(alpha) < SINGULAR_ATOL:
        raise SingularAlpha(f"alpha = {alpha} is a lattice point")
    for d in diffs:
        for s in (alpha + d, alpha - d):
            if lat.lattice_distance(s) < SINGULAR_ATOL:
                raise SingularAlpha(f"alpha = {alpha} collides with a particle difference")


def lax(c: ECMConfig, alpha) -> np.ndarray:
    """L_ij = rho_i delta_ij + nu sigma(alpha + z_i - z_j) / (sigma(z_i - z_j) sigma(alpha)) off the diagonal."""
    lat = lattice(c.tau)
    alpha = complex(alpha)
    z = np.array(c.z)
    diff = z[:, None] - z[None, :]
    off = ~np.eye(c.N, dtype=bool)
    _check_alpha(lat, alpha, diff[off])
    L = np.diag(np.array(c.rho, dtype=complex))
    if c.N > 1:
        d = diff[off]
        L[off] = c.nu * lat.sigma(alpha + d) / (lat.sigma(d) * lat.sigma(alpha))
    return L


def charpoly_direct(c: ECMConfig, k, alpha) -> complex:
    """det(k - L(alpha)); numpy's determinant is an LU factorization with partial pivoting."""
    L = lax(c, alpha)
    return complex(np.linalg.det(k * np.eye(c.N) - L))


def charpoly_coefficients(c: ECMConfig, alpha, radius: float = 1.0) -> np.ndarray:
    """Coefficients of R(k, alpha) in increasing powers of k.

    Interpolates charpoly_direct on N+1 points of a circle by a discrete Fourier transform.
    """
    n = c.N + 1
    ks = radius * np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.array([charpoly_direct(c, k, alpha) for k in ks])
    return np.fft.fft(vals) / n / radius ** np.arange(n)


# sigma derivatives -----------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _ratio_polynomials(n: int, g2: complex) -> tuple:
    """sigma^(j)/sigma for j = 0..n as polynomials in (zeta, p, p').

    Each polynomial is a dict {(a, b, c): coefficient} for zeta^a p^b p'^c.
    Uses sigma' = zeta sigma, zeta' = -p and p'' = 6 p^2 - g2/2.
    """
    def derivative(poly):
        out: dict = {}

        def add(key, val):
            out[key] = out.get(key, 0.0) + val

        for (a, b, c), coef in poly.items():
            if a:
                add((a - 1, b + 1, c), -a * coef)
            if b:
                add((a, b - 1, c + 1), b * coef)
            if c:
                add((a, b + 2, c - 1), 6 * c * coef)
                add((a, b, c - 1), -0.5 * g2 * c * coef)
        return out

    polys = [{(0, 0, 0): 1.0}]
    for _ in range(n):
        prev = polys[-1]
        nxt = derivative(prev)
        for (a, b, c), coef in prev.items():
            nxt[(a + 1, b, c)] = nxt.get((a + 1, b, c), 0.0) + coef
        polys.append({k: v for k, v in nxt.items() if v != 0})
    return tuple(polys)


def sigma_derivative_ratios(alpha, n: int, tau=1j) -> np.ndarray:
    """[sigma^(j)(alpha) / sigma(alpha) for j = 0..n], from the closed zeta/p chain."""
    lat = lattice(tau)
    _check_alpha(lat, complex(alpha))
    zeta = complex(lat.zeta(alpha))
    p = complex(lat.wp(alpha))
    dp = complex(lat.wp_prime(alpha))
    out = []
    for poly in _ratio_polynomials(n, lat.g2):
        out.append(sum(coef * zeta**a * p**b * dp**c for (a, b, c), coef in poly.items()))
    return np.array(out)


@functools.lru_cache(maxsize=None)
def _sigma_taylor_cached(tau: complex, order: int) -> tuple:
    lat = lattice(tau)
    # Laurent series p = z^-2 + sum_{k>=2} c_k z^(2k-2)
    K = order // 2 + 2
    c = {2: lat.g2 / 20, 3: lat.g3 / 28}
    for k in range(4, K + 1):
        c[k] = 3.0 / ((2 * k + 1) * (k - 3)) * sum(c[m] * c[k - m] for m in range(2, k - 1))
    # log(sigma/z) = -sum c_k z^(2k) / ((2k-1) 2k)
    logs = np.zeros(order + 1, dtype=complex)
    for k in range(2, K + 1):
        if 2 * k <= order:
            logs[2 * k] = -c[k] / ((2 * k - 1) * 2 * k)
    # exp of a power series with zero constant term: e' = e * logs'
    e = np.zeros(order + 1, dtype=complex)
    e[0] = 1.0
    for m in range(1, order + 1):
        e[m] = sum(j * logs[j] * e[m - j] for j in range(1, m + 1)) / m
    s = np.zeros(order + 2, dtype=complex)
    s[1:] = e
    return tuple(s[: order + 1])


def sigma_taylor(order: int, tau=1j) -> np.ndarray:
    """Taylor coefficients s_0..s_order of sigma at 0 (s_1 = 1, s_5 = -g2/240, ...)."""
    return np.array(_sigma_taylor_cached(complex(tau), int(order)))


# sigma representation -------------------------------------------------------

def _h_derivatives(h: np.ndarray, p) -> np.ndarray:
    """[H^(n)(p) for n = 0..deg] for H with increasing coefficients h."""
    N = len(h) - 1
    out = []
    coeffs = h.copy()
    for _ in range(N + 1):
        out.append(np.polynomial.polynomial.polyval(p, coeffs))
        coeffs = np.polynomial.polynomial.polyder(coeffs) if len(coeffs) > 1 else np.zeros(1)
    return np.array(out)


def entire_F(I: ECMIntegrals, p, alpha) -> complex:
    """F(p, alpha) = sum_n sigma^(n)(alpha) H^(n)(p) / n!."""
    lat = lattice(I.tau)
    ratios = sigma_derivative_ratios(alpha, I.N, I.tau)
    H = _h_derivatives(I.h_coefficients(), complex(p))
    total = sum(ratios[n] * H[n] / math.factorial(n) for n in range(I.N + 1))
    return complex(lat.sigma(alpha) * total)


def reduced_f(I: ECMIntegrals, p, alpha) -> complex:
    """f(p, alpha) = F(p, alpha) / sigma(alpha), evaluated without forming sigma."""
    ratios = sigma_derivative_ratios(alpha, I.N, I.tau)
    H = _h_derivatives(I.h_coefficients(), complex(p))
    return complex(sum(ratios[n] * H[n] / math.factorial(n) for n in range(I.N + 1)))


def charpoly_sigma(I: ECMIntegrals, k, alpha, sign: int = DEFAULT_SIGN,
                   orientation: int = DEFAULT_ORIENTATION) -> complex:
    """f(k + sign * zeta(beta), beta) with beta = orientation * alpha."""
    if sign not in (1, -1) or orientation not in (1, -1):
        raise ValueError("sign and orientation must be +1 or -1")
    beta = orientation * complex(alpha)
    zeta = complex(lattice(I.tau).zeta(beta))
    return reduced_f(I, k + sign * zeta, beta)


def _design_row(N: int, tau, k, alpha, sign: int, orientation: int) -> tuple:
    """f = base + sum_l I_l * row[l-1] at one sample."""
    beta = orientation * complex(alpha)
    zeta = complex(lattice(tau).zeta(beta))
    p = k + sign * zeta
    ratios = sigma_derivative_ratios(beta, N, tau)
    weights = ratios / np.array([math.factorial(n) for n in range(N + 1)])

    def apply(power):
        # sum_n weights[n] * d^n/dp^n p^power
        acc = 0.0
        for n in range(power + 1):
            acc += weights[n] * math.perm(power, n) * p ** (power - n)
        return acc

    base = apply(N)
    row = np.array([apply(N - l) for l in range(1, N + 1)])
    return complex(base), row


def sample_points(N: int, tau=1j, count: int | None = None, seed: int = 0) -> list:
    """Deterministic (k, alpha) samples with alpha kept away from lattice points."""
    rng = np.random.default_rng(seed)
    lat = lattice(tau)
    count = count or 4 * N
    out = []
    while len(out) < count:
        s, t = rng.uniform(-0.45, 0.45, size=2)
        alpha = s + t * lat.tau
        if lat.lattice_distance(alpha) < 0.1:
            continue
        k = complex(rng.normal(), rng.normal())
        out.append((k, complex(alpha)))
    return out


def fit_from_samples(N: int, tau, samples: list, values, sign: int = DEFAULT_SIGN,
                     orientation: int = DEFAULT_ORIENTATION) -> tuple:
    """Least-squares I from values of R at (k, alpha) samples; returns (ECMIntegrals, max residual).

    Raises
    ------
    IllConditioned
        If the sample matrix has condition number above 1e10.
    """
    rows, rhs = [], []
    for (k, alpha), val in zip(samples, values):
        base, row = _design_row(N, tau, k, alpha, sign, orientation)
        rows.append(row)
        rhs.append(val - base)
    A = np.array(rows)
    b = np.array(rhs)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditioned(f"sample matrix condition number {cond:.3e}")
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = float(np.max(np.abs(A @ sol - b))) if len(b) else 0.0
    return ECMIntegrals(tuple(sol), tau), resid


def fit_integrals(c: ECMConfig, sign: int = DEFAULT_SIGN, count: int | None = None, seed: int = 0,
                  orientation: int = DEFAULT_ORIENTATION) -> tuple:
    """Integrals I with charpoly_direct = charpoly_sigma on at least 3N samples; returns (I, max residual)."""
    count = max(count or 4 * c.N, 3 * c.N)
    samples = sample_points(c.N, c.tau, count, seed)
    values = [charpoly_direct(c, k, a) for k, a in samples]
    return fit_from_samples(c.N, c.tau, samples, values, sign, orientation)


def involution_residual(I: ECMIntegrals, count: int = 16, seed: int = 1) -> float:
    """max |F(-p, -alpha) - (-1)^(N+1) F(p, alpha)| over samples, relative to max(1, |F|).

    sigma^(n) has parity (-1)^(n+1), so for I_odd = 0 the function F picks up
    (-1)^(N+1) under (p, alpha) -> (-p, -alpha): it is odd for even N.
    """
    worst = 0.0
    sgn = (-1) ** (I.N + 1)
    for k, alpha in sample_points(I.N, I.tau, count, seed):
        a = entire_F(I, k, alpha)
        b = entire_F(I, -k, -alpha)
        worst = max(worst, abs(b - sgn * a) / max(1.0, abs(a)))
    return worst


# turning points ----------------------------------------------------------------

def taylor_block(I: ECMIntegrals, order: int) -> np.ndarray:
    """T[i, j] = d_alpha^i d_p^j F(0, 0) for i, j = 0..order, exact from Taylor series."""
    s = sigma_taylor(2 * order + I.N + 2, I.tau)
    h = I.h_coefficients()
    N = I.N
    T = np.zeros((order + 1, order + 1), dtype=complex)
    for i in range(order + 1):
        for j in range(order + 1):
            acc = 0.0
            for n in range(N + 1):
                a, b = n + i, n + j
                if b > N or a >= len(s):
                    continue
                acc += s[a] * math.factorial(a) * h[b] * math.factorial(b) / math.factorial(n)
            T[i, j] = acc
    return T


def turning_constraints(I: ECMIntegrals, n: int = 1) -> np.ndarray:
    """Table of d_alpha^i d_p^j F(0, 0) with i + j <= 2n; entries with i + j > 2n are NaN."""
    T = taylor_block(I, 2 * n)
    i, j = np.indices(T.shape)
    T[i + j > 2 * n] = np.nan
    return T


def turning_defect(I: ECMIntegrals, n: int = 1) -> float:
    """Largest |entry| of the turning table, skipping the identically zero entry F(0, 0)."""
    T = turning_constraints(I, n)
    T[0, 0] = 0.0
    return float(np.nanmax(np.abs(T)))


def cubic_coefficients(I: ECMIntegrals) -> np.ndarray:
    """(b1, b2, b3, b4): F = b1 p^3 + b2 p^2 alpha + b3 p alpha^2 + b4 alpha^3 + ... in the cubic block."""
    T = taylor_block(I, 3)
    return np.array([T[0, 3] / 6, T[1, 2] / 2, T[2, 1] / 2, T[3, 0] / 6])


def cubic_roots(b) -> np.ndarray:
    """Roots g of b1 g^3 + b2 g^2 + b3 g + b4 via companion-matrix eigenvalues."""
    b = np.asarray(b, dtype=complex)
    if abs(b[0]) == 0:
        raise ValueError("leading cubic coefficient vanishes")
    companion = np.zeros((3, 3), dtype=complex)
    companion[0, :] = -b[1:] / b[0]
    companion[1, 0] = 1.0
    companion[2, 1] = 1.0
    return np.linalg.eigvals(companion)


def branch_cubic(I: ECMIntegrals, tol: float = TURNING_TOL) -> tuple:
    """Cubic coefficients b1..b4 and the three slopes p = g alpha of the branches through (0, 0).

    Raises
    ------
    ConstraintsNotMet
        If the first-order turning conditions fail beyond ``tol``.
    """
    if I.N % 2:
        raise ConstraintsNotMet("turning-point constraints need an even particle count")
    if I.odd_part() > tol:
        raise ConstraintsNotMet(f"odd integrals reach {I.odd_part():.3e}")
    defect = turning_defect(I, 1)
    if defect > tol:
        raise ConstraintsNotMet(f"first-order turning conditions violated by {defect:.3e}")
    b = cubic_coefficients(I)
    roots = cubic_roots(b)
    gaps = [abs(roots[i] - roots[j]) for i in range(3) for j in range(i + 1, 3)]
    if min(gaps) < ROOT_GAP:
        warnings.warn(f"cubic roots are not distinct (gap {min(gaps):.3e})", DistinctnessWarning, stacklevel=2)
    return b, roots


def turning_solution(N: int, tau=1j, free=None) -> ECMIntegrals:
    """Even integrals solving the first-order turning conditions.

    The conditions d_p F(0,0) = d_alpha F(0,0) = 0 are linear in I_2, I_4, ...;
    the last two even integrals are solved for and any earlier ones are taken
    from ``free`` (default zeros).
    """
    if N % 2 or N < 4:
        raise ConstraintsNotMet("first-order turning conditions are solvable only for even N >= 4")
    evens = list(range(2, N + 1, 2))
    free = list(free) if free is not None else [0.0] * (len(evens) - 2)
    if len(free) != len(evens) - 2:
        raise ValueError(f"expected {len(evens) - 2} free even integrals")

    def table(vals):
        I = [0.0] * N
        for l, v in zip(evens, vals):
            I[l - 1] = v
        T = taylor_block(ECMIntegrals(tuple(I), tau), 1)
        return np.array([T[0, 1], T[1, 0]])

    base = list(free) + [0.0, 0.0]
    t0 = table(base)
    A = np.zeros((2, 2), dtype=complex)
    for col in range(2):
        probe = list(base)
        probe[len(free) + col] = 1.0
        A[:, col] = table(probe) - t0
    sol = np.linalg.solve(A, -t0)
    vals = list(free) + list(sol)
    I = [0.0] * N
    for l, v in zip(evens, vals):
        I[l - 1] = v
    return ECMIntegrals(tuple(I), tau)


def cmsing_value(I: ECMIntegrals, j: int, sign: int = DEFAULT_SIGN, at=None) -> complex:
    """R(0, omega_j) through :func:`charpoly_sigma`; vanishes when the curve passes through (0, omega_j).

    ``at`` overrides the half period with a lattice translate of it.
    """
    if j not in (1, 2, 3):
        raise ValueError("half-period index must be 1, 2 or 3")
    omega = lattice(I.tau).half_periods[j - 1] if at is None else at
    return charpoly_sigma(I, 0.0, omega, sign)


def secant_root(fn, x0: complex, x1: complex, tol: float = 1e-14, maxiter: int = 50) -> complex:
    """Secant iteration for a complex scalar equation."""
    f0, f1 = fn(x0), fn(x1)
    for _ in range(maxiter):
        if f1 == f0:
            break
        x0, x1 = x1, x1 - f1 * (x1 - x0) / (f1 - f0)
        f0, f1 = f1, fn(x1)
        if abs(f1) < tol:
            break
    return x1


# Floquet multipliers -------------------------------------------------------------

def floquet(k, alpha, direction: str = "x", tau=1j) -> complex:
    """w_x = exp(k - zeta(alpha) + 2 zeta(1/2) alpha), w_y = exp(tau (k - zeta(alpha)) + 2 zeta(tau/2) alpha)."""
    lat = lattice(tau)
    _check_alpha(lat, complex(alpha))
    zeta = complex(lat.zeta(alpha))
    if direction == "x":
        return complex(np.exp(k - zeta + 2 * lat.eta1 * alpha))
    if direction == "y":
        return complex(np.exp(lat.tau * (k - zeta) + 2 * lat.eta2 * alpha))
    raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")


def gluing_ok(w_plus, w_minus, G, tol: float = 1e-10) -> bool:
    """True when G = W+ G W- entrywise for diagonal W+ and W- given by their diagonals or as matrices."""
    G = np.asarray(G, dtype=complex)
    wp = np.asarray(w_plus, dtype=complex)
    wm = np.asarray(w_minus, dtype=complex)
    if wp.ndim == 2:
        if np.max(np.abs(wp - np.diag(np.diag(wp)))) > tol:
            raise ValueError("W+ must be diagonal")
        wp = np.diag(wp)
    if wm.ndim == 2:
        if np.max(np.abs(wm - np.diag(np.diag(wm)))) > tol:
            raise ValueError("W- must be diagonal")
        wm = np.diag(wm)
    return bool(np.max(np.abs(G - wp[:, None] * G * wm[None, :])) <= tol * max(1.0, np.max(np.abs(G))))


# asymptotics near alpha = 0 -----------------------------------------------------

def c2_slope(c: ECMConfig, alphas=None) -> tuple:
    """Fit the k^(N-2) coefficient of R as A + B p(alpha); returns (B, A, max fit residual)."""
    lat = lattice(c.tau)
    if alphas is None:
        alphas = [a for _, a in sample_points(c.N, c.tau, 12, seed=3)]
    c2 = np.array([charpoly_coefficients(c, a)[c.N - 2] for a in alphas])
    P = np.array([complex(lat.wp(a)) for a in alphas])
    A = np.column_stack([np.ones_like(P), P])
    sol, *_ = np.linalg.lstsq(A, c2, rcond=None)
    resid = float(np.max(np.abs(A @ sol - c2)))
    return complex(sol[1]), complex(sol[0]), resid


def branch_exponents(c: ECMConfig, alphas=None, direction: complex = 1.0) -> np.ndarray:
    """Leading exponents a_i of the branches k_i(alpha) ~ -a_i / alpha as alpha -> 0.

    The k-roots of R(k, alpha) are tracked along alpha = t * direction and
    -alpha * k_i is fitted linearly in alpha; the intercepts are returned,
    sorted by real part.
    """
    if alphas is None:
        alphas = np.geomspace(1e-2, 1e-3, 8)
    alphas = np.asarray(alphas, dtype=float) * direction
    rows = []
    for a in alphas:
        coeffs = charpoly_coefficients(c, a, radius=1.0 / abs(a))
        roots = np.roots(coeffs[::-1])
        rows.append(np.sort_complex(-a * roots))
    rows = np.array(rows)
    A = np.column_stack([np.ones(len(alphas)), alphas])
    out = []
    for col in rows.T:
        sol, *_ = np.linalg.lstsq(A.astype(complex), col, rcond=None)
        out.append(sol[0])
    return np.array(sorted(out, key=lambda v: v.real))


def curve_report(I: ECMIntegrals, check_turning: int = 0) -> dict:
    """Curve summary with complex numbers as [re, im] pairs."""
    def pair(v):
        v = complex(v)
        return [v.real, v.imag]

    report = {
        "N": I.N,
        "I": [pair(v) for v in I.I],
        "involution_residual": involution_residual(I),
        "cmsing": [pair(cmsing_value(I, j)) for j in (1, 2, 3)],
    }
    if check_turning:
        T = turning_constraints(I, check_turning)
        report["turning_table"] = [[None if np.isnan(v.real) else pair(v) for v in row] for row in T]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DistinctnessWarning)
                b, roots = branch_cubic(I)
            report["cubic"] = {"b": [pair(v) for v in b], "roots": [pair(v) for v in roots]}
        except ConstraintsNotMet as exc:
            report["cubic"] = {"error": str(exc)}
    return report
