"""Dressing operator, self-duality constraint, hierarchy flows and conserved currents."""
from __future__ import annotations

import numpy as np

from .ba import BlochWave, bloch_wave, converged_order, self_dualize, series_reflect
from .errors import DepthExceedsSeries, F0Violation
from .pdo import PseudoDiffOp, adjoint, compose, invert_monic, plus_part, power
from .torus import GridFunction, derivative_values

DEFAULT_DEPTH = 6
EIGEN_TOL = 1e-9
F0_RTOL = 1e-7


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


def wave_operator(w: BlochWave, D: int) -> PseudoDiffOp:
    """Phi = 1 + sum_{s=1}^{D} zeta_s d^-s."""
    coeffs = {0: 1.0}
    for s in range(1, D + 1):
        coeffs[-s] = w.zetas[s - 1]
    return PseudoDiffOp(w.shape, coeffs, D)


def apply_to_wave(A: PseudoDiffOp, w: BlochWave, lowest: int) -> dict:
    """Coefficients of k^b, b >= ``lowest``, in exp(-kz - ell zbar) A psi.

    Each a_i d^i acts as a_i (k + d)^i on the series zeta(k).
    """
    series = w.series()
    out: dict = {}
    for i in A.orders:
        a = A.raw(i)
        for b, c in series.power_action(i, lowest).items():
            out[b] = out.get(b, 0.0) + a * c
    return out


def eigen_defect(L: PseudoDiffOp, w: BlochWave) -> np.ndarray:
    """Relative defect of L psi = k psi at powers k^1 .. k^-depth."""
    D = L.depth
    image = apply_to_wave(L, w, -D)
    zeta = w.zeta_list()
    scale = max(1.0, max(_sup(v) for v in image.values()))
    out = []
    for b in range(1, -D - 1, -1):
        target = zeta[1 - b] if 0 <= 1 - b < len(zeta) else 0.0
        out.append(_sup(image.get(b, 0.0) - target) / scale)
    return np.array(out)


def dress(w: BlochWave, D: int = DEFAULT_DEPTH, check: bool = True) -> PseudoDiffOp:
    """L = Phi d Phi^-1, computed as d - (d Phi) Phi^-1 to keep all orders down to -D exact.

    Raises
    ------
    DepthExceedsSeries
        If D > S - 1; the order -D coefficient needs zeta_{D+1}.
    """
    if D > w.S - 1:
        raise DepthExceedsSeries(f"depth {D} needs series order at least {D + 1}, wave has {w.S}")
    Phi = wave_operator(w, D)
    dPhi = PseudoDiffOp(w.shape, {-s: derivative_values(w.zetas[s - 1].values, w.shape, "z")
                                  for s in range(1, D + 1)}, D)
    L = PseudoDiffOp.partial(w.shape, 1, D) - compose(dPhi, invert_monic(Phi))
    L.floor = -D
    if check:
        defect = eigen_defect(L, w)
        if np.max(defect) > EIGEN_TOL:
            raise RuntimeError(f"dressed operator fails L psi = k psi (defect {np.max(defect):.3e})")
    return L


def bkp_residual(L: PseudoDiffOp) -> float:
    """Largest coefficient of L* + d L d^-1 over exact orders, relative to the scale of L."""
    shape, D = L.shape, L.depth
    d = PseudoDiffOp.partial(shape, 1, D)
    dinv = PseudoDiffOp.partial(shape, -1, D)
    conj = compose(compose(d, L), dinv)
    total = adjoint(L) + conj
    lowest = max(total.floor, -D)
    worst = 0.0
    for i in total.orders:
        if i >= lowest:
            worst = max(worst, _sup(total.raw(i)))
    return worst / max(L.scale(), 1e-300)


def flow_rhs(w: BlochWave, n: int, D: int = DEFAULT_DEPTH, L: PseudoDiffOp | None = None) -> tuple:
    """(dbar F1, F1, F0) with F1 = res L^(2n+1) and F0 its order-zero coefficient.

    Raises
    ------
    F0Violation
        If sup|F0| exceeds 1e-7 times the scale of L^(2n+1).
    """
    if 2 * n + 1 > D:
        raise DepthExceedsSeries(f"flow {n} needs depth at least {2 * n + 1}, got {D}")
    if L is None:
        L = dress(w, D)
    P = power(L, 2 * n + 1)
    F1 = P.coeff(-1)
    F0 = P.coeff(0)
    if F0.norm() > F0_RTOL * max(P.scale(), 1e-300):
        raise F0Violation(f"order-zero coefficient of L^{2 * n + 1} reaches {F0.norm():.3e} (scale {P.scale():.3e})")
    return F1.d("zbar"), F1, F0


def flow_velocity(u: GridFunction, n: int, S: int = 8, D: int = DEFAULT_DEPTH) -> GridFunction:
    """du/dt_n for the potential u, rebuilding the self-dual wave from scratch."""
    w = self_dualize(bloch_wave(u, S)).wave
    return flow_rhs(w, n, D)[0]


def flow_step(u: GridFunction, n: int, dt: float = 1e-3, S: int = 8, D: int = DEFAULT_DEPTH) -> GridFunction:
    """One classical fourth-order Runge-Kutta step of du/dt_n = dbar res L^(2n+1)."""
    k1 = flow_velocity(u, n, S, D)
    k2 = flow_velocity(u + (dt / 2) * k1, n, S, D)
    k3 = flow_velocity(u + (dt / 2) * k2, n, S, D)
    k4 = flow_velocity(u + dt * k3, n, S, D)
    return u + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def flow_bracket(u: GridFunction, n: int, m: int, dt: float = 1e-3, S: int = 8, D: int = DEFAULT_DEPTH) -> float:
    """Relative size of the Lie bracket of the t_n and t_m velocity fields at u.

    Each directional derivative DX[V] is a central difference along V scaled
    so that the perturbation has relative size ``dt``; the bracket
    DX_m[X_n] - DX_n[X_m] vanishes for commuting flows up to O(dt^2).
    """
    X = {k: flow_velocity(u, k, S, D) for k in (n, m)}

    def directional(k, V):
        h = dt * max(u.norm(), 1.0) / max(V.norm(), 1e-300)
        return (flow_velocity(u + h * V, k, S, D) - flow_velocity(u - h * V, k, S, D)) * (1 / (2 * h))

    a = directional(m, X[n])
    b = directional(n, X[m])
    scale = max(a.norm(), b.norm())
    return (a - b).norm() / scale if scale > 0 else 0.0


def plus_part_adjoint_defect(L: PseudoDiffOp, n: int) -> float:
    """sup of (L_+^(2n+1))* + d L_+^(2n+1) d^-1, relative to the scale of L_+^(2n+1)."""
    shape, D = L.shape, L.depth
    Lp = plus_part(power(L, 2 * n + 1))
    d = PseudoDiffOp.partial(shape, 1, D)
    dinv = PseudoDiffOp.partial(shape, -1, D)
    total = adjoint(Lp) + compose(compose(d, Lp), dinv)
    worst = max((_sup(total.raw(i)) for i in total.orders), default=0.0)
    return worst / max(Lp.scale(), 1e-300)


# currents ------------------------------------------------------------------------

def currents(w: BlochWave) -> tuple:
    """Coefficient dictionaries {power of k: field} of j_z and j_zbar.

    j_z    = psi(-k) d psi(k) - psi(k) d psi(-k)
    j_zbar = psi(-k) dbar psi(k) - psi(k) dbar psi(-k)

    with the exponentials cancelled, valid for odd ell(k).  Powers from k^1 down
    to k^(1-S) (j_z) and k^-S (j_zbar) are returned.
    """
    shape, S = w.shape, w.S
    zeta = w.zeta_list()
    refl = series_reflect(zeta)
    dz = [derivative_values(c, shape, "z") for c in zeta]
    dbz = [derivative_values(c, shape, "zbar") for c in zeta]
    drefl = series_reflect(dz)
    dbrefl = series_reflect(dbz)
    ells = [0.0] + list(w.ells)

    def prod(a, b, p):
        # [k^-p] of (sum a_s k^-s)(sum b_t k^-t)
        return sum(a[s] * b[p - s] for s in range(0, p + 1) if s < len(a) and p - s < len(b))

    jz, jzb = {}, {}
    for b in range(1, -S, -1):
        val = 2 * prod(refl, zeta, 1 - b)
        if b <= 0:
            val = val + prod(refl, dz, -b) - prod(zeta, drefl, -b)
        jz[b] = val
    for b in range(0, -S - 1, -1):
        acc = 0.0
        for j in range(1, -b + 1):
            acc = acc + ells[j] * prod(refl, zeta, -b - j)
        jzb[b] = 2 * acc + prod(refl, dbz, -b) - prod(zeta, dbrefl, -b)
    return jz, jzb


def current_check(w: BlochWave, D: int = DEFAULT_DEPTH, tol: float = 1e-8, mean_tol: float = 1e-9) -> dict:
    """Report comparing the current coefficients with the flow residues.

    Checks, each relative to the size of the quantities involved:
    ``J_vs_F1_n``: J_n = res L^(2n+1) where j_z = 2(k + sum_n J_n k^(-2n-1));
    ``conservation``: dbar j_z + d j_zbar = 0 at every converged power of k;
    ``odd_parity``: even powers of j_z vanish (k^0 carries no constant);
    ``mean_J_n``: the torus mean of J_n vanishes.

    Powers below k^-(S-2) depend on the unconverged top of the self-dual
    normalization and are left out.
    """
    shape = w.shape
    lowest = -converged_order(w.S)
    jz, jzb = currents(w)
    L = dress(w, D)
    report = {}

    def put(name, value, tolerance):
        report[name] = {"value": float(value), "tolerance": tolerance, "pass": bool(value <= tolerance)}

    put("leading_coefficient", _sup(jz[1] - 2.0), tol)
    n = 0
    while 2 * n + 1 <= D and -(2 * n + 1) in jz:
        J = jz[-(2 * n + 1)] / 2
        F1 = power(L, 2 * n + 1).coeff(-1).values
        scale = max(1.0, _sup(J), _sup(F1))
        put(f"J_vs_F1_{n}", _sup(J - F1) / scale, tol)
        put(f"mean_J_{n}", abs(np.mean(J)) / scale, mean_tol)
        n += 1
    worst_cons = 0.0
    for p, val in jz.items():
        if p not in jzb or p < lowest:
            continue
        a = derivative_values(val, shape, "zbar")
        b = derivative_values(jzb[p], shape, "z")
        worst_cons = max(worst_cons, _sup(a + b) / max(_sup(a), _sup(b), 1.0))
    put("conservation", worst_cons, tol)
    even = [_sup(v) / max(1.0, _sup(jz[p + 1]) if p + 1 in jz else 1.0)
            for p, v in jz.items() if p % 2 == 0 and p >= lowest]
    put("odd_parity", max(even, default=0.0), tol)
    return report
