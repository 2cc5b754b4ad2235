"""O(N) sigma-model maps on the torus and their verification.

The pairing (a, b) = sum_i a^i b^i is the complex bilinear form without
conjugation.  A solution satisfies (q, q) = 1 and (-d dbar + u) q = 0 with
u = -(d q, dbar q).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ba import BlochWave, WaveSeries, k0_coefficient, series_reflect
from .elliptic import InstantonData, fractional_linear, instanton_inverse, instanton_v, lattice
from .errors import DegenerateDenominator, FGViolation
from .pdo import binom, derivative_stack, plus_part, power
from .torus import GridFunction, TorusShape, derivative_values, read_csv, write_csv

UNIT_TOL = 1e-10
WM_TOL = 1e-7


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


@dataclass
class SphereMap:
    """N component fields q^1..q^N on a common torus grid."""

    q: list
    is_real: bool = True

    def __post_init__(self):
        if not self.q:
            raise ValueError("a sphere map needs at least one component")
        shape = self.q[0].shape
        if any(c.shape != shape for c in self.q):
            raise ValueError("components live on different tori")

    @property
    def N(self) -> int:
        return len(self.q)

    @property
    def shape(self) -> TorusShape:
        return self.q[0].shape

    def stack(self) -> np.ndarray:
        return np.stack([c.values for c in self.q])

    def unit_defect(self) -> float:
        """sup |(q, q) - 1|."""
        return _sup(np.sum(self.stack() ** 2, axis=0) - 1.0)

    def reality_defect(self) -> float:
        return _sup(self.stack().imag)

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for i, c in enumerate(self.q, start=1):
            name = f"q{i}.csv"
            write_csv(c, directory / name)
            names.append(name)
        path = directory / "map.json"
        path.write_text(json.dumps({"N": self.N, "is_real": self.is_real, "components": names}, indent=2),
                        encoding="utf-8")
        return path

    @classmethod
    def load(cls, directory) -> "SphereMap":
        directory = Path(directory)
        manifest = json.loads((directory / "map.json").read_text(encoding="utf-8"))
        return cls([read_csv(directory / n) for n in manifest["components"]], manifest["is_real"])


def pairing(a: list, b: list) -> np.ndarray:
    """Bilinear pairing of two lists of arrays."""
    return sum(x * y for x, y in zip(a, b))


# construction ---------------------------------------------------------------

def stereographic_values(v, vbar=None, vinv=None, vbarinv=None) -> np.ndarray:
    """Components (q1, q2, q3) of the stereographic lift of v as a (3, ...) array.

    Where |v| > 1 (or v is not finite) the inverse w = 1/v is used, which keeps
    the formulas finite at the poles of v.  ``vinv`` may be supplied when 1/v
    is known independently (e.g. finite at the poles).
    """
    v = np.asarray(v, dtype=complex)
    vbar = np.conj(v) if vbar is None else np.asarray(vbar, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = 1.0 / v if vinv is None else np.asarray(vinv, dtype=complex)
        wbar = 1.0 / vbar if vbarinv is None else np.asarray(vbarinv, dtype=complex)
        use_inv = ~np.isfinite(v) | (np.abs(v) > 1.0)
        vv = np.where(use_inv, 0.0, v)
        vb = np.where(use_inv, 0.0, vbar)
        ww = np.where(use_inv, w, 0.0)
        wb = np.where(use_inv, wbar, 0.0)
        d1 = 1 + vv * vb
        d2 = ww * wb + 1
        q1 = np.where(use_inv, (wb + ww) / d2, (vv + vb) / d1)
        q2 = np.where(use_inv, (wb - ww) / (1j * d2), (vv - vb) / (1j * d1))
        q3 = np.where(use_inv, (ww * wb - 1) / d2, (1 - vv * vb) / d1)
    return np.stack([q1, q2, q3])


def stereographic(shape: TorusShape, v, vbar=None, vinv=None) -> SphereMap:
    """Sphere map from samples of v on the grid; real when ``vbar`` is omitted."""
    q = stereographic_values(v, vbar, vinv, None if vinv is None else np.conj(vinv))
    return SphereMap([GridFunction(shape, c) for c in q], is_real=vbar is None)


def instanton_map(d: InstantonData, shape: TorusShape) -> SphereMap:
    """Stereographic lift of the elliptic factor v(z) sampled on the grid."""
    if abs(complex(shape.tau) - d.tau) > 1e-14:
        raise ValueError("instanton data and torus have different moduli")
    z = shape.z()
    L = lattice(d.tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = instanton_inverse(d, z)
    near_pole = np.zeros(z.shape, dtype=bool)
    for b in d.b:
        near_pole |= L.lattice_distance(z - b) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(near_pole, np.inf, 0.0)
        safe = ~near_pole
        v = v.astype(complex)
        v[safe] = instanton_v(d, z[safe]) if np.any(safe) else v[safe]
    return stereographic(shape, v, vinv=inv)


def _instanton_samples(d: InstantonData, shape: TorusShape) -> tuple:
    z = shape.z()
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = instanton_inverse(d, z)
        v = np.where(np.abs(inv) < 1.0, 1.0 / inv, 0.0).astype(complex)
    small = np.abs(inv) >= 1.0
    if np.any(small):
        v[small] = instanton_v(d, z[small])
    return v, inv


def transformed_instanton_map(d: InstantonData, shape: TorusShape, c: complex, e: complex) -> SphereMap:
    """Stereographic lift of (c v + e) / (-conj(e) v + conj(c)), finite at the poles of v."""
    fractional_linear(0.0, c, e)
    v, inv = _instanton_samples(d, shape)
    big = np.abs(v) > 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.where(big, c + e * inv, c * v + e)
        den = np.where(big, -np.conj(e) + np.conj(c) * inv, -np.conj(e) * v + np.conj(c))
        vt = num / den
        vt_inv = den / num
    return stereographic(shape, vt, vinv=vt_inv)


# potential and equations of motion ------------------------------------------

def potential(m: SphereMap) -> GridFunction:
    """u = -(d q, dbar q)."""
    acc = 0.0
    for c in m.q:
        acc = acc + derivative_values(c.values, m.shape, "z") * derivative_values(c.values, m.shape, "zbar")
    return GridFunction(m.shape, -acc)


def log_potential(shape: TorusShape, v, vbar=None) -> GridFunction:
    """d dbar log(1 + v vbar), the classical expression for instanton potentials."""
    v = np.asarray(v, dtype=complex)
    vbar = np.conj(v) if vbar is None else vbar
    f = np.log(1 + v * vbar)
    return GridFunction(shape, derivative_values(derivative_values(f, shape, "zbar"), shape, "z"))


def instanton_potential_closed_form(d: InstantonData, shape: TorusShape) -> GridFunction:
    """-2 |v'|^2 / (1 + |v|^2)^2 = -2 d dbar log(1 + |v|^2) from the exact derivative of v.

    v'/v = sum zeta(z - a_i) - sum zeta(z - b_i); where |v| > 1 the same
    expression is evaluated through w = 1/v.  At grid points on a zero (pole)
    the value is |v'(a)|^2 (|w'(b)|^2) from the sigma product.
    """
    L = lattice(d.tau)
    z = shape.z()
    on_zero = [L.lattice_distance(z - a) < 1e-12 for a in d.a]
    on_pole = [L.lattice_distance(z - b) < 1e-12 for b in d.b]
    special = np.zeros(z.shape, dtype=bool)
    for m in on_zero + on_pole:
        special |= m
    out = np.zeros(z.shape)
    zg = z[~special]
    if zg.size:
        g = sum(L.zeta(zg - a) for a in d.a) - sum(L.zeta(zg - b) for b in d.b)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = instanton_inverse(d, zg)
        small = np.abs(w) >= 1.0
        val = np.empty(zg.shape)
        if np.any(small):
            v = instanton_v(d, zg[small])
            val[small] = np.abs(v * g[small]) ** 2 / (1 + np.abs(v) ** 2) ** 2
        big = ~small
        if np.any(big):
            wb = w[big]
            val[big] = np.abs(wb * g[big]) ** 2 / (1 + np.abs(wb) ** 2) ** 2
        out[~special] = val
    for i, mask in enumerate(on_zero):
        if np.any(mask):
            a = d.a[i]
            dv = d.A * np.prod([L.sigma(a - x) for j, x in enumerate(d.a) if j != i]) \
                / np.prod([L.sigma(a - b) for b in d.b])
            out[mask] = abs(dv) ** 2
    for i, mask in enumerate(on_pole):
        if np.any(mask):
            b = d.b[i]
            dw = np.prod([L.sigma(b - x) for j, x in enumerate(d.b) if j != i]) \
                / (d.A * np.prod([L.sigma(b - a) for a in d.a]))
            out[mask] = abs(dw) ** 2
    return GridFunction(shape, -2.0 * out)


def schrodinger_residual(m: SphereMap, u: GridFunction) -> float:
    """max_i sup|(-d dbar + u) q^i| / (sup|d dbar q^i| + sup|u q^i|)."""
    worst = 0.0
    for c in m.q:
        lap = derivative_values(derivative_values(c.values, m.shape, "zbar"), m.shape, "z")
        uq = u.values * c.values
        scale = _sup(lap) + _sup(uq)
        if scale == 0.0:
            continue
        worst = max(worst, _sup(uq - lap) / scale)
    return worst


# moments ----------------------------------------------------------------------

def moments(m: SphereMap, M: int) -> list:
    """T_i = (q, d^i q) for i = 0..M."""
    if M > 8:
        raise ValueError("moments beyond order 8 are dominated by spectral noise")
    stacks = [derivative_stack(c.values, m.shape, M + 1) for c in m.q]
    return [GridFunction(m.shape, sum(c.values * st[i] for c, st in zip(m.q, stacks))) for i in range(M + 1)]


def moment_scales(m: SphereMap, M: int) -> list:
    """sup|d^i q| over components, used to normalize the moments."""
    stacks = [derivative_stack(c.values, m.shape, M + 1) for c in m.q]
    return [max(_sup(st[i]) for st in stacks) for i in range(M + 1)]


def moment_recursion_rhs(T: list, u: GridFunction, i: int) -> GridFunction:
    """Right-hand side of the triangular system for dbar T_i.

    dbar T_i = d(dbar T_{i-1} - sum_l C(i-2, l) T_l d^(i-l-2) u)
               + sum_l C(i-1, l) T_l d^(i-1-l) u,   l = 0..i-2.
    """
    shape = u.shape
    ustack = derivative_stack(u.values, shape, i)
    inner = derivative_values(T[i - 1].values, shape, "zbar")
    outer = 0.0
    for l in range(i - 1):
        inner = inner - binom(i - 2, l) * T[l].values * ustack[i - l - 2]
        outer = outer + binom(i - 1, l) * T[l].values * ustack[i - 1 - l]
    return GridFunction(shape, derivative_values(inner, shape, "z") + outer)


def moment_recursion_residual(T: list, u: GridFunction, i: int) -> float:
    """sup|dbar T_i - rhs| divided by the largest term entering the identity."""
    if i < 2:
        raise ValueError("the recursion is stated for i >= 2")
    lhs = derivative_values(T[i].values, u.shape, "zbar")
    rhs = moment_recursion_rhs(T, u, i).values
    ustack = derivative_stack(u.values, u.shape, i)
    terms = [lhs, derivative_values(derivative_values(T[i - 1].values, u.shape, "zbar"), u.shape, "z")]
    terms += [T[l].values * ustack[i - 1 - l] for l in range(i - 1)]
    scale = max(_sup(t) for t in terms)
    if scale == 0.0:
        return 0.0
    return _sup(lhs - rhs) / scale


def fermi_moments(w: BlochWave, m: int, M: int) -> list:
    """f_i = res_inf(psi(-k) d^i psi(k) dk / k^(2m+1)) for i = 0..M."""
    left = series_reflect(w.zeta_list())
    series = WaveSeries(w.shape, w.zeta_list())
    out = []
    for i in range(M + 1):
        P = series.power_action(i, 2 * m - w.S)
        out.append(GridFunction(w.shape, -k0_coefficient(left, P, 2 * m)))
    return out


def wm_order(m: SphereMap, maxj: int, tol: float = WM_TOL) -> tuple:
    """Largest order m <= maxj + 1 with (d^j q, d^j q) ~ 0 for 0 < j < m.

    Returns ``(order, infinite)`` where ``infinite`` is True when every tested
    order 1..maxj vanishes.  The conditions are tested relative to sup|d^j q|^2.
    """
    stacks = [derivative_stack(c.values, m.shape, maxj + 1) for c in m.q]
    for j in range(1, maxj + 1):
        val = sum(st[j] ** 2 for st in stacks)
        scale = max(_sup(st[j]) for st in stacks) ** 2
        if scale > 0 and _sup(val) > tol * scale:
            return j, False
    return maxj + 1, True


def constraint_pairing(m: SphereMap, w: BlochWave, n: int, D: int) -> float:
    """sup|(q, L_+^(2n+1) q)| relative to the largest term sup|a_i| sup|d^i q| of L_+^(2n+1) q.

    The image itself can vanish (a map stationary under the flow), so it is
    not used as the scale.
    """
    from .nv import dress

    L = dress(w, D)
    Lp = plus_part(power(L, 2 * n + 1))
    images = [Lp.apply(c) for c in m.q]
    val = pairing([c.values for c in m.q], [im.values for im in images])
    top = Lp.max_order
    stacks = [derivative_stack(c.values, m.shape, top + 1) for c in m.q]
    scale = max(_sup(Lp.raw(i)) * max(_sup(st[i]) for st in stacks) for i in Lp.orders)
    return _sup(val) / scale if scale > 0 else _sup(val)


def linearized_apply(m: SphereMap, vfield: list) -> list:
    """D v = d dbar v + q (dbar q, d v) + q (d q, dbar v) + (d q, dbar q) v, with its term scales."""
    shape = m.shape
    q = [c.values for c in m.q]
    vv = [np.asarray(c.values if isinstance(c, GridFunction) else c, dtype=complex) for c in vfield]
    dq = [derivative_values(c, shape, "z") for c in q]
    dbq = [derivative_values(c, shape, "zbar") for c in q]
    dv = [derivative_values(c, shape, "z") for c in vv]
    dbv = [derivative_values(c, shape, "zbar") for c in vv]
    lap = [derivative_values(c, shape, "z") for c in dbv]
    a = pairing(dbq, dv)
    b = pairing(dq, dbv)
    g = pairing(dq, dbq)
    out = [lap[i] + q[i] * a + q[i] * b + g * vv[i] for i in range(len(q))]
    scale = max(max(_sup(x) for x in lap), _sup(a), _sup(b), _sup(g) * max(_sup(x) for x in vv))
    return out, scale


def linearized_residual(m: SphereMap, vfield: list) -> float:
    """sup|D v| relative to the largest individual term."""
    out, scale = linearized_apply(m, vfield)
    worst = max(_sup(x) for x in out)
    return worst / scale if scale > 0 else worst


def instanton_charge(m: SphereMap) -> float:
    """Degree (1/4 pi) * integral of q . (q_x x q_y) dx dy over the unit cell."""
    if m.N != 3:
        raise ValueError("the degree is defined for maps into the 2-sphere")
    q = np.real(m.stack())
    qx = np.stack([derivative_values(c, m.shape, "x").real for c in q])
    qy = np.stack([derivative_values(c, m.shape, "y").real for c in q])
    density = np.einsum("i...,i...->...", q, np.cross(qx, qy, axis=0))
    return float(np.mean(density) / (4 * np.pi))


# O(3) reconstruction chain ----------------------------------------------------

@dataclass
class O3Report:
    checks: dict
    c: np.ndarray
    mask: np.ndarray
    map: SphereMap

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.checks.values())


def o3_inputs_from_v(v, r1, r2):
    """f1 = (v + 1/v) / (2 r1), f2 = (v - 1/v) / (2i r2)."""
    v = np.asarray(v, dtype=complex)
    return (v + 1 / v) / (2 * r1), (v - 1 / v) / (2j * r2)


def o3_reconstruct(f1: GridFunction, f2: GridFunction, r1: float, r2: float, r3: float,
                   tol: float = 1e-8, denom_floor: float = 1e-6) -> O3Report:
    """Rebuild the sphere map from the pair (f1, f2) and the weights r_j.

    With h = i r1 r2 r3: g1 = (h / r1^2) f2, g2 = -(h / r2^2) f1; the real gluing
    function c is evaluated from both of its expressions; psi_1 = f1 + c h f2 / r1^2,
    psi_2 = f2 - c h f1 / r2^2, psi_3 = c; y_j = r_j psi_j.

    Raises
    ------
    FGViolation
        If r1^2 f1^2 + r2^2 f2^2 deviates from 1 by more than ``tol``.
    DegenerateDenominator
        If both expressions for c are undefined at some grid point.
    """
    if abs(r1**2 + r2**2 + r3**2 - 1) > 1e-10:
        raise ValueError("weights must satisfy r1^2 + r2^2 + r3^2 = 1")
    shape = f1.shape
    F1, F2 = f1.values, f2.values
    fg1 = _sup(r1**2 * F1**2 + r2**2 * F2**2 - 1)
    if fg1 > tol:
        raise FGViolation(f"r1^2 f1^2 + r2^2 f2^2 - 1 reaches {fg1:.3e}")
    h = 1j * r1 * r2 * r3
    g1 = h / r1**2 * F2
    g2 = -h / r2**2 * F1
    fg2 = _sup(r1**2 * g1**2 + r2**2 * g2**2 + r3**2)
    fg3 = _sup(r1**2 * F1 * g1 + r2**2 * F2 * g2)
    den_a = F2 + np.conj(F2)
    den_b = F1 + np.conj(F1)
    ok_a = np.abs(den_a) > denom_floor
    ok_b = np.abs(den_b) > denom_floor
    if h == 0:
        c = np.zeros(F1.shape)
        ok_a = ok_b = np.ones(F1.shape, dtype=bool)
        c_gap = 0.0
    else:
        if np.any(~ok_a & ~ok_b):
            raise DegenerateDenominator("both expressions for c are undefined at some grid point")
        with np.errstate(divide="ignore", invalid="ignore"):
            c_a = -(r1**2 / h) * (F1 - np.conj(F1)) / den_a
            c_b = (r2**2 / h) * (F2 - np.conj(F2)) / den_b
        both = ok_a & ok_b
        c_gap = _sup((c_a - c_b)[both]) / max(1.0, _sup(c_a[both])) if np.any(both) else 0.0
        c = np.where(ok_a, c_a, c_b)
    psi1 = F1 + c * h * F2 / r1**2
    psi2 = F2 - c * h * F1 / r2**2
    psi3 = c * np.ones_like(F1)
    y = np.stack([r1 * psi1, r2 * psi2, r3 * psi3])
    unit = _sup(np.sum(y**2, axis=0) - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = (y[0] + 1j * y[1]) / (1 + y[2])
    v_expected = r1 * F1 + 1j * r2 * F2
    v_inv = r1 * F1 - 1j * r2 * F2
    finite = np.isfinite(v) & (np.abs(1 + y[2]) > denom_floor)
    scale_v = np.maximum(1.0, np.abs(v_expected))
    x_w = _sup((np.abs(v - v_expected) / scale_v)[finite]) if np.any(finite) else 0.0
    ww = _sup(v_expected * v_inv - 1)
    reality = _sup(y.imag) / max(1.0, _sup(y))
    lifted = stereographic_values(v_expected, vinv=v_inv)
    lift_gap = _sup(y - lifted)
    items = [("fg1", fg1), ("fg2", fg2), ("fg3", fg3), ("c_consistency", c_gap),
             ("unit_norm", unit), ("x_w", x_w), ("ww", ww)]
    if h != 0:
        # with r3 = 0 the map lies on the complexified equator and is not real
        items += [("reality", reality), ("stereographic_match", lift_gap)]
    checks = {}
    for name, value in items:
        checks[name] = {"value": float(value), "tolerance": tol, "pass": bool(value <= tol)}
    sphere = SphereMap([GridFunction(shape, comp) for comp in y], is_real=h != 0)
    return O3Report(checks, c, ok_a | ok_b, sphere)
