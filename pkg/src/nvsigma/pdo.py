"""Truncated pseudo-differential operators sum_i a_i d^i in d = d/dz.

Coefficients are doubly periodic fields on a common torus grid.  Orders
below ``-depth`` are dropped.  Each operator also tracks ``floor``, the
lowest order whose coefficient is known exactly given the truncation of
its inputs; comparisons between operators are meaningful only at orders
at or above the floor.
"""
from __future__ import annotations

import functools
from fractions import Fraction

import numpy as np

from .errors import NotMonic, ShapeMismatch
from .torus import GridFunction, TorusShape, clean_spectrum

DEFAULT_DEPTH = 8
# floor value for operators with no truncated tail (d^n, multiplications)
EXACT = -(10**9)


@functools.lru_cache(maxsize=None)
def binom(i: int, l: int) -> float:
    """Generalized binomial coefficient C(i, l) for integer i and l >= 0."""
    acc = Fraction(1)
    for t in range(l):
        acc = acc * (i - t) / (t + 1)
    return float(acc)


def derivative_stack(values: np.ndarray, shape: TorusShape, count: int, direction: str = "z") -> list:
    """Return [f, df, d^2 f, ..., d^(count-1) f] using a single forward transform."""
    out = [values]
    if count <= 1:
        return out
    sym = shape.symbol(direction)
    fhat = clean_spectrum(np.fft.fft2(values))
    for _ in range(1, count):
        fhat = fhat * sym
        out.append(np.fft.ifft2(fhat))
    return out


class PseudoDiffOp:
    """Truncated operator ``sum_{i >= -depth} coeffs[i] d^i``.

    Parameters
    ----------
    shape : TorusShape
    coeffs : dict
        Maps integer order to a GridFunction, an (nx, ny) array or a scalar.
    depth : int
        Lowest retained order is ``-depth``.
    floor : int, optional
        Lowest exactly known order; defaults to ``-depth``.  Values below
        ``-depth`` mean the operator has no truncated tail at all.
    """

    __slots__ = ("shape", "depth", "floor", "_c")

    def __init__(self, shape: TorusShape, coeffs: dict, depth: int = DEFAULT_DEPTH, floor: int | None = None):
        if depth < 1:
            raise ValueError("depth must be a positive integer")
        self.shape = shape
        self.depth = int(depth)
        self.floor = -self.depth if floor is None else int(floor)
        c = {}
        full = (shape.nx, shape.ny)
        for order, val in coeffs.items():
            order = int(order)
            if order < -self.depth:
                continue
            if isinstance(val, GridFunction):
                if val.shape != shape:
                    raise ShapeMismatch("coefficient lives on a different torus")
                arr = val.values
            else:
                arr = np.asarray(val, dtype=complex)
                if arr.ndim == 0:
                    arr = np.full(full, complex(arr))
                elif arr.shape != full:
                    raise ShapeMismatch(f"coefficient has shape {arr.shape}, expected {full}")
            c[order] = arr
        self._c = c

    # constructors --------------------------------------------------------

    @classmethod
    def identity(cls, shape: TorusShape, depth: int = DEFAULT_DEPTH) -> "PseudoDiffOp":
        return cls(shape, {0: 1.0}, depth, EXACT)

    @classmethod
    def partial(cls, shape: TorusShape, power: int = 1, depth: int = DEFAULT_DEPTH) -> "PseudoDiffOp":
        """The bare operator d^power."""
        return cls(shape, {power: 1.0}, depth, EXACT)

    @classmethod
    def multiplication(cls, f: GridFunction, depth: int = DEFAULT_DEPTH) -> "PseudoDiffOp":
        return cls(f.shape, {0: f}, depth, EXACT)

    # access ---------------------------------------------------------------

    @property
    def orders(self) -> list:
        return sorted(self._c, reverse=True)

    @property
    def max_order(self) -> int:
        return max(self._c) if self._c else -self.depth

    def coeff(self, order: int) -> GridFunction:
        arr = self._c.get(order)
        if arr is None:
            return GridFunction.zeros(self.shape)
        return GridFunction(self.shape, arr)

    @property
    def coeffs(self) -> dict:
        return {i: GridFunction(self.shape, a) for i, a in self._c.items()}

    def raw(self, order: int):
        return self._c.get(order)

    def scale(self) -> float:
        """Largest sup norm among the coefficients."""
        return max((float(np.max(np.abs(a))) for a in self._c.values()), default=0.0)

    def __repr__(self):
        return f"PseudoDiffOp(orders {self.max_order}..{-self.depth}, floor={self.floor}, scale={self.scale():.3g})"

    # linear structure -----------------------------------------------------

    def _check(self, other: "PseudoDiffOp"):
        if other.shape != self.shape:
            raise ShapeMismatch("operators live on different tori")
        if other.depth != self.depth:
            raise ShapeMismatch(f"operator depths differ ({self.depth} vs {other.depth})")

    def __add__(self, other):
        if not isinstance(other, PseudoDiffOp):
            other = PseudoDiffOp(self.shape, {0: other}, self.depth, EXACT)
        self._check(other)
        c = dict(self._c)
        for i, a in other._c.items():
            c[i] = c[i] + a if i in c else a
        return PseudoDiffOp(self.shape, c, self.depth, max(self.floor, other.floor))

    __radd__ = __add__

    def __neg__(self):
        return PseudoDiffOp(self.shape, {i: -a for i, a in self._c.items()}, self.depth, self.floor)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        """Scalar multiplication; use ``@`` or :func:`compose` for operator products."""
        if isinstance(scalar, PseudoDiffOp):
            return compose(self, scalar)
        return PseudoDiffOp(self.shape, {i: a * scalar for i, a in self._c.items()}, self.depth, self.floor)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return compose(self, other)

    def restrict(self, lowest: int) -> "PseudoDiffOp":
        """Drop all orders below ``lowest``."""
        return PseudoDiffOp(self.shape, {i: a for i, a in self._c.items() if i >= lowest},
                            self.depth, max(self.floor, lowest))

    def max_difference(self, other: "PseudoDiffOp", lowest: int | None = None) -> float:
        """Sup-norm distance over orders >= ``lowest`` (default: the common floor)."""
        if lowest is None:
            lowest = max(self.floor, other.floor, -self.depth)
        orders = {i for i in set(self._c) | set(other._c) if i >= lowest}
        worst = 0.0
        for i in orders:
            a = self._c.get(i, 0.0)
            b = other._c.get(i, 0.0)
            worst = max(worst, float(np.max(np.abs(np.asarray(a) - np.asarray(b)))))
        return worst

    # action on functions --------------------------------------------------

    def apply(self, f: GridFunction) -> GridFunction:
        """Apply the differential part (orders >= 0) to a field.

        Raises ``ValueError`` if negative orders are present, since their action
        on a periodic field is not defined without a normalization.
        """
        if any(i < 0 and np.any(a != 0) for i, a in self._c.items()):
            raise ValueError("apply() needs a differential operator (no negative orders)")
        top = max(self.max_order, 0)
        ders = derivative_stack(f.values, self.shape, top + 1)
        out = np.zeros_like(f.values)
        for i, a in self._c.items():
            if i >= 0:
                out = out + a * ders[i]
        return GridFunction(self.shape, out)


def compose(A: PseudoDiffOp, B: PseudoDiffOp) -> PseudoDiffOp:
    """Operator product A o B via the generalized Leibniz rule, truncated at ``-depth``."""
    A._check(B)
    D = A.depth
    if not A._c or not B._c:
        return PseudoDiffOp(A.shape, {}, D)
    maxA, maxB = A.max_order, B.max_order
    need = maxA + maxB + D + 1
    ders = {j: derivative_stack(b, A.shape, max(need, 1)) for j, b in B._c.items()}
    out: dict = {}
    for i, a in A._c.items():
        for j in B._c:
            stack = ders[j]
            l = 0
            while True:
                order = i + j - l
                if order < -D or l >= len(stack):
                    break
                c = binom(i, l)
                if c == 0.0:
                    break
                term = c * a * stack[l]
                out[order] = out[order] + term if order in out else term
                l += 1
    floor = max(-D, A.floor + maxB, B.floor + maxA)
    return PseudoDiffOp(A.shape, out, D, floor)


def adjoint(A: PseudoDiffOp) -> PseudoDiffOp:
    """Formal adjoint: (a d^i)* = (-d)^i o a."""
    D = A.depth
    out: dict = {}
    for i, a in A._c.items():
        count = i + D + 1
        stack = derivative_stack(a, A.shape, count)
        sign = -1.0 if i % 2 else 1.0
        for l in range(count):
            c = binom(i, l)
            if c == 0.0:
                break
            order = i - l
            term = (sign * c) * stack[l]
            out[order] = out[order] + term if order in out else term
    return PseudoDiffOp(A.shape, out, D, A.floor)


def plus_part(A: PseudoDiffOp) -> PseudoDiffOp:
    """Strictly positive part: keeps orders >= 1 and drops the order-zero term."""
    return PseudoDiffOp(A.shape, {i: a for i, a in A._c.items() if i >= 1}, A.depth, A.floor)


def minus_part(A: PseudoDiffOp) -> PseudoDiffOp:
    """Complement of :func:`plus_part`, orders <= 0."""
    return PseudoDiffOp(A.shape, {i: a for i, a in A._c.items() if i <= 0}, A.depth, A.floor)


def res_partial(A: PseudoDiffOp) -> GridFunction:
    """Coefficient of d^-1."""
    return A.coeff(-1)


def invert_monic(Phi: PseudoDiffOp) -> PseudoDiffOp:
    """Inverse of Phi = 1 + X with X of strictly negative order, by Neumann iteration.

    Raises
    ------
    NotMonic
        If Phi has positive orders or its order-zero coefficient is not 1.
    """
    for i, a in Phi._c.items():
        if i > 0 and np.any(a != 0):
            raise NotMonic(f"operator has a nonzero order-{i} coefficient")
    lead = Phi._c.get(0)
    if lead is None or np.max(np.abs(lead - 1.0)) > 1e-12:
        raise NotMonic("order-zero coefficient is not identically 1")
    X = PseudoDiffOp(Phi.shape, {i: a for i, a in Phi._c.items() if i < 0}, Phi.depth, Phi.floor)
    one = PseudoDiffOp.identity(Phi.shape, Phi.depth)
    Y = one
    # each pass fixes one more order of the inverse
    for _ in range(Phi.depth):
        Y = one - compose(X, Y)
    Y.floor = max(-Phi.depth, Phi.floor)
    return Y


def power(A: PseudoDiffOp, n: int) -> PseudoDiffOp:
    """A composed with itself n times (n >= 1)."""
    if n < 1:
        raise ValueError("power requires n >= 1")
    result = A
    for _ in range(n - 1):
        result = compose(result, A)
    return result


def random_operator(shape: TorusShape, top: int, depth: int, rng: np.random.Generator,
                    modes: int = 3, monic: bool = False) -> PseudoDiffOp:
    """Operator with smooth random trigonometric coefficients, for testing.

    Each coefficient is a random combination of Fourier modes with |m|, |n| <= ``modes``.
    """
    x, y = shape.grid()
    coeffs = {}
    for i in range(top, -depth - 1, -1):
        if monic and i == 0:
            coeffs[0] = 1.0
            continue
        if monic and i > 0:
            continue
        field = np.zeros(x.shape, dtype=complex)
        for m in range(-modes, modes + 1):
            for n in range(-modes, modes + 1):
                amp = (rng.normal() + 1j * rng.normal()) * np.exp(-0.5 * (m * m + n * n))
                field += amp * np.exp(2j * np.pi * (m * x + n * y))
        coeffs[i] = field / np.max(np.abs(field))
    return PseudoDiffOp(shape, coeffs, depth)
