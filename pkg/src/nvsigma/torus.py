"""Spectral calculus for doubly periodic complex fields on the torus.

The torus is R^2/Z^2 with real coordinates (x, y) in [0, 1) and complex
coordinate z = x + tau*y.  Fields are sampled on a uniform (x, y) grid and
all derivatives act on the trigonometric interpolant::

    d/dz    = (d/dy - conj(tau) d/dx) / (2i Im tau)
    d/dzbar = (d/dy - tau d/dx) / (-2i Im tau)

Nyquist modes are dropped from every derivative so that the discrete
symbols stay odd.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidShape, NonZeroMean, ShapeMismatch

SOLVABILITY_RTOL = 1e-10
# Fourier modes below this fraction of the largest mode are treated as
# roundoff and dropped before differentiating; otherwise high-order
# derivatives amplify the noise by |symbol|^order.
SPECTRAL_NOISE_FLOOR = 1e-15


@dataclass(frozen=True)
class TorusShape:
    tau: complex
    nx: int
    ny: int

    def __post_init__(self):
        object.__setattr__(self, "tau", complex(self.tau))
        if not self.tau.imag > 0:
            raise InvalidShape(f"Im(tau) must be positive, got tau={self.tau}")
        for n in (self.nx, self.ny):
            if int(n) != n or n < 8 or n % 2:
                raise InvalidShape(f"grid sizes must be even and >= 8, got {self.nx}x{self.ny}")

    @property
    def tau2(self) -> float:
        return self.tau.imag

    def grid(self):
        """Return (x, y) sample arrays of shape (nx, ny), indexed [j, k]."""
        x = np.arange(self.nx) / self.nx
        y = np.arange(self.ny) / self.ny
        return np.meshgrid(x, y, indexing="ij")

    def z(self) -> np.ndarray:
        x, y = self.grid()
        return x + self.tau * y

    def symbol(self, direction: str) -> np.ndarray:
        """Fourier multiplier of d/dz, d/dzbar, d/dx or d/dy (Nyquist zeroed)."""
        return _symbols(self.tau, self.nx, self.ny)[direction]


@functools.lru_cache(maxsize=32)
def _symbols(tau: complex, nx: int, ny: int) -> dict:
    m = np.fft.fftfreq(nx, 1.0 / nx)[:, None]
    n = np.fft.fftfreq(ny, 1.0 / ny)[None, :]
    keep = (np.abs(m) != nx // 2) & (np.abs(n) != ny // 2)
    tau2 = tau.imag
    dx = 2j * np.pi * m * np.ones_like(n)
    dy = 2j * np.pi * n * np.ones_like(m)
    syms = {
        "x": dx,
        "y": dy,
        "z": (dy - np.conj(tau) * dx) / (2j * tau2),
        "zbar": (dy - tau * dx) / (-2j * tau2),
    }
    out = {}
    for key, val in syms.items():
        val = np.where(keep, val, 0.0).astype(complex)
        val.setflags(write=False)
        out[key] = val
    return out


class GridFunction:
    """A complex field sampled on the torus grid; values[j, k] = f(j/nx, k/ny)."""

    __slots__ = ("shape", "values")

    def __init__(self, shape: TorusShape, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != (shape.nx, shape.ny):
            raise ShapeMismatch(f"values have shape {values.shape}, expected {(shape.nx, shape.ny)}")
        if not np.all(np.isfinite(values)):
            raise ValueError("GridFunction values must be finite")
        self.shape = shape
        self.values = values

    @classmethod
    def constant(cls, shape: TorusShape, c) -> "GridFunction":
        return cls(shape, np.full((shape.nx, shape.ny), complex(c)))

    @classmethod
    def zeros(cls, shape: TorusShape) -> "GridFunction":
        return cls.constant(shape, 0.0)

    @classmethod
    def from_function(cls, shape: TorusShape, fn) -> "GridFunction":
        """Sample ``fn(x, y)`` (vectorised over arrays) on the grid."""
        x, y = shape.grid()
        return cls(shape, np.broadcast_to(fn(x, y), x.shape))

    @classmethod
    def fourier_mode(cls, shape: TorusShape, m: int, n: int, c=1.0) -> "GridFunction":
        return cls.from_function(shape, lambda x, y: c * np.exp(2j * np.pi * (m * x + n * y)))

    # arithmetic ---------------------------------------------------------

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.shape != self.shape:
                raise ShapeMismatch("grid functions live on different tori")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.shape, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.shape, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.shape, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.shape, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.shape, self.values / self._other(other))

    def __neg__(self):
        return GridFunction(self.shape, -self.values)

    def __pow__(self, p):
        return GridFunction(self.shape, self.values**p)

    def conj(self) -> "GridFunction":
        return GridFunction(self.shape, np.conj(self.values))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def norm(self) -> float:
        """Sup norm over the grid."""
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"GridFunction({self.shape.nx}x{self.shape.ny}, tau={self.shape.tau}, |f|={self.norm():.3g})"

    # calculus -----------------------------------------------------------

    def d(self, direction: str = "z", order: int = 1) -> "GridFunction":
        return complex_derivative(self, direction, order)

    def mean(self) -> complex:
        return torus_mean(self)

    def fourier(self) -> np.ndarray:
        return np.fft.fft2(self.values)

    # io -----------------------------------------------------------------

    def to_csv(self, path) -> None:
        write_csv(self, path)


def clean_spectrum(fhat: np.ndarray, floor: float | None = None) -> np.ndarray:
    """Zero the Fourier modes whose magnitude is below ``floor`` times the largest."""
    if floor is None:
        floor = SPECTRAL_NOISE_FLOOR
    mag = np.abs(fhat)
    top = mag.max()
    if top == 0.0 or floor <= 0.0:
        return fhat
    return np.where(mag < floor * top, 0.0, fhat)


def derivative_values(values: np.ndarray, shape: TorusShape, direction: str = "z", order: int = 1) -> np.ndarray:
    """Spectral derivative of a raw (nx, ny) array; ``order`` may be zero."""
    if order == 0:
        return values
    sym = shape.symbol(direction)
    return np.fft.ifft2(clean_spectrum(np.fft.fft2(values)) * sym**order)


def complex_derivative(f: GridFunction, direction: str = "z", order: int = 1) -> GridFunction:
    """Derivative of the trigonometric interpolant of ``f``.

    Modes at roundoff level (see ``SPECTRAL_NOISE_FLOOR``) are discarded first.

    ``direction`` is one of ``"z"``, ``"zbar"``, ``"x"``, ``"y"``.
    """
    if direction not in ("z", "zbar", "x", "y"):
        raise ValueError(f"unknown direction {direction!r}")
    return GridFunction(f.shape, derivative_values(f.values, f.shape, direction, order))


def torus_mean(f: GridFunction) -> complex:
    """Integral of the interpolant over the unit cell dx dy, i.e. the sample mean."""
    return complex(np.mean(f.values))


def solve_dzbar(g: GridFunction, rtol: float = SOLVABILITY_RTOL) -> GridFunction:
    """Zero-mean periodic solution of d/dzbar(zeta) = g.

    Raises
    ------
    NonZeroMean
        If ``|mean(g)| > rtol * max|g|``; the equation then has no periodic solution.
    """
    mean = torus_mean(g)
    scale = max(g.norm(), 1e-300)
    if abs(mean) > rtol * scale:
        raise NonZeroMean(f"mean of right-hand side is {mean:.3e} (scale {scale:.3e})")
    sym = g.shape.symbol("zbar")
    ghat = np.fft.fft2(g.values)
    out = np.zeros_like(ghat)
    nz = sym != 0
    out[nz] = ghat[nz] / sym[nz]
    return GridFunction(g.shape, np.fft.ifft2(out))


# serialization ------------------------------------------------------------

def _header(shape: TorusShape) -> str:
    return f"# torus tau_re={shape.tau.real!r} tau_im={shape.tau.imag!r} nx={shape.nx} ny={shape.ny}"


def write_csv(f: GridFunction, path) -> None:
    """Write one ``re,im`` cell per line, row-major over j then k."""
    flat = f.values.reshape(-1)
    lines = [_header(f.shape)]
    lines.extend(f"{float(v.real)!r},{float(v.imag)!r}" for v in flat.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path) -> GridFunction:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    head = text[0].split()
    if head[:2] != ["#", "torus"]:
        raise ValueError(f"{path}: missing torus header")
    fields = dict(item.split("=", 1) for item in head[2:])
    shape = TorusShape(complex(float(fields["tau_re"]), float(fields["tau_im"])),
                       int(fields["nx"]), int(fields["ny"]))
    data = np.loadtxt(text[1:], delimiter=",", ndmin=2)
    if data.shape != (shape.nx * shape.ny, 2):
        raise ValueError(f"{path}: expected {shape.nx * shape.ny} cells, got {data.shape[0]}")
    values = (data[:, 0] + 1j * data[:, 1]).reshape(shape.nx, shape.ny)
    return GridFunction(shape, values)
