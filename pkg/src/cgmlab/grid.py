"""Tensor-product quadrature grids on chart rectangles and grid differentiation.

Periodic directions use the periodic trapezoid rule and FFT differentiation;
the non-periodic t direction uses the trapezoid rule and fourth-order finite
differences (one-sided near the ends).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


def fornberg_weights(x0: float, xs, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 from nodes xs."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@lru_cache(maxsize=None)
def central_stencil(m: int, accuracy: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and unit-spacing weights of the centered stencil for the m-th derivative."""
    half = (m + 1) // 2 + accuracy // 2 - 1
    offsets = np.arange(-half, half + 1)
    return offsets, fornberg_weights(0.0, offsets, m)


@lru_cache(maxsize=None)
def _fd_matrix(n: int, m: int, accuracy: int) -> np.ndarray:
    """Dense (n x n) unit-spacing m-th derivative matrix, one-sided near the ends."""
    offsets, _ = central_stencil(m, accuracy)
    half = int(offsets[-1])
    width_edge = min(m + accuracy, n)
    D = np.zeros((n, n))
    for i in range(n):
        if half <= i < n - half:
            nodes = np.arange(i - half, i + half + 1)
        else:
            lo = 0 if i < half else n - width_edge
            nodes = np.arange(lo, lo + width_edge)
        D[i, nodes] = fornberg_weights(float(i), nodes.astype(float), m)
    return D


@dataclass(frozen=True)
class QuadratureGrid:
    t0: float
    t1: float
    n_t: int
    n_theta: int
    periodic_t: bool = False

    def __post_init__(self):
        if self.n_t < 4 or self.n_theta < 4:
            raise ValueError("grid needs at least 4 nodes per direction")
        if not self.t1 > self.t0:
            raise ValueError("empty t-range")

    @property
    def t(self) -> np.ndarray:
        if self.periodic_t:
            return self.t0 + (self.t1 - self.t0) * np.arange(self.n_t) / self.n_t
        return np.linspace(self.t0, self.t1, self.n_t)

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_theta) / self.n_theta

    @property
    def dt(self) -> float:
        if self.periodic_t:
            return (self.t1 - self.t0) / self.n_t
        return (self.t1 - self.t0) / (self.n_t - 1)

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t, self.n_theta)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.t, self.theta, indexing="ij")

    @property
    def t_weights(self) -> np.ndarray:
        w = np.full(self.n_t, self.dt)
        if not self.periodic_t:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.t_weights, np.full(self.n_theta, self.dtheta))

    @property
    def area(self) -> float:
        return (self.t1 - self.t0) * TWO_PI

    def integrate(self, f) -> np.ndarray:
        """Quadrature over the chart of f with leading axes (n_t, n_theta)."""
        f = np.asarray(f)
        return np.tensordot(self.weights, f, axes=([0, 1], [0, 1]))

    def circle_integral(self, f) -> np.ndarray:
        """Integral over theta on every circle {t} x S^1, shape (n_t, ...)."""
        return np.sum(np.asarray(f), axis=1) * self.dtheta

    def circle_mean(self, f) -> np.ndarray:
        return np.mean(np.asarray(f), axis=1)

    def sub(self, i0: int, i1: int) -> "QuadratureGrid":
        """Non-periodic sub-grid of t-rows i0..i1 inclusive."""
        t = self.t
        return QuadratureGrid(float(t[i0]), float(t[i1]), i1 - i0 + 1, self.n_theta, False)

    # differentiation ----------------------------------------------------
    def diff(self, f, axis: int, m: int = 1) -> np.ndarray:
        """m-th grid derivative along axis 0 (t) or 1 (theta) of f with leading axes (n_t, n_theta)."""
        f = np.asarray(f, dtype=float)
        periodic = self.periodic_t if axis == 0 else True
        n = f.shape[axis]
        length = (self.t1 - self.t0) if axis == 0 else TWO_PI
        if periodic:
            k = np.fft.fftfreq(n, d=1.0 / n) * (TWO_PI / length)
            if n % 2 == 0 and m % 2 == 1:
                k[n // 2] = 0.0
            shape = [1] * f.ndim
            shape[axis] = n
            fh = np.fft.fft(f, axis=axis) * ((1j * k) ** m).reshape(shape)
            return np.real(np.fft.ifft(fh, axis=axis))
        D = _fd_matrix(n, m, 4) / self.dt**m
        return np.moveaxis(np.tensordot(D, np.moveaxis(f, axis, 0), axes=(1, 0)), 0, axis)

    def gradient(self, f) -> np.ndarray:
        """Stack (d_t f, d_theta f) with a new leading axis."""
        return np.stack([self.diff(f, 0), self.diff(f, 1)])
