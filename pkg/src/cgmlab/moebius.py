"""Moebius transformations of R^3 u {oo} as 5x5 matrices of SO(4,1).

A point x is lifted to the null vector (x, (|x|^2 - 1)/2, (|x|^2 + 1)/2) and oo to
the null direction (0, 0, 0, 1/2, 1/2).  A Moebius map acts on lifts by a matrix
M and points are read back as W_123 / (W_5 - W_4).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .minkowski import eta_norm2, verify_so41


class _Infinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"


INFINITY = _Infinity()


@dataclass(frozen=True)
class Translation:
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))


@dataclass(frozen=True)
class Dilation:
    lam: float  # x -> exp(lam) x


@dataclass(frozen=True)
class Rotation:
    theta: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.theta, dtype=float).reshape(3, 3)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10 or np.linalg.det(R) < 0:
            raise ValueError("rotation matrix must be orthogonal with determinant +1")
        object.__setattr__(self, "theta", R)


@dataclass(frozen=True)
class UnitInversion:
    pass


MoebiusGenerator = Union[Translation, Dilation, Rotation, UnitInversion]


def matrix_of(g: MoebiusGenerator) -> np.ndarray:
    """The SO(4,1) block matrix of a generator."""
    M = np.eye(5)
    if isinstance(g, Translation):
        a = g.a
        a2 = float(a @ a)
        M[:3, 3] = -a
        M[:3, 4] = a
        M[3, :3] = a
        M[4, :3] = a
        M[3, 3] = 1.0 - a2 / 2
        M[3, 4] = a2 / 2
        M[4, 3] = -a2 / 2
        M[4, 4] = 1.0 + a2 / 2
    elif isinstance(g, Dilation):
        c, s = np.cosh(g.lam), np.sinh(g.lam)
        M[3:, 3:] = [[c, s], [s, c]]
    elif isinstance(g, Rotation):
        M[:3, :3] = g.theta
    elif isinstance(g, UnitInversion):
        M = np.diag([-1.0, -1.0, -1.0, 1.0, -1.0])
    else:
        raise TypeError(f"unknown generator {g!r}")
    return M


def compose(*items) -> np.ndarray:
    """Matrix of items[0] o items[1] o ... (generators or 5x5 matrices)."""
    M = np.eye(5)
    for g in items:
        M = M @ (np.asarray(g, dtype=float) if isinstance(g, np.ndarray) else matrix_of(g))
    return M


def inversion_about(a, r: float = 1.0) -> np.ndarray:
    """Matrix of x -> r^2 (x - a) / |x - a|^2."""
    if not r > 0:
        raise ValueError("radius must be positive")
    return compose(Dilation(2.0 * np.log(r)), UnitInversion(), Translation(-np.asarray(a, dtype=float)))


def lift(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    return np.concatenate([x, (x2 - 1) / 2, (x2 + 1) / 2], axis=-1)


def apply_to_point(M, x, tol: float = 1e-12):
    """Image of a point of R^3 u {oo} under the Moebius map with matrix M."""
    M = np.asarray(M, dtype=float)
    if x is INFINITY:
        W = M @ np.array([0.0, 0.0, 0.0, 0.5, 0.5])
    else:
        W = M @ lift(x)
    q = W[4] - W[3]
    if abs(q) <= tol * max(1.0, float(np.max(np.abs(W)))):
        return INFINITY
    return W[:3] / q


def map_components(M, x):
    """Moebius image of a point given as a sequence of 3 components (arrays or jets).

    Returns (image components, denominator W_5 - W_4); the caller handles poles.
    """
    M = np.asarray(M, dtype=float)
    x2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
    L = [x[0], x[1], x[2], (x2 - 1.0) * 0.5, (x2 + 1.0) * 0.5]
    W = []
    for i in (0, 1, 2, 3, 4):
        acc = None
        for j in range(5):
            if M[i, j] != 0.0:
                term = L[j] * float(M[i, j])
                acc = term if acc is None else acc + term
        W.append(acc if acc is not None else x[0] * 0.0)
    q = W[4] - W[3]
    return [W[0] / q, W[1] / q, W[2] / q], q


def is_orientation_reversing(M) -> bool:
    """True for maps reversing the orientation of R^3 (matrices that swap the time sheets)."""
    return bool(np.asarray(M)[4, 4] < 0)


@dataclass(frozen=True)
class OrientedSphere:
    center: np.ndarray
    radius: float
    orientation: int = 1  # +1: mean curvature 1/r for the inward normal; -1: opposite

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValueError("sphere radius must be positive and finite")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")


def sphere_to_desitter(S: OrientedSphere) -> np.ndarray:
    p, r = S.center, S.radius
    p2 = float(p @ p)
    Y = np.concatenate([p / r, [(p2 - r * r - 1) / (2 * r), (p2 - r * r + 1) / (2 * r)]])
    return S.orientation * Y


def desitter_to_sphere(Y, tol: float = 1e-12) -> OrientedSphere:
    Y = np.asarray(Y, dtype=float)
    if abs(eta_norm2(Y) - 1.0) > 1e-8 * max(1.0, float(np.sum(Y * Y))):
        raise ValueError("vector is not on the De Sitter space |Y|^2 = 1")
    h = Y[4] - Y[3]
    if abs(h) <= tol * max(1.0, float(np.max(np.abs(Y)))):
        raise ValueError("Y_5 - Y_4 = 0: the point of De Sitter space is a plane, not a sphere")
    orientation = 1 if h > 0 else -1
    return OrientedSphere(center=Y[:3] / h, radius=1.0 / abs(h), orientation=orientation)


def random_generator(rng: np.random.Generator, scale: float = 1.0) -> MoebiusGenerator:
    """Random generator for property tests and sweeps."""
    kind = rng.integers(4)
    if kind == 0:
        return Translation(rng.normal(scale=scale, size=3))
    if kind == 1:
        return Dilation(float(rng.normal(scale=0.5 * scale)))
    if kind == 2:
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return Rotation(q)
    return UnitInversion()


__all__ = [
    "INFINITY", "Translation", "Dilation", "Rotation", "UnitInversion", "MoebiusGenerator",
    "matrix_of", "compose", "inversion_about", "lift", "apply_to_point", "map_components",
    "is_orientation_reversing", "OrientedSphere", "sphere_to_desitter", "desitter_to_sphere",
    "random_generator", "verify_so41",
]
