"""Linear algebra of the Minkowski space R^{4,1} = (R^5, eta).

eta = diag(1, 1, 1, 1, -1).  Every function here acts on the last axis, so
arrays of shape (..., 5) are handled as stacks of vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

ETA = np.diag([1.0, 1.0, 1.0, 1.0, -1.0])
_SIGN = np.array([1.0, 1.0, 1.0, 1.0, -1.0])

TAU_GROUP = 1e-9
TAU_NULL = 1e-6


class CausalClass(str, Enum):
    SPACELIKE = "spacelike"
    LIGHTLIKE = "lightlike"
    TIMELIKE = "timelike"
    ZERO = "zero"


def eta_inner(u, v):
    """Minkowski product u1v1 + u2v2 + u3v3 + u4v4 - u5v5 along the last axis."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.sum(u * v * _SIGN, axis=-1)


def eta_norm2(u):
    return eta_inner(u, u)


def xi_norm2(u):
    u = np.asarray(u, dtype=float)
    return np.sum(u * u, axis=-1)


def xi_norm(u):
    return np.sqrt(xi_norm2(u))


def lower(u):
    """Apply eta to a vector (index lowering), so that u . lower(v) = <u, v>_eta."""
    return np.asarray(u, dtype=float) * _SIGN


def causal_class(u, tau_null: float = TAU_NULL) -> CausalClass:
    """Classify u by the sign of |u|^2_eta relative to |u|^2_xi."""
    if tau_null <= 0:
        raise ValueError("tau_null must be positive")
    u = np.asarray(u, dtype=float)
    x2 = float(xi_norm2(u))
    if x2 == 0.0:
        return CausalClass.ZERO
    e2 = float(eta_norm2(u))
    if abs(e2) <= tau_null * x2:
        return CausalClass.LIGHTLIKE
    return CausalClass.SPACELIKE if e2 > 0 else CausalClass.TIMELIKE


def so41_defect(M) -> float:
    M = np.asarray(M, dtype=float)
    return float(np.max(np.abs(M.T @ ETA @ M - ETA)))


def verify_so41(M, tau_group: float = TAU_GROUP) -> tuple[bool, float]:
    """Return (M^T eta M == eta within tau_group, the max-norm defect)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (5, 5) or not np.all(np.isfinite(M)):
        return False, float("inf")
    defect = so41_defect(M)
    return defect <= tau_group, defect


@dataclass(frozen=True)
class NullPair:
    nu: np.ndarray
    nu_star: np.ndarray
    normalized: bool  # False when nu_5 vanished and the nu_5 = 1 scaling was skipped


def null_normal_pairs(V, tol: float = 1e-10):
    """Batched null normal pairs for stacks of spans V with shape (..., 3, 5).

    Returns (nu, nu_star, valid, normalized); rows failing the rank or
    spacelike requirement are marked invalid and filled with nan.
    """
    V = np.asarray(V, dtype=float)
    batch = V.shape[:-2]
    V = V.reshape(-1, 3, 5)
    # rows are rescaled individually: positive scalings keep the span and the orientation
    Vs = V / np.maximum(np.sqrt(np.sum(V * V, axis=2, keepdims=True)), 1e-300)
    G = Vs @ ETA @ np.swapaxes(Vs, 1, 2)
    sv = np.linalg.svd(Vs, compute_uv=False)
    valid = sv[:, -1] > tol * sv[:, 0]
    valid &= np.min(np.linalg.eigvalsh(G), axis=1) > tol
    _, _, vh = np.linalg.svd(Vs @ ETA)
    w1, w2 = vh[:, 3], vh[:, 4]
    a, b, c = eta_inner(w1, w1), eta_inner(w1, w2), eta_inner(w2, w2)
    disc = b * b - a * c
    valid &= disc > 0
    r = np.sqrt(np.where(disc > 0, disc, 0.0))
    use_c = np.abs(c) >= np.abs(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        cc = np.where(use_c, c, 1.0)
        aa = np.where(use_c, 1.0, a)
        n1 = np.where(use_c[:, None], w1 + ((-b + r) / cc)[:, None] * w2, ((-b + r) / aa)[:, None] * w1 + w2)
        n2 = np.where(use_c[:, None], w1 + ((-b - r) / cc)[:, None] * w2, ((-b - r) / aa)[:, None] * w1 + w2)
        p = eta_inner(n1, n2)
        nu, nus = n1, -n2 / p[:, None]
        det = np.linalg.det(np.concatenate([Vs, nu[:, None], nus[:, None]], axis=1))
        swap = det < 0
        nu, nus = np.where(swap[:, None], nus, nu), np.where(swap[:, None], nu, nus)
        normalized = np.abs(nu[:, 4]) > tol * xi_norm(nu)
        s = np.where(normalized, nu[:, 4], 1.0)
        nu, nus = nu / s[:, None], nus * s[:, None]
    nu[~valid] = np.nan
    nus[~valid] = np.nan
    return (nu.reshape(batch + (5,)), nus.reshape(batch + (5,)),
            valid.reshape(batch), (normalized & valid).reshape(batch))


def null_normal_pair(span, tol: float = 1e-10) -> NullPair:
    """Null vectors nu, nu* spanning the eta-orthogonal complement of three spacelike vectors.

    The pair satisfies |nu|^2 = |nu*|^2 = 0 and <nu, nu*> = -1, the ordering makes
    (span, nu, nu*) a positively oriented basis, and nu is scaled to nu_5 = 1 when
    that component does not vanish.
    """
    V = np.asarray(span, dtype=float).reshape(3, 5)
    scale = max(float(np.max(np.abs(V))), 1e-300)
    sv = np.linalg.svd(V / scale, compute_uv=False)
    if sv[-1] <= tol * sv[0]:
        raise np.linalg.LinAlgError("span has rank < 3")
    nu, nus, valid, normalized = null_normal_pairs(V[None], tol)
    if not valid[0]:
        raise ValueError("span is not spacelike (contains a null or timelike direction)")
    return NullPair(nu=nu[0], nu_star=nus[0], normalized=bool(normalized[0]))
