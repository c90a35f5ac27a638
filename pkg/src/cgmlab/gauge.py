"""Balancing inversions: Moebius inversions that kill the average mean curvature on an annulus.

Averages are taken with the flat chart measure dt dtheta, which does not depend on
the immersion.  Since H = Y_5 - Y_4 is linear in Y and Y transforms linearly under
SO(4,1), the averaged mean curvature of a Moebius image is a linear function of the
averaged Y, which is what makes the balancing sphere computable from averages alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .conformal_gauss import ConformalGaussField, build_cgm
from .errors import CGMError, SearchFailure
from .immersion import ParametricImmersion, moebius_transform_immersion
from .minkowski import eta_norm2, xi_norm
from .moebius import inversion_about

log = logging.getLogger(__name__)

# radii factors (inner, outer) of the nested dyadic annuli, relative to rho
DYADIC_VARIANTS = {
    "A": (1.0, 2.0),
    "A_hat": (1.1, 1.9),
    "A_tilde": (1.2, 1.8),
    "A_bar": (1.3, 1.7),
}


class AverageNotSpacelike(CGMError):
    pass


@dataclass(frozen=True)
class AnnulusSpec:
    """A band t_lo <= t <= t_hi of the chart; for cylinder charts t = log |z| this is an annulus."""

    t_lo: float
    t_hi: float
    label: str = ""

    def __post_init__(self):
        if not self.t_hi > self.t_lo:
            raise ValueError("annulus needs t_lo < t_hi")

    @classmethod
    def dyadic(cls, rho: float, variant: str = "A") -> "AnnulusSpec":
        """B_{c2 rho} minus B_{c1 rho} in the radial coordinate r = e^t."""
        if not rho > 0:
            raise ValueError("rho must be positive")
        c1, c2 = DYADIC_VARIANTS[variant]
        return cls(float(np.log(c1 * rho)), float(np.log(c2 * rho)), f"{variant}({rho:g})")

    def rows(self, t: np.ndarray) -> np.ndarray:
        return np.nonzero((t >= self.t_lo - 1e-12) & (t <= self.t_hi + 1e-12))[0]


def _row_weights(F: ConformalGaussField, A: AnnulusSpec):
    idx = A.rows(F.grid.t)
    if len(idx) == 0:
        raise ValueError(f"annulus [{A.t_lo:g}, {A.t_hi:g}] contains no grid circle")
    if len(idx) == 1:
        return idx, np.ones(1)
    return idx, F.grid.sub(int(idx[0]), int(idx[-1])).t_weights


def annulus_averages(F: ConformalGaussField, A: AnnulusSpec) -> tuple[np.ndarray, float]:
    """(mean of Y, mean of H) over the annulus; the second equals Ybar_5 - Ybar_4."""
    idx, w = _row_weights(F, A)
    Ybar = np.tensordot(w, F.Y[idx].mean(axis=1), axes=(0, 0)) / w.sum()
    return Ybar, float(Ybar[4] - Ybar[3])


def annulus_integral(F: ConformalGaussField, A: AnnulusSpec, density: np.ndarray) -> float:
    """Chart quadrature of density * dt dtheta over the annulus."""
    idx, w = _row_weights(F, A)
    return float(np.tensordot(w, np.asarray(density)[idx].sum(axis=1), axes=(0, 0)) * F.grid.dtheta)


@dataclass(frozen=True)
class BalancingSphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError("balancing sphere radius must be positive and finite")


@dataclass(frozen=True)
class AlreadyBalanced:
    """Returned instead of a sphere when the average mean curvature already vanishes."""

    H_bar: float


def tau_H(Ybar) -> float:
    return 1e-8 * (1.0 + float(xi_norm(Ybar)))


def balancing_sphere(Ybar, H_bar: float, tau: Optional[float] = None):
    """Sphere of inversion centers a for which the averaged mean curvature vanishes."""
    Ybar = np.asarray(Ybar, dtype=float)
    tau = tau_H(Ybar) if tau is None else tau
    if abs(H_bar) <= tau:
        return AlreadyBalanced(H_bar)
    n2 = float(eta_norm2(Ybar))
    if n2 <= 0:
        raise AverageNotSpacelike(f"averaged Y is not spacelike (|Ybar|^2 = {n2:.3g})")
    return BalancingSphere(Ybar[:3] / H_bar, float(np.sqrt(n2) / abs(H_bar)))


def predicted_balanced_mean(Ybar, H_bar: float, a) -> float:
    """Averaged H after inverting about a (unit radius): -H_bar (|a - c|^2 - |Ybar|^2 / H_bar^2)."""
    Ybar = np.asarray(Ybar, dtype=float)
    c = Ybar[:3] / H_bar
    d = np.asarray(a, dtype=float) - c
    return float(-H_bar * (d @ d - eta_norm2(Ybar) / H_bar**2))


def fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * k
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


@dataclass
class BalancingReport:
    annulus: AnnulusSpec
    Y_bar: np.ndarray
    H_bar: float
    center: Optional[np.ndarray]
    radius: Optional[float]
    a: Optional[np.ndarray]
    surface_distance: float
    post_average: float
    predicted_post_average: float
    E_before: float
    E_after: float
    conformal_factor_range: tuple  # min/max of sqrt(g') / sqrt(g) on the annulus
    candidates_tried: int
    identity: bool = False
    pointwise_defect: float = 0.0  # max nodal change of |A0|^2 sqrt(g) on the annulus
    extra: dict = field(default_factory=dict)

    @property
    def invariance_defect(self) -> float:
        return abs(self.E_after - self.E_before)

    @property
    def passed(self) -> bool:
        return abs(self.post_average) <= 1e-6

    def to_dict(self) -> dict:
        f = lambda v: None if v is None else [float(x) for x in v]  # noqa: E731
        return {
            "annulus": [self.annulus.t_lo, self.annulus.t_hi],
            "Y_bar": f(self.Y_bar),
            "H_bar": self.H_bar,
            "center": f(self.center),
            "radius": self.radius,
            "a": f(self.a),
            "surface_distance": self.surface_distance,
            "post_average": self.post_average,
            "predicted_post_average": self.predicted_post_average,
            "E_before": self.E_before,
            "E_after": self.E_after,
            "invariance_defect": self.invariance_defect,
            "conformal_factor_range": list(self.conformal_factor_range),
            "candidates_tried": self.candidates_tried,
            "identity": self.identity,
            "pointwise_defect": self.pointwise_defect,
            "passed": self.passed,
        }


def find_balancing_inversion(imm: ParametricImmersion, F: ConformalGaussField, A: AnnulusSpec,
                             t_bound: Optional[float] = None, n_samples: int = 256,
                             min_distance: float = 1e-9) -> tuple[np.ndarray, BalancingReport]:
    """Pick a on the balancing sphere away from the surface; verify by re-evaluating the field.

    Returns (matrix of the inversion about a, report).  The candidate maximizing the
    distance to the sampled surface among the Fibonacci samples with |a| <= t_bound is
    used.  t_bound defaults to |c| + r, which admits the whole sphere.
    """
    if imm.ambient != "R3":
        raise ValueError("balancing inversions are set up for R^3 immersions")
    Ybar, H_bar = annulus_averages(F, A)
    E_before = annulus_integral(F, A, F.A0_norm2 * F.sqrt_g)
    sph = balancing_sphere(Ybar, H_bar)
    if isinstance(sph, AlreadyBalanced):
        rep = BalancingReport(A, Ybar, H_bar, None, None, None, float("inf"), H_bar, H_bar,
                              E_before, E_before, (1.0, 1.0), 0, identity=True)
        return np.eye(5), rep

    c, r = sph.center, sph.radius
    bound = float(np.linalg.norm(c) + r) if t_bound is None else float(t_bound)
    cand = c + r * fibonacci_sphere(n_samples)
    cand = cand[np.linalg.norm(cand, axis=1) <= bound + 1e-12]
    t, th = F.grid.mesh()
    pts = imm.evaluate(t, th).reshape(-1, 3)
    if len(cand) == 0:
        raise SearchFailure(f"no candidate on the balancing sphere satisfies |a| <= {bound:g}")
    dist, _ = cKDTree(pts).query(cand)
    k = int(np.argmax(dist))
    if dist[k] <= min_distance:
        raise SearchFailure("every candidate lies on the sampled surface", best=cand[k])
    a = cand[k]
    M = inversion_about(a)

    G = build_cgm(moebius_transform_immersion(imm, M), F.grid)
    _, H_after = annulus_averages(G, A)
    E_after = annulus_integral(G, A, G.A0_norm2 * G.sqrt_g)
    idx = A.rows(F.grid.t)
    ratio = G.sqrt_g[idx] / F.sqrt_g[idx]
    dens = lambda X: X.A0_norm2[idx] * X.sqrt_g[idx]  # noqa: E731
    rep = BalancingReport(A, Ybar, H_bar, c, r, a, float(dist[k]), H_after,
                          predicted_balanced_mean(Ybar, H_bar, a), E_before, E_after,
                          (float(ratio.min()), float(ratio.max())), len(cand),
                          pointwise_defect=float(np.max(np.abs(dens(G) - dens(F)))))
    log.info("balanced %s: a=%s, post-average %.3g", A.label or (A.t_lo, A.t_hi), a, H_after)
    return M, rep
