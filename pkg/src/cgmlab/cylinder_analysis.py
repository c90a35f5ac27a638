"""Diagnostics of conformal Gauss maps on long cylinders [t0, t1] x S^1.

All circle quantities use the flat chart gradient (d_t, d_theta); the cylinder chart
is assumed conformal.  Quantities named with xi use the Euclidean norm of R^5,
those named with eta the Minkowski one.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .conformal_gauss import ConformalGaussField, restrict_rows
from .errors import CGMError, UmbilicCircleError
from .minkowski import causal_class, eta_inner, eta_norm2, xi_norm, xi_norm2

log = logging.getLogger(__name__)

DIAG_SCHEMA = "cgmlab.cylinder.v1"
UMBILIC_CIRCLE_TOL = 1e-14


class DegenerateFitError(CGMError):
    pass


def rows_in(F: ConformalGaussField, interval) -> tuple[int, int]:
    t = F.grid.t
    lo, hi = interval
    idx = np.nonzero((t >= lo - 1e-12) & (t <= hi + 1e-12))[0]
    if len(idx) < 2:
        raise ValueError(f"interval [{lo:g}, {hi:g}] holds fewer than two grid circles")
    return int(idx[0]), int(idx[-1])


def restrict(F: ConformalGaussField, interval=None) -> ConformalGaussField:
    if interval is None:
        return F
    return restrict_rows(F, *rows_in(F, interval))


@dataclass(frozen=True)
class LineFit:
    a: np.ndarray
    b: np.ndarray
    residual: float
    a_eta2: float
    b_eta2_minus_1: float
    ab_eta: float
    causal: str

    @property
    def null_ratio(self) -> float:
        """| |a|^2_eta | / |a|^2_xi, zero for a light-like direction."""
        return abs(self.a_eta2) / float(xi_norm2(self.a))

    def to_dict(self) -> dict:
        return {"a": [float(x) for x in self.a], "b": [float(x) for x in self.b],
                "residual": self.residual, "a_eta2": self.a_eta2, "b_eta2_minus_1": self.b_eta2_minus_1,
                "ab_eta": self.ab_eta, "null_ratio": self.null_ratio, "causal_class": self.causal}


@dataclass
class CylinderDiagnostics:
    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    Ystar: np.ndarray
    ell: float
    t_weights: np.ndarray
    osc: Optional[float] = None
    line_fit: Optional[LineFit] = None
    extra: dict = field(default_factory=dict)

    @property
    def alpha_over_beta(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.beta > 0, self.alpha / self.beta, 0.0)

    def summary(self) -> dict:
        out = {"t_range": [float(self.t[0]), float(self.t[-1])], "n_circles": int(len(self.t)),
               "ell": self.ell, "sup_alpha_over_beta": float(np.max(self.alpha_over_beta)),
               "osc": self.osc, "line_fit": None if self.line_fit is None else self.line_fit.to_dict()}
        out.update(self.extra)
        return out


def circle_quantities(F: ConformalGaussField, interval=None) -> CylinderDiagnostics:
    """Per-circle integrals alpha, beta, gamma, delta, the average curve Y* and the length ell."""
    F = restrict(F, interval)
    grid = F.grid
    Yt, Yth = F.dY
    Ystar = grid.circle_mean(F.Y)
    alpha = grid.circle_integral(xi_norm2(Yth))
    beta = alpha + grid.circle_integral(xi_norm2(Yt))
    dYstar = grid.diff(Ystar, 0)
    gamma = alpha + grid.circle_integral(xi_norm2(Yt - dYstar[:, None, :]))
    delta = grid.circle_integral(xi_norm2(grid.diff(Yt, 1)) + xi_norm2(grid.diff(Yth, 1)))
    lor = grid.circle_integral(eta_inner(Yt, Yt) + eta_inner(Yth, Yth))
    ell = float(np.sum(grid.t_weights * np.sqrt(np.clip(lor, 0.0, None))))
    return CylinderDiagnostics(grid.t, alpha, beta, gamma, delta, Ystar, ell, grid.t_weights)


def residue_identity_defect(F: ConformalGaussField, interval=None) -> np.ndarray:
    """Per circle |int |d_t Y|^2_eta - int |d_theta Y|^2_eta|."""
    F = restrict(F, interval)
    Yt, Yth = F.dY
    return np.abs(F.grid.circle_integral(eta_norm2(Yt) - eta_norm2(Yth)))


@dataclass(frozen=True)
class ConvexityReport:
    t1: float
    t2: float
    tol: float
    convex: bool  # alpha'' >= alpha - tol at interior circles
    min_convex_slack: float
    max_principle: bool  # alpha <= max(alpha(t1), alpha(t2)) + tol
    barrier: bool  # alpha <= lam e^t + mu e^-t + tol
    lam: float
    mu: float
    max_barrier_excess: float

    @property
    def passed(self) -> bool:
        return self.convex and self.max_principle and self.barrier

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("t1", "t2", "tol", "convex", "min_convex_slack", "max_principle",
                                               "barrier", "lam", "mu", "max_barrier_excess")} | {"passed": self.passed}


def convexity_certificate(diag: CylinderDiagnostics, t1: float, t2: float,
                          tol: Optional[float] = None) -> ConvexityReport:
    """Check alpha'' >= alpha, the maximum principle and the exponential barrier on [t1, t2]."""
    t = diag.t
    idx = np.nonzero((t >= t1 - 1e-12) & (t <= t2 + 1e-12))[0]
    if len(idx) < 3:
        raise ValueError("convexity certificate needs at least 3 circles")
    ts, a = t[idx], diag.alpha[idx]
    tol = 1e-3 * float(np.max(np.abs(a))) if tol is None else tol
    h = np.diff(ts)
    # centered second differences on a possibly uneven grid
    app = 2.0 * (h[:-1] * a[2:] - (h[:-1] + h[1:]) * a[1:-1] + h[1:] * a[:-2]) / (h[:-1] * h[1:] * (h[:-1] + h[1:]))
    slack = app - a[1:-1]
    ta, tb = ts[0], ts[-1]
    lam, mu = np.linalg.solve([[np.exp(ta), np.exp(-ta)], [np.exp(tb), np.exp(-tb)]], [a[0], a[-1]])
    tau = lam * np.exp(ts) + mu * np.exp(-ts)
    excess = float(np.max(a - tau))
    return ConvexityReport(float(ta), float(tb), float(tol), bool(np.all(slack >= -tol)), float(np.min(slack)),
                           bool(np.all(a <= max(a[0], a[-1]) + tol)), excess <= tol, float(lam), float(mu), excess)


@dataclass(frozen=True)
class OscillationReport:
    osc: float
    bound: float
    grad_sup: float
    euclid_length: float

    @property
    def within_bound(self) -> bool:
        return self.osc <= self.bound + 1e-12 * max(1.0, self.bound)


def oscillation(F: ConformalGaussField, interval=None, chunk: int = 2048) -> OscillationReport:
    """Max node-pair distance |Y(x) - Y(y)|_xi on the sub-cylinder, with its a priori bound."""
    F = restrict(F, interval)
    pts = F.Y.reshape(-1, 5)
    osc = 0.0
    for i in range(0, len(pts), chunk):
        osc = max(osc, float(cdist(pts[i:i + chunk], pts).max()))
    grid = F.grid
    g2 = xi_norm2(F.dY[0]) + xi_norm2(F.dY[1])
    L = float(np.sum(grid.t_weights * np.sqrt(grid.circle_integral(g2))))
    sup = float(np.sqrt(g2.max()))
    return OscillationReport(osc, float(4 * np.pi * sup + L / np.sqrt(2 * np.pi)), sup, L)


@dataclass(frozen=True)
class Reparametrization:
    mode: str
    t: np.ndarray
    s: np.ndarray
    speed: np.ndarray  # ds/dt
    curve: Optional[np.ndarray] = None  # Y* samples (euclid mode)

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])


def _cumulative(t, f):
    return np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])


def reparametrize(F: ConformalGaussField, mode: str = "lorentz_average", interval=None) -> Reparametrization:
    """New circle parameter s with ds = speed(t) dt.

    lorentz_average: speed = (int |grad Y|^2_eta dtheta)^(1/2), total length ell.
    euclid_arclength_of_average: speed = |d_t Y*|_xi.
    """
    F = restrict(F, interval)
    grid = F.grid
    t = grid.t
    if mode == "lorentz_average":
        dens = grid.circle_integral(eta_norm2(F.dY[0]) + eta_norm2(F.dY[1]))
        scale = max(float(np.max(np.abs(dens))), 1.0)
        bad = np.nonzero(dens <= UMBILIC_CIRCLE_TOL * scale)[0]
        if len(bad):
            raise UmbilicCircleError(
                f"circle t = {t[bad[0]]:.6g} carries no conformal Gauss map energy; "
                "remove it with umbilic_circle_perturbation before reparametrizing")
        speed = np.sqrt(dens)
        curve = None
    elif mode == "euclid_arclength_of_average":
        curve = grid.circle_mean(F.Y)
        speed = xi_norm(grid.diff(curve, 0))
        if np.any(speed <= 1e-14):
            raise UmbilicCircleError("the average curve is stationary; no arclength parameter")
    else:
        raise ValueError(f"unknown reparametrization mode {mode!r}")
    # the trapezoid sum matches the t-weights used for ell
    return Reparametrization(mode, t, _cumulative(t, speed), speed, curve)


def polyline_arclength(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return np.concatenate([[0.0], np.cumsum(xi_norm(np.diff(P, axis=0)))])


def line_fit(Ystar, s=None) -> LineFit:
    """Least-squares line s -> a s + b through curve samples (s defaults to polyline arclength)."""
    P = np.asarray(Ystar, dtype=float)
    if P.ndim != 2 or P.shape[0] < 2:
        raise ValueError("line fit needs at least two samples")
    s = polyline_arclength(P) if s is None else np.asarray(s, dtype=float)
    if np.ptp(s) <= 0 or float(np.max(xi_norm(P - P[0]))) <= 1e-14:
        raise DegenerateFitError("all samples coincide; no line direction")
    X = np.stack([s, np.ones_like(s)], axis=1)
    (a, b), *_ = np.linalg.lstsq(X, P, rcond=None)
    res = float(np.max(xi_norm(P - X @ np.stack([a, b]))))
    return LineFit(a, b, res, float(eta_norm2(a)), float(eta_norm2(b) - 1.0), float(eta_inner(a, b)),
                   causal_class(a).value)


@dataclass(frozen=True)
class GeodesicResidual:
    residual: float  # sup |d^2 Y* / ds^2|_xi, s the euclidean arclength of Y*
    sup_alpha_over_beta: float


def geodesic_residual(F: ConformalGaussField, interval=None) -> GeodesicResidual:
    F = restrict(F, interval)
    grid = F.grid
    Ys = grid.circle_mean(F.Y)
    d1 = grid.diff(Ys, 0)
    d2 = grid.diff(Ys, 0, 2)
    sp = xi_norm(d1)
    if np.any(sp <= 1e-14):
        raise UmbilicCircleError("the average curve is stationary; no arclength parameter")
    dsp = np.sum(d1 * d2, axis=-1) / sp
    Yss = (d2 * sp[:, None] - d1 * dsp[:, None]) / sp[:, None] ** 3
    diag = circle_quantities(F)
    return GeodesicResidual(float(np.max(xi_norm(Yss))), float(np.max(diag.alpha_over_beta)))


def diagnose(F: ConformalGaussField, interval=None, with_osc: bool = True) -> CylinderDiagnostics:
    """circle_quantities plus the oscillation and the line fit of Y* over euclidean arclength."""
    F = restrict(F, interval)
    diag = circle_quantities(F)
    if with_osc:
        o = oscillation(F)
        diag.osc = o.osc
        diag.extra["osc_bound"] = float(o.bound)
    try:
        diag.line_fit = line_fit(diag.Ystar)
    except DegenerateFitError:
        log.warning("average curve is constant; no line fit")
    return diag


def export_diagnostics(diag: CylinderDiagnostics, csv_path, json_path=None, label: str = "") -> None:
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# schema={DIAG_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["label", "t", "alpha", "beta", "gamma", "delta", "Ystar_1", "Ystar_2", "Ystar_3",
                    "Ystar_4", "Ystar_5"])
        for i in range(len(diag.t)):
            w.writerow([label] + [repr(float(v)) for v in (diag.t[i], diag.alpha[i], diag.beta[i],
                                                           diag.gamma[i], diag.delta[i], *diag.Ystar[i])])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(diag.summary(), fh, indent=2, sort_keys=True)
