"""Second variation of the Dirichlet and area functionals of Y, test fields and index bounds.

A variation field Z is a section of Y^*T S^{3,1}: <Z, Y> = 0 at every node.  Grid
derivatives of Z use the chart's differentiation rule (spectral in periodic
directions, fourth order finite differences otherwise).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .conformal_gauss import ConformalGaussField, _sym, energies, laplacian
from .cylinder_analysis import LineFit, circle_quantities, line_fit, reparametrize, restrict, rows_in
from .errors import CGMError, FeasibilityError, PreconditionError
from .immersion import smoothstep_derivs
from .minkowski import eta_inner, eta_norm2, xi_norm

log = logging.getLogger(__name__)

CUTOFF_SMOOTHNESS = 3  # degree 7 smoothstep
TANGENCY_TOL = 1e-8


class DegenerateDirectionError(CGMError):
    pass


@dataclass
class VariationField:
    Z: np.ndarray  # (n_t, n_theta, 5)
    support: Optional[tuple] = None  # t-interval, None for the whole chart
    recipe: str = ""

    def __mul__(self, c):
        return VariationField(self.Z * c, self.support, self.recipe)

    __rmul__ = __mul__

    def __add__(self, other):
        sup = None
        if self.support is not None and other.support is not None:
            sup = (min(self.support[0], other.support[0]), max(self.support[1], other.support[1]))
        return VariationField(self.Z + other.Z, sup, "sum")


def _check_variation(F: ConformalGaussField, V: VariationField) -> None:
    Z = V.Z
    if Z.shape != F.Y.shape:
        raise ValueError(f"variation has shape {Z.shape}, field has {F.Y.shape}")
    scale = max(float(np.max(np.abs(Z))), 1e-300)
    tang = float(np.max(np.abs(eta_inner(Z, F.Y))))
    if tang > TANGENCY_TOL * scale:
        raise ValueError(f"variation is not tangent to the De Sitter space along Y (max |<Z, Y>| = {tang:.3g})")
    if V.support is not None:
        lo, hi = V.support
        t = F.grid.t
        if lo < F.grid.t0 - 1e-12 or hi > F.grid.t1 + 1e-12:
            raise ValueError("variation support exceeds the grid")
        outside = (t < lo - 1e-12) | (t > hi + 1e-12)
        if np.any(outside) and float(np.max(np.abs(Z[outside]))) > 1e-12 * scale:
            raise ValueError("variation does not vanish outside its declared support")


def _contract(g, G):
    sg = np.sqrt(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2)
    return sg * np.einsum("...ij,...ji->...", np.linalg.inv(g), G)


def _pullback(dA, dB=None):
    dB = dA if dB is None else dB
    return _sym(eta_inner(dA[0], dB[0]), 0.5 * (eta_inner(dA[0], dB[1]) + eta_inner(dA[1], dB[0])),
                eta_inner(dA[1], dB[1]))


# second variation ------------------------------------------------------------------------

def second_variation_dirichlet(F: ConformalGaussField, V: VariationField) -> float:
    """int |nabla Z|^2 - (|Z|^2 |grad Y|^2 - sum_i <Z, d_i Y>^2), all in eta and the chart metric.

    nabla is the connection of S^{3,1}: the component of dZ along Y is removed.
    """
    _check_variation(F, V)
    Z, Y = V.Z, F.Y
    dZ = F.grid.gradient(Z)
    c = eta_inner(dZ, Y[None])
    dZc = dZ - c[..., None] * Y[None]
    kinetic = _contract(F.g, _pullback(dZc))
    zY = np.stack([eta_inner(Z, F.dY[0]), eta_inner(Z, F.dY[1])])
    Q = _sym(zY[0] * zY[0], zY[0] * zY[1], zY[1] * zY[1])
    curvature = eta_norm2(Z) * _contract(F.g, F.G) - _contract(F.g, Q)
    return float(F.grid.integrate(kinetic - curvature))


def _deformed_pullback(F: ConformalGaussField, Z, dZ, u: float):
    """Pullback metric of normalize_eta(Y + u Z) with exact chain-rule derivatives."""
    P = F.Y + u * Z
    dP = F.dY + u * dZ
    n2 = eta_norm2(P)
    if np.any(n2 <= 0):
        raise CGMError("Y + uZ left the De Sitter side of the light cone; reduce the step")
    n = np.sqrt(n2)
    dn = eta_inner(dP, P[None]) / n
    dYu = dP / n[..., None] - P[None] * (dn / n2)[..., None]
    return _pullback(dYu)


def dirichlet_along(F: ConformalGaussField, Z, dZ, u: float) -> float:
    return float(0.5 * F.grid.integrate(_contract(F.g, _deformed_pullback(F, Z, dZ, u))))


def area_along(F: ConformalGaussField, Z, dZ, u: float) -> float:
    G = _deformed_pullback(F, Z, dZ, u)
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] ** 2
    return float(F.grid.integrate(np.sqrt(np.clip(det, 0.0, None))))


def _fd_second(fun, h: float) -> float:
    # centered differences with steps h and 2h, Richardson-combined (fourth order in h)
    f0 = fun(0.0)
    d1 = (fun(h) - 2 * f0 + fun(-h)) / h**2
    d2 = (fun(2 * h) - 2 * f0 + fun(-2 * h)) / (4 * h**2)
    return (4 * d1 - d2) / 3


def default_step(V: VariationField) -> float:
    return 1e-3 / max(float(np.max(xi_norm(V.Z))), 1e-300)


def dirichlet_fd_oracle(F: ConformalGaussField, V: VariationField, h: Optional[float] = None) -> float:
    """Second u-derivative at 0 of D(normalize_eta(Y + uZ))."""
    _check_variation(F, V)
    dZ = F.grid.gradient(V.Z)
    return _fd_second(lambda u: dirichlet_along(F, V.Z, dZ, u), h or default_step(V))


def area_fd_oracle(F: ConformalGaussField, V: VariationField, h: Optional[float] = None) -> float:
    """Second u-derivative at 0 of A(normalize_eta(Y + uZ))."""
    _check_variation(F, V)
    dZ = F.grid.gradient(V.Z)
    return _fd_second(lambda u: area_along(F, V.Z, dZ, u), h or default_step(V))


# linearized constraint -------------------------------------------------------------------

def _psi_metric(F: ConformalGaussField):
    gP = F.g_psi
    sg = np.sqrt(gP[..., 0, 0] * gP[..., 1, 1] - gP[..., 0, 1] ** 2)
    return gP, sg, np.linalg.inv(gP)


def grad_Y_psi2(F: ConformalGaussField) -> np.ndarray:
    """|grad Y|^2_eta measured with the metric of the S^3 surface."""
    gP, sg, _ = _psi_metric(F)
    return _contract(gP, F.G) / sg


@dataclass(frozen=True)
class ConstraintResiduals:
    r1: np.ndarray  # (n_t, n_theta), nan at excluded umbilic nodes
    r2: np.ndarray  # (2, n_t, n_theta)
    mask: np.ndarray

    @property
    def r1_max(self) -> float:
        return float(np.nanmax(np.abs(self.r1))) if np.any(self.mask) else 0.0

    @property
    def r2_max(self) -> float:
        return float(np.nanmax(np.abs(self.r2))) if np.any(self.mask) else 0.0


def constraint_residuals(F: ConformalGaussField, V, interior: int = 0) -> ConstraintResiduals:
    """r1 = <nu, Lap Z - |grad Y|^2 Z>, r2 = <nu, dZ>, with Lap and |grad Y|^2 of the S^3 metric.

    `V` may be a VariationField or a raw (n_t, n_theta, 5) array (used for the
    identities with Z = beta nu or alpha^k d_k nu).  `interior` drops that many
    rows at each non-periodic chart end.
    """
    Z = V.Z if isinstance(V, VariationField) else np.asarray(V, dtype=float)
    gP, sg, _ = _psi_metric(F)
    dZ = F.grid.gradient(Z)
    lapZ = laplacian(F.grid, gP, Z, dZ)
    r1 = eta_inner(F.nu, lapZ - grad_Y_psi2(F)[..., None] * Z)
    r2 = eta_inner(F.nu[None], dZ)
    mask = np.ones(F.grid.shape, bool)
    if interior and not F.grid.periodic_t:
        mask[:interior] = False
        mask[-interior:] = False
    umb = ~F.frame_valid & mask & (np.max(np.abs(Z), axis=-1) > 0)
    if np.any(umb):
        warnings.warn(f"{int(umb.sum())} umbilic nodes inside the support are excluded from the residuals")
    mask &= F.frame_valid
    r1 = np.where(mask, r1, np.nan)
    r2 = np.where(mask[None], r2, np.nan)
    return ConstraintResiduals(r1, r2, mask)


def divergence_psi(F: ConformalGaussField, alpha) -> np.ndarray:
    """div of the chart vector field alpha^k for the S^3 metric."""
    _, sg, _ = _psi_metric(F)
    flux = [sg * alpha[0], sg * alpha[1]]
    return (F.grid.diff(flux[0], 0) + F.grid.diff(flux[1], 1)) / sg


# test field ------------------------------------------------------------------------------

def parallel_direction(a, b, tol: float = 1e-10) -> np.ndarray:
    """Unit spacelike E with <E, a> = <E, b> = 0.

    The complement {x : <x, a> = <x, b> = 0} is spanned by the Euclidean projections
    of e_1..e_5; among the spacelike ones, normalized, the one with the smallest |E_5|
    wins, earlier basis vectors breaking ties.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.stack([a, b]) * np.array([1, 1, 1, 1, -1.0])
    sv = np.linalg.svd(C, compute_uv=False)
    if sv[1] <= tol * max(sv[0], 1e-300):
        raise DegenerateDirectionError("a and b are parallel; the line has no well-defined direction")
    _, _, vh = np.linalg.svd(C)
    B = vh[2:]  # orthonormal basis of the complement
    best, best_key = None, None
    for i in range(5):
        p = B.T @ B[:, i]
        x2 = float(p @ p)
        if x2 <= tol:
            continue
        n2 = float(eta_norm2(p))
        if n2 <= 1e-8 * x2:
            continue
        E = p / np.sqrt(n2)
        key = round(abs(E[4]), 12)
        if best is None or key < best_key:
            best, best_key = E, key
    if best is None:
        raise DegenerateDirectionError("no spacelike direction orthogonal to the fitted line")
    return best


def cutoff(s, ell: float) -> np.ndarray:
    """rho: 0 on [0, 1/2] u [ell - 1/2, ell], 1 on [1, ell - 1], degree-7 smoothstep ramps between."""
    s = np.asarray(s, dtype=float)
    up = smoothstep_derivs(2.0 * (s - 0.5), CUTOFF_SMOOTHNESS, 0)[0]
    down = smoothstep_derivs(2.0 * (ell - 0.5 - s), CUTOFF_SMOOTHNESS, 0)[0]
    return up * down


@dataclass
class TestFieldIngredients:
    E: np.ndarray
    s: np.ndarray  # per circle of the chart (nan outside the interval)
    f: np.ndarray
    rho: np.ndarray
    d: np.ndarray  # per node
    e: np.ndarray  # (2, n_t, n_theta)
    ell: float
    speed: np.ndarray  # lorentz speed ds/dt per circle of the interval
    interval: tuple

    __test__ = False  # not a pytest class


def build_test_field(F: ConformalGaussField, interval, fit: Optional[LineFit] = None,
                     E: Optional[np.ndarray] = None) -> tuple[VariationField, TestFieldIngredients]:
    """The field rho f E - rho f <E, Y> Y + d nu + e^i d_i nu along the t-interval.

    s is the lorentz-average parameter of the interval, f = sin(pi s / ell),
    e = grad(rho f) <E, nu> and d makes the first constraint hold, both with the S^3 metric.
    """
    if E is None:
        if fit is None:
            raise PreconditionError("run line_fit first or pass the direction E")
        E = parallel_direction(fit.a, fit.b)
    E = np.asarray(E, dtype=float)
    i0, i1 = rows_in(F, interval)
    rep = reparametrize(restrict(F, interval), "lorentz_average")
    ell = rep.length
    if not ell > 2.0:
        raise PreconditionError(f"lorentz length {ell:.4g} of the interval is too short for the cutoff (need > 2)")
    grid = F.grid
    s = np.full(grid.n_t, np.nan)
    s[i0:i1 + 1] = rep.s
    rho = np.zeros(grid.n_t)
    f = np.zeros(grid.n_t)
    rho[i0:i1 + 1] = cutoff(rep.s, ell)
    f[i0:i1 + 1] = np.sin(np.pi * rep.s / ell)
    phi = np.broadcast_to((rho * f)[:, None], grid.shape).copy()

    gP, sg, gPi = _psi_metric(F)
    dphi = grid.gradient(phi)
    Enu = eta_inner(E, F.nu)
    e = np.einsum("...ij,j...->i...", gPi, dphi) * Enu[None]
    lap_phi = laplacian(grid, gP, phi, dphi)
    EdNu = eta_inner(E, F.dnu)  # (2, n_t, n_theta)
    d = -0.5 * (lap_phi * Enu + grad_Y_psi2(F) * phi * Enu) - np.einsum("i...,...ij,j...->...", dphi, gPi, EdNu)
    EY = eta_inner(E, F.Y)
    Z = (phi[..., None] * E - (phi * EY)[..., None] * F.Y + d[..., None] * F.nu
         + e[0][..., None] * F.dnu[0] + e[1][..., None] * F.dnu[1])
    # the field vanishes identically where rho f does
    Z[(rho * f) == 0.0] = 0.0
    t = grid.t
    V = VariationField(Z, (float(t[i0]), float(t[i1])), "test_field")
    return V, TestFieldIngredients(E, s, f, rho, d, e, ell, rep.speed, (float(t[i0]), float(t[i1])))


# certificates ----------------------------------------------------------------------------

def _spline_quadrature(sp: CubicSpline, a: float, b: float, weight) -> float:
    """int_a^b sp(x) weight(x) dx, Gauss-Legendre on every knot interval (the spline is cubic there)."""
    knots = np.asarray(sp.x)
    cuts = np.concatenate([[a], knots[(knots > a) & (knots < b)], [b]])
    x, w = np.polynomial.legendre.leggauss(16)
    lo, hi = cuts[:-1, None], cuts[1:, None]
    pts = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    return float(np.sum(0.5 * (hi - lo) * w * sp(pts) * weight(pts)))


def profile_integral(s, speed, ell: float) -> tuple[float, float]:
    """int_1^{ell-1} speed (4 pi f'^2 - f^2) ds, directly and through the cos/sin rewriting."""
    sp = CubicSpline(s, speed)
    k = np.pi / ell
    direct = _spline_quadrature(sp, 1.0, ell - 1.0,
                                lambda x: 4 * np.pi * (k * np.cos(k * x)) ** 2 - np.sin(k * x) ** 2)
    c = 4 * np.pi**3 / ell**2
    expanded = _spline_quadrature(sp, 1.0, ell - 1.0, lambda x: c - (1 + c) * np.sin(k * x) ** 2)
    return direct, expanded


@dataclass
class QuadraticFormReport:
    interval: tuple
    area: float
    mu: float
    ell: float
    d2D: float
    d2A_fd: float
    bound: float
    r1_max: float
    r2_max: float
    profile_direct: float
    profile_expanded: float
    tol: float = 1e-6
    extra: dict = field(default_factory=dict)

    @property
    def negative(self) -> bool:
        return self.d2D < 0

    @property
    def area_below_dirichlet(self) -> bool:
        return self.d2A_fd <= self.d2D + self.tol

    @property
    def profile_gap(self) -> float:
        return abs(self.profile_direct - self.profile_expanded)

    def to_dict(self) -> dict:
        return {"interval": list(self.interval), "area": self.area, "mu": self.mu, "ell": self.ell,
                "d2D": self.d2D, "bound": self.bound, "d2A_fd": self.d2A_fd, "r1_max": self.r1_max,
                "r2_max": self.r2_max, "negative": self.negative,
                "area_below_dirichlet": self.area_below_dirichlet,
                "profile_direct": self.profile_direct, "profile_expanded": self.profile_expanded}


def interval_area(F: ConformalGaussField, interval) -> float:
    return energies(restrict(F, interval)).area


def negativity_certificate(F: ConformalGaussField, interval, mu: float, fit: Optional[LineFit] = None,
                           tol: float = 1e-6, residual_rows: int = 0) -> QuadraticFormReport:
    """Build the test field on the interval and evaluate the second variations.

    Requires mu <= area of the interval <= 2 mu.  The line fit defaults to the
    fit of the average curve over the interval.
    """
    area = interval_area(F, interval)
    if not (mu * (1 - 1e-12) <= area <= 2 * mu * (1 + 1e-12)):
        raise PreconditionError(f"interval area {area:.6g} is outside [mu, 2 mu] = [{mu:.6g}, {2 * mu:.6g}]")
    if fit is None:
        fit = line_fit(circle_quantities(F, interval).Ystar)
    V, ing = build_test_field(F, interval, fit)
    d2D = second_variation_dirichlet(F, V)
    d2A = area_fd_oracle(F, V)
    res = constraint_residuals(F, V, interior=residual_rows)
    i0, i1 = rows_in(F, interval)
    direct, expanded = profile_integral(ing.s[i0:i1 + 1], ing.speed, ing.ell)
    rep = QuadraticFormReport(ing.interval, area, mu, ing.ell, d2D, d2A, -np.pi**3 * mu / (2 * ing.ell**2),
                              res.r1_max, res.r2_max, direct, expanded, tol)
    log.info("certificate on [%.4g, %.4g]: d2D=%.6g d2A=%.6g ell=%.4g", *ing.interval, d2D, d2A, ing.ell)
    return rep


@dataclass
class IndexBound:
    count: int
    J: int
    lam: float
    pieces: list  # list of (t_lo, t_hi)
    reports: list  # QuadraticFormReport or error strings

    def to_dict(self) -> dict:
        return {"J": self.J, "lambda": self.lam, "count": self.count,
                "pieces": [list(p) for p in self.pieces],
                "certificates": [r.to_dict() if isinstance(r, QuadraticFormReport) else {"error": r}
                                 for r in self.reports]}


def _circle_areas(F: ConformalGaussField) -> np.ndarray:
    G = F.G
    det = np.clip(G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] ** 2, 0.0, None)
    return F.grid.circle_integral(np.sqrt(det))


def subdivide(F: ConformalGaussField, lam: float, J: int):
    """Greedy left-to-right pieces with areas in [lam/(2J), lam/J], each as large as allowed.

    Returns a list of row ranges, or None when J pieces do not fit.
    """
    a = _circle_areas(F)
    t = F.grid.t
    seg = 0.5 * (a[1:] + a[:-1]) * np.diff(t)  # trapezoid area between consecutive circles
    lo, hi = lam / (2 * J), lam / J
    pieces, start = [], 0
    for _ in range(J):
        acc, end = 0.0, start
        while end < len(seg) and acc + seg[end] <= hi:
            acc += seg[end]
            end += 1
        if acc < lo:
            return None
        pieces.append((start, end))
        start = end
    return pieces


def index_lower_bound(F: ConformalGaussField, lam: float, J: int, interval=None,
                      fit: Optional[LineFit] = None) -> IndexBound:
    """Count negative test-field certificates over a subdivision into J pieces."""
    if J < 1:
        raise ValueError("J must be at least 1")
    G = restrict(F, interval)
    total = energies(G).area
    if total < lam:
        raise PreconditionError(f"cylinder area {total:.6g} is below lambda = {lam:.6g}")
    pieces = subdivide(G, lam, J)
    if pieces is None:
        best = 0
        for j in range(J - 1, 0, -1):
            if subdivide(G, lam, j) is not None:
                best = j
                break
        raise FeasibilityError(f"no subdivision into {J} pieces with areas in [lambda/(2J), lambda/J]; "
                               f"largest feasible J is {best}", max_feasible=best)
    t = G.grid.t
    mu = lam / (2 * J)
    ivs, reports, count = [], [], 0
    for i0, i1 in pieces:
        iv = (float(t[i0]), float(t[i1]))
        ivs.append(iv)
        try:
            rep = negativity_certificate(F, iv, mu, fit)
            count += int(rep.negative)
            reports.append(rep)
        except CGMError as exc:
            reports.append(f"{type(exc).__name__}: {exc}")
    return IndexBound(count, J, lam, ivs, reports)


def smooth_variation(F: ConformalGaussField, rng: np.random.Generator, interval=None,
                     modes: int = 2) -> VariationField:
    """Random smooth tangent field: bump(t) * trigonometric polynomial in theta, projected along Y."""
    t, th = F.grid.mesh()
    if interval is None:
        bump = np.ones_like(t)
    else:
        lo, hi = interval
        x = (t - lo) / (hi - lo)
        bump = np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)) ** 4, 0.0)
    V = np.zeros(F.Y.shape)
    for k in range(modes + 1):
        c, s = rng.normal(size=(2, 5))
        w = rng.normal(size=5) * 0.3
        V += np.cos(k * th)[..., None] * c + np.sin(k * th)[..., None] * s
        V += np.cos((k + 1) * 0.5 * t)[..., None] * w
    V *= bump[..., None]
    Z = V - eta_inner(V, F.Y)[..., None] * F.Y
    return VariationField(Z, interval, "random")
