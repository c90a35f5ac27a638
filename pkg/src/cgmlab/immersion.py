"""Parametric surfaces with Taylor jets, fundamental forms, energies and fixtures."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from math import comb
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateImmersionError, DiffeomorphismError, PoleOnSurfaceError
from .grid import QuadratureGrid, central_stencil
from .jets import Jet, value_of
from .moebius import map_components, matrix_of

SURFACE_SCHEMA = "cgmlab.surface.v1"


@dataclass(frozen=True)
class ParametricImmersion:
    """A chart (t, theta) -> R^3 or S^3 in R^4.

    `position(t, theta)` returns a list of components and must be written with
    numpy operations only, so that it accepts floats, arrays and jets.
    """

    position: Callable
    t_range: tuple
    periodic_t: bool = False
    ambient: str = "R3"
    jet_mode: str = "analytic"
    fd_step: Optional[float] = None
    chi: Optional[int] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ambient not in ("R3", "S3"):
            raise ValueError("ambient must be 'R3' or 'S3'")
        if self.jet_mode not in ("analytic", "finite-difference"):
            raise ValueError("jet_mode must be 'analytic' or 'finite-difference'")

    @property
    def dim(self) -> int:
        return 3 if self.ambient == "R3" else 4

    @property
    def closed(self) -> bool:
        return self.chi is not None

    def grid(self, n_t: int, n_theta: Optional[int] = None) -> QuadratureGrid:
        return QuadratureGrid(float(self.t_range[0]), float(self.t_range[1]), n_t,
                              n_theta or n_t, self.periodic_t)

    def evaluate(self, t, theta) -> np.ndarray:
        t, theta = np.broadcast_arrays(np.asarray(t, float), np.asarray(theta, float))
        comps = self.position(t, theta)
        return np.stack([np.broadcast_to(np.asarray(c, float), t.shape) for c in comps], axis=-1)

    def finite_difference(self, h: Optional[float] = None) -> "ParametricImmersion":
        return replace(self, jet_mode="finite-difference", fd_step=h)

    def jets(self, t, theta, order: int = 3, h: Optional[float] = None) -> list:
        """Taylor jets of the position components at the points (t, theta)."""
        t, theta = np.broadcast_arrays(np.asarray(t, float), np.asarray(theta, float))
        if self.jet_mode == "analytic":
            comps = self.position(Jet.variable(t, 0, order), Jet.variable(theta, 1, order))
            return [c if isinstance(c, Jet) else Jet.constant(np.broadcast_to(c, t.shape), order)
                    for c in comps]
        h = self.fd_step or h or 1e-2  # an explicit step on the immersion wins over grid defaults
        cache = {}

        def sample(p, q):
            if (p, q) not in cache:
                cache[(p, q)] = self.evaluate(t + p * h, theta + q * h)
            return cache[(p, q)]

        derivs = {}
        for d in range(order + 1):
            for i in range(d, -1, -1):
                j = d - i
                oi, wi = central_stencil(i) if i else (np.array([0]), np.array([1.0]))
                oj, wj = central_stencil(j) if j else (np.array([0]), np.array([1.0]))
                acc = 0.0
                for p, a in zip(oi, wi):
                    for q, b in zip(oj, wj):
                        if a * b != 0.0:
                            acc = acc + a * b * sample(int(p), int(q))
                derivs[(i, j)] = acc / h ** (i + j)
        return [Jet.from_derivatives({k: v[..., c] for k, v in derivs.items()}, order)
                for c in range(self.dim)]


# vector helpers on lists of jets or arrays ---------------------------------

def _dot(u, v):
    out = u[0] * v[0]
    for a, b in zip(u[1:], v[1:]):
        out = out + a * b
    return out


def _cross(u, v):
    return [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]


def _det3(r0, r1, r2):
    return _dot(r0, _cross(r1, r2))


def _normal4(P, Pt, Pth):
    """Unit vector orthogonal to P, Pt, Pth in R^4: N_i = -det[e_i; P; Pt; Pth], the sign matching the R^3 normal under stereographic projection."""
    comps = []
    for i in range(4):
        cols = [c for c in range(4) if c != i]
        minor = _det3([P[c] for c in cols], [Pt[c] for c in cols], [Pth[c] for c in cols])
        comps.append(minor * (-1.0 if i % 2 == 0 else 1.0))
    return comps


@dataclass
class SurfaceJets:
    """Jets of the position, normal and fundamental forms (orders decrease with derivatives)."""

    ambient: str
    X: list
    dX: tuple  # (X_t, X_theta)
    ddX: tuple  # (X_tt, X_ttheta, X_thetatheta)
    N: list
    g: tuple  # (g11, g12, g22)
    ginv: tuple
    A: tuple
    H: Jet

    @property
    def sqrt_det_g(self):
        return (self.g[0] * self.g[2] - self.g[1] * self.g[1]) ** 0.5


def surface_jets(imm: ParametricImmersion, t, theta, order: int = 3,
                 h: Optional[float] = None) -> SurfaceJets:
    if order < 2:
        raise ValueError("fundamental forms need jets of order >= 2")
    X = imm.jets(t, theta, order, h)
    Xt = [x.d(0) for x in X]
    Xth = [x.d(1) for x in X]
    Xtt = [x.d(0) for x in Xt]
    Xtth = [x.d(1) for x in Xt]
    Xthth = [x.d(1) for x in Xth]
    g11, g12, g22 = _dot(Xt, Xt), _dot(Xt, Xth), _dot(Xth, Xth)
    det = g11 * g22 - g12 * g12
    dv = det.value
    scale = g11.value + g22.value
    bad = ~(dv > 1e-14 * scale * scale) | ~np.isfinite(dv)
    if np.any(bad):
        idx = tuple(int(k[0]) for k in np.nonzero(bad)) if dv.ndim else ()
        raise DegenerateImmersionError(f"det g <= 0 (degenerate immersion) at node {idx}")
    if imm.ambient == "R3":
        c = _cross(Xt, Xth)
        inv_len = _dot(c, c) ** -0.5
        N = [ci * inv_len for ci in c]
    else:
        c = _normal4([x.truncate(order - 1) for x in X], Xt, Xth)
        inv_len = _dot(c, c) ** -0.5
        N = [ci * inv_len for ci in c]
    inv_det = det.reciprocal()
    ginv = (g22 * inv_det, -g12 * inv_det, g11 * inv_det)
    A = (_dot(Xtt, N), _dot(Xtth, N), _dot(Xthth, N))
    H = (ginv[0] * A[0] + 2.0 * (ginv[1] * A[1]) + ginv[2] * A[2]) * 0.5
    return SurfaceJets(imm.ambient, X, (Xt, Xth), (Xtt, Xtth, Xthth), N, (g11, g12, g22), ginv, A, H)


@dataclass(frozen=True)
class FundamentalForms:
    position: np.ndarray
    g: np.ndarray  # (..., 2, 2)
    N: np.ndarray
    A: np.ndarray
    H: np.ndarray
    A0: np.ndarray  # traceless part, A - H g
    lambda_conf: np.ndarray  # log conformal factor, nan where the chart is not conformal

    @property
    def sqrt_det_g(self) -> np.ndarray:
        g = self.g
        return np.sqrt(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2)

    @property
    def A0_norm2(self) -> np.ndarray:
        """|A0|^2_g = tr((g^-1 A0)^2)."""
        S = np.linalg.solve(self.g, self.A0)
        return np.einsum("...ij,...ji->...", S, S)

    @property
    def gauss_curvature(self) -> np.ndarray:
        K = self.H**2 - 0.5 * self.A0_norm2
        return K + 1.0 if self.N.shape[-1] == 4 else K


def _sym(a, b, c):
    return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)


def forms_from_jets(J: SurfaceJets) -> FundamentalForms:
    g = _sym(*(value_of(x) for x in J.g))
    A = _sym(*(value_of(x) for x in J.A))
    H = value_of(J.H)
    A0 = A - H[..., None, None] * g
    g11, g12, g22 = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    conformal = (np.abs(g11 - g22) <= 1e-8 * (g11 + g22)) & (np.abs(g12) <= 1e-8 * (g11 + g22))
    lam = np.where(conformal, 0.5 * np.log(np.where(g11 > 0, g11, 1.0)), np.nan)
    return FundamentalForms(
        position=np.stack([value_of(x) for x in J.X], -1),
        g=g, N=np.stack([value_of(x) for x in J.N], -1), A=A, H=H, A0=A0, lambda_conf=lam,
    )


def fundamental_forms(imm: ParametricImmersion, t, theta=None, h: Optional[float] = None) -> FundamentalForms:
    """Fundamental forms at nodes; `t` may be a QuadratureGrid (all nodes) or coordinates."""
    if isinstance(t, QuadratureGrid):
        grid = t
        t, theta = grid.mesh()
        h = h or min(grid.dt, grid.dtheta)
    return forms_from_jets(surface_jets(imm, t, theta, order=2, h=h))


# energies ---------------------------------------------------------------------

def _forms_on(imm, grid):
    return fundamental_forms(imm, grid)


def willmore_W(imm: ParametricImmersion, grid: QuadratureGrid, forms: Optional[FundamentalForms] = None) -> float:
    """Integral of H^2 (R^3) or of 1 + H^2 (S^3) over the chart."""
    F = forms or _forms_on(imm, grid)
    dens = F.H**2 + (1.0 if imm.ambient == "S3" else 0.0)
    return float(grid.integrate(dens * F.sqrt_det_g))


def traceless_E(imm: ParametricImmersion, grid: QuadratureGrid, forms: Optional[FundamentalForms] = None) -> float:
    F = forms or _forms_on(imm, grid)
    return float(grid.integrate(F.A0_norm2 * F.sqrt_det_g))


@dataclass(frozen=True)
class EnergyIdentity:
    W: float
    E: float
    chi: Optional[int]
    defect: Optional[float]  # |E - 2W + 4 pi chi|; None for open charts


def energy_identity(imm: ParametricImmersion, grid: QuadratureGrid) -> EnergyIdentity:
    F = _forms_on(imm, grid)
    W, E = willmore_W(imm, grid, F), traceless_E(imm, grid, F)
    defect = abs(E - 2 * W + 4 * np.pi * imm.chi) if imm.closed else None
    return EnergyIdentity(W, E, imm.chi, defect)


def _rows(grid: QuadratureGrid, subregion) -> QuadratureGrid:
    if subregion is None:
        return grid
    lo, hi = subregion
    t = grid.t
    idx = np.nonzero((t >= lo - 1e-12) & (t <= hi + 1e-12))[0]
    if len(idx) < 2:
        raise ValueError("subregion contains fewer than two grid circles")
    return grid.sub(int(idx[0]), int(idx[-1]))


def gauss_curvature_integral(imm: ParametricImmersion, grid: QuadratureGrid, subregion=None) -> float:
    """Integral of K over the chart or over the t-band `subregion` (snapped to grid circles)."""
    g = _rows(grid, subregion)
    F = _forms_on(imm, g)
    return float(g.integrate(F.gauss_curvature * F.sqrt_det_g))


def s3_normal_energy_check(imm: ParametricImmersion, grid: QuadratureGrid) -> dict:
    """Both sides of E = 1/2 int |dN|^2 - chi for an S^3 surface, and their gap."""
    if imm.ambient != "S3" or not imm.closed:
        raise ValueError("needs a closed S^3 immersion")
    t, th = grid.mesh()
    J = surface_jets(imm, t, th, order=3, h=min(grid.dt, grid.dtheta))
    F = forms_from_jets(J)
    dN = [[value_of(n.d(a)) for n in J.N] for a in (0, 1)]
    gi = [value_of(x) for x in J.ginv]
    dn2 = gi[0] * _dot(dN[0], dN[0]) + 2 * gi[1] * _dot(dN[0], dN[1]) + gi[2] * _dot(dN[1], dN[1])
    E = float(grid.integrate(F.A0_norm2 * F.sqrt_det_g))
    rhs = float(0.5 * grid.integrate(dn2 * F.sqrt_det_g)) - imm.chi
    return {"E": E, "half_dN_minus_chi": rhs, "discrepancy": E - rhs}


# fixtures -----------------------------------------------------------------------

SPHERE_T = 18.0


def _sphere_chart(a, b, c):
    def position(t, th):
        s = 1.0 / np.cosh(t)
        return [a * s * np.cos(th), b * s * np.sin(th), c * np.tanh(t)]
    return position


def round_sphere(R: float = 1.0, T: float = SPHERE_T) -> ParametricImmersion:
    if not R > 0:
        raise ValueError("radius must be positive")
    return ParametricImmersion(_sphere_chart(R, R, R), (-T, T), False, chi=2,
                               name="round_sphere", params={"R": R})


def ellipsoid(a: float = 2.0, b: float = 1.0, c: float = 1.0, T: float = SPHERE_T) -> ParametricImmersion:
    if min(a, b, c) <= 0:
        raise ValueError("ellipsoid semi-axes must be positive")
    return ParametricImmersion(_sphere_chart(a, b, c), (-T, T), False, chi=2,
                               name="ellipsoid", params={"a": a, "b": b, "c": c})


def clifford_torus(R: float = np.sqrt(2.0), r: float = 1.0) -> ParametricImmersion:
    """Torus of revolution; the ratio R/r = sqrt(2) minimizes the Willmore energy."""
    if not R > r > 0:
        raise ValueError("need R > r > 0")

    def position(t, th):
        rho = R + r * np.cos(t)
        return [rho * np.cos(th), rho * np.sin(th), r * np.sin(t)]
    return ParametricImmersion(position, (0.0, 2 * np.pi), True, chi=0,
                               name="clifford_torus", params={"R": R, "r": r})


def _catenoid_position(scale):
    def position(t, th):
        c = np.cosh(t)
        return [scale * c * np.cos(th), scale * c * np.sin(th), scale * t]
    return position


def catenoid(t_range=(-2.0, 2.0)) -> ParametricImmersion:
    return ParametricImmersion(_catenoid_position(1.0), tuple(t_range), False,
                               name="catenoid", params={"t_range": list(t_range)})


def inverted_catenoid(eps: float = 0.5, t_range=(-2.0, 2.0)) -> ParametricImmersion:
    """Unit inversion x -> x/|x|^2 of eps * catenoid (neck radius eps)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    base = _catenoid_position(eps)

    def position(t, th):
        x = base(t, th)
        inv = 1.0 / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
        return [x[0] * inv, x[1] * inv, x[2] * inv]
    return ParametricImmersion(position, tuple(t_range), False, name="inverted_catenoid",
                               params={"eps": eps, "t_range": list(t_range)})


def neck_window(eps: float) -> tuple:
    """Collar of the inverted catenoid used for neck diagnostics: t in [2 log(1/eps), 3 log(1/eps)]."""
    L = np.log(1.0 / eps)
    return (2.0 * L, 3.0 * L)


def neck_member(eps: float) -> ParametricImmersion:
    """Inverted catenoid on the symmetric chart reaching the ends of the neck window."""
    return inverted_catenoid(eps, (-3.0 * np.log(1.0 / eps), 3.0 * np.log(1.0 / eps)))


FIXTURES = {
    "round_sphere": round_sphere,
    "clifford_torus": clifford_torus,
    "catenoid": catenoid,
    "inverted_catenoid": inverted_catenoid,
    "ellipsoid": ellipsoid,
}


def build_fixture(name: str, **params) -> ParametricImmersion:
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    if "t_range" in params:
        params["t_range"] = tuple(params["t_range"])
    return FIXTURES[name](**params)


def stereographic_lift(imm: ParametricImmersion) -> ParametricImmersion:
    """Psi = pi^{-1} o Phi in S^3, pi the stereographic projection from the north pole."""
    if imm.ambient != "R3":
        raise ValueError("expects an R^3 immersion")

    def position(t, th):
        x = imm.position(t, th)
        r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
        inv = 1.0 / (r2 + 1.0)
        return [2.0 * x[0] * inv, 2.0 * x[1] * inv, 2.0 * x[2] * inv, (r2 - 1.0) * inv]
    return replace(imm, position=position, ambient="S3", name=f"{imm.name}_s3")


# Moebius images -------------------------------------------------------------------

def _pole_check(q, t, th, tol=1e-9):
    qv = value_of(q)
    if not np.ndim(qv):
        qv = np.asarray(qv)[None]
    bad = np.abs(qv) <= tol
    if np.any(bad):
        k = np.argwhere(bad)[0]
        tt = np.broadcast_to(value_of(t), qv.shape)[tuple(k)]
        hh = np.broadcast_to(value_of(th), qv.shape)[tuple(k)]
        raise PoleOnSurfaceError(f"surface passes through the pole of the Moebius map at (t, theta) = ({tt:.6g}, {hh:.6g})")


def moebius_transform_immersion(imm: ParametricImmersion, M) -> ParametricImmersion:
    """The immersion Xi o Phi for the Moebius map Xi with matrix M (or a generator)."""
    if not isinstance(M, np.ndarray):
        M = matrix_of(M)
    M = np.asarray(M, dtype=float)
    base = imm.position

    if imm.ambient == "R3":
        def position(t, th):
            comps, q = map_components(M, base(t, th))
            _pole_check(q, t, th)
            return comps
    else:
        def position(t, th):
            x = base(t, th)
            nu = list(x) + [x[0] * 0.0 + 1.0]
            W = []
            for i in range(5):
                acc = None
                for j in range(5):
                    if M[i, j] != 0.0:
                        term = nu[j] * float(M[i, j])
                        acc = term if acc is None else acc + term
                W.append(acc if acc is not None else x[0] * 0.0)
            _pole_check(W[4], t, th)
            return [W[i] / W[4] for i in range(4)]
    return replace(imm, position=position, name=f"moebius({imm.name})")


# umbilic circle perturbation ----------------------------------------------------------

def smoothstep_poly(k: int) -> np.polynomial.Polynomial:
    """Degree 2k+1 polynomial S with S(0)=0, S(1)=1 and vanishing derivatives of order 1..k at both ends."""
    coef = np.zeros(2 * k + 2)
    for n in range(k + 1):
        coef[k + 1 + n] = comb(k + n, n) * comb(2 * k + 1, k - n) * (-1) ** n
    return np.polynomial.Polynomial(coef)


def smoothstep_derivs(x, k: int, order: int) -> list:
    """Derivatives 0..order of the clamped smoothstep at the points x."""
    x = np.asarray(x, dtype=float)
    P = smoothstep_poly(k)
    inside = (x > 0) & (x < 1)
    out = [np.where(x >= 1, 1.0, np.where(inside, P(x), 0.0))]
    Q = P
    for _ in range(order):
        Q = Q.deriv()
        out.append(np.where(inside, Q(x), 0.0))
    return out


def _apply_univariate(x, derivs_fn):
    if isinstance(x, Jet):
        return x._compose(derivs_fn(x.value, x.order))
    return derivs_fn(np.asarray(x, float), 0)[0]


@dataclass(frozen=True)
class PerturbationReport:
    a: float
    t: float
    s: float
    k: int
    w_norm: float  # ||f - id||_{W^{k,inf}}
    w_bound: float  # a * sum_i s^-i, up to the cutoff constant
    min_jacobian: float
    shrunk: bool


def umbilic_circle_perturbation(imm: ParametricImmersion, t: float, s: float, a: float, k: int = 1,
                                eps: Optional[float] = None, grid: Optional[QuadratureGrid] = None,
                                smoothness: int = 3):
    """Reparametrize Phi by f(tau, theta) = (tau + a eta(tau) sin theta, theta).

    eta = 1 on |tau - t| <= s/3 and eta = 0 for |tau - t| >= 2s/3.  When `eps` is
    given, `a` is shrunk until ||f - id||_{W^{k,inf}} <= eps.
    """
    if not 0 < s < 0.5:
        raise ValueError("need 0 < s < 1/2")
    lo, hi = imm.t_range
    if not imm.periodic_t and (t - s < lo or t + s > hi):
        raise ValueError("perturbation band [t - s, t + s] leaves the chart")
    P = smoothstep_poly(smoothness)
    xs = np.linspace(0.0, 1.0, 2001)
    sup = [1.0]
    Q = P
    for _ in range(max(k, 1)):
        Q = Q.deriv()
        sup.append(float(np.max(np.abs(Q(xs)))))
    per_unit = max(sup[p] * (3.0 / s) ** p for p in range(k + 1))
    shrunk = False
    if eps is not None and abs(a) * per_unit > eps:
        a = np.sign(a or 1.0) * eps / per_unit
        shrunk = True
    slope = abs(a) * sup[1] * 3.0 / s
    if slope >= 1.0:
        raise DiffeomorphismError(f"tau -> tau + a eta(tau) sin(theta) is not monotone (|a eta'| = {slope:.3g} >= 1)")

    def eta_derivs(tau, order):
        x = (2.0 * s / 3.0 - np.abs(tau - t)) / (s / 3.0)
        d = smoothstep_derivs(x, smoothness, order)
        sgn = -np.sign(tau - t)
        return [d[m] * (sgn * 3.0 / s) ** m for m in range(order + 1)]

    base = imm.position

    def position(tau, th):
        eta = _apply_univariate(tau, eta_derivs)
        return base(tau + a * eta * np.sin(th), th)

    min_jac = 1.0 - slope
    if grid is not None:
        tt, hh = grid.mesh()
        d1 = eta_derivs(tt, 1)[1]
        min_jac = float(np.min(1.0 + a * d1 * np.sin(hh)))
        if min_jac <= 0:
            raise DiffeomorphismError("Jacobian of the reparametrization is not positive on the grid")
    report = PerturbationReport(a=float(a), t=t, s=s, k=k, w_norm=float(abs(a) * per_unit),
                                w_bound=float(abs(a) * sum(s ** -i for i in range(k + 1))),
                                min_jacobian=float(min_jac), shrunk=shrunk)
    return replace(imm, position=position, name=f"perturbed({imm.name})"), report


# export ------------------------------------------------------------------------------

def export_surface_csv(imm: ParametricImmersion, grid: QuadratureGrid, path) -> None:
    t, th = grid.mesh()
    P = imm.evaluate(t, th)
    cols = ["t", "theta", "x", "y", "z"] + (["w"] if imm.dim == 4 else [])
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SURFACE_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(grid.n_t):
            for j in range(grid.n_theta):
                w.writerow([repr(float(t[i, j])), repr(float(th[i, j]))] + [repr(float(v)) for v in P[i, j]])
