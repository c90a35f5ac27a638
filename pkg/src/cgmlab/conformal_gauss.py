"""The conformal Gauss map Y of a surface and the identities it satisfies.

For an R^3 surface with unit normal n and mean curvature H,
    Y = H (Phi, (|Phi|^2 - 1)/2, (|Phi|^2 + 1)/2) + (n, <n, Phi>, <n, Phi>),
and for a surface Psi in S^3 with normal N, Y = (H Psi + N, H).  The two agree
under stereographic projection.  Y takes values in the De Sitter space |Y|^2 = 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import PreconditionError
from .grid import QuadratureGrid
from .immersion import ParametricImmersion, SurfaceJets, forms_from_jets, surface_jets
from .jets import Jet, value_of
from .minkowski import eta_inner, null_normal_pairs, xi_norm2

FIELD_SCHEMA = "cgmlab.field.v1"
UMBILIC_REL = 1e-8


def _sym(a, b, c):
    return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)


def _stack(comps) -> np.ndarray:
    return np.stack([np.asarray(value_of(c), float) for c in comps], -1)


def _dstack(comps, axis) -> np.ndarray:
    return np.stack([c.d(axis).value for c in comps], -1)


@dataclass
class ConformalGaussField:
    grid: QuadratureGrid
    Y: np.ndarray  # (n_t, n_theta, 5)
    dY: np.ndarray  # (2, n_t, n_theta, 5), exact derivatives from the jets
    dY_closed: np.ndarray  # same, from the closed-form derivative formula
    nu: np.ndarray  # (Psi, 1), Psi the S^3 image of the surface
    dnu: np.ndarray
    nu_star: np.ndarray
    frame_valid: np.ndarray  # False at umbilic nodes
    H: np.ndarray  # mean curvature of the source surface
    g: np.ndarray  # source metric (n_t, n_theta, 2, 2)
    A0_norm2: np.ndarray
    source: Optional[ParametricImmersion] = None

    # metric helpers ------------------------------------------------------------
    @property
    def sqrt_g(self) -> np.ndarray:
        g = self.g
        return np.sqrt(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2)

    @property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @property
    def G(self) -> np.ndarray:
        """Pullback of eta by Y: G_ij = <d_i Y, d_j Y>."""
        d = self.dY
        return _sym(eta_inner(d[0], d[0]), eta_inner(d[0], d[1]), eta_inner(d[1], d[1]))

    @property
    def g_psi(self) -> np.ndarray:
        """Metric of the S^3 surface: <d_i nu, d_j nu>."""
        d = self.dnu
        return _sym(eta_inner(d[0], d[0]), eta_inner(d[0], d[1]), eta_inner(d[1], d[1]))

    def contract(self, G, metric=None) -> np.ndarray:
        """sqrt(g) g^ij G_ij, the conformally invariant density of a bilinear form."""
        g = self.g if metric is None else metric
        sg = np.sqrt(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2)
        return sg * np.einsum("...ij,...ji->...", np.linalg.inv(g), G)

    @property
    def dirichlet_density(self) -> np.ndarray:
        """sqrt(g) |grad Y|^2_eta; equals |d_t Y|^2 + |d_theta Y|^2 in conformal charts."""
        return self.contract(self.G)

    @property
    def grad_eta2(self) -> np.ndarray:
        return self.dirichlet_density / self.sqrt_g

    @property
    def grad_xi2_flat(self) -> np.ndarray:
        return xi_norm2(self.dY[0]) + xi_norm2(self.dY[1])

    @property
    def dY_discrepancy(self) -> float:
        return float(np.max(np.abs(self.dY - self.dY_closed)))

    def transformed(self, M) -> "ConformalGaussField":
        """The field M Y (M in SO(4,1)); nu and nu* are carried along up to the nu_5 scaling."""
        M = np.asarray(M, float)
        app = lambda V: V @ M.T  # noqa: E731
        return ConformalGaussField(self.grid, app(self.Y), app(self.dY), app(self.dY_closed),
                                   app(self.nu), app(self.dnu), app(self.nu_star), self.frame_valid,
                                   self.H, self.g, self.A0_norm2, None)


def _lift_jets(X):
    x2 = X[0] * X[0] + X[1] * X[1] + X[2] * X[2]
    return [X[0], X[1], X[2], (x2 - 1.0) * 0.5, (x2 + 1.0) * 0.5]


def build_cgm(imm: ParametricImmersion, grid: QuadratureGrid, h: Optional[float] = None) -> ConformalGaussField:
    """Sample Y and its first derivatives on the grid (exact jets of order 3 in Phi)."""
    t, th = grid.mesh()
    h = h or min(grid.dt, grid.dtheta)
    J = surface_jets(imm, t, th, order=3, h=h)
    forms = forms_from_jets(J)
    H = J.H  # order 1
    X = [x.truncate(2) for x in J.X]
    N = [n.truncate(1) for n in J.N]
    if imm.ambient == "R3":
        L = _lift_jets(X)  # order 2
        nX = N[0] * X[0] + N[1] * X[1] + N[2] * X[2]
        Yj = [H * L[i] + N[i] for i in range(3)] + [H * L[3] + nX, H * L[4] + nX]
        nu_j = [c / L[4] for c in L]
    else:
        Yj = [H * X[i] + N[i] for i in range(4)] + [H]
        nu_j = list(X) + [Jet.constant(np.ones_like(t), 2)]
        L = nu_j
    Y = _stack(Yj)
    dY = np.stack([_dstack(Yj, 0), _dstack(Yj, 1)])

    # closed form: d_i Y = d_i H L - A0_i^j d_j L
    dL = np.stack([_dstack(L, 0), _dstack(L, 1)])
    dH = np.stack([H.deriv(1, 0), H.deriv(0, 1)])
    mixed = np.einsum("...ik,...kj->...ij", forms.A0, np.linalg.inv(forms.g))  # A0_i^j
    Lv = _stack(L)
    dY_closed = dH[..., None] * Lv[None] - np.einsum("...ij,j...a->i...a", mixed, dL)

    nu = _stack(nu_j)
    dnu = np.stack([_dstack(nu_j, 0), _dstack(nu_j, 1)])

    ginv = np.linalg.inv(forms.g)
    dens = np.einsum("...ij,...ji->...", ginv,
                     _sym(eta_inner(dY[0], dY[0]), eta_inner(dY[0], dY[1]), eta_inner(dY[1], dY[1])))
    # |A0|^2 compared against the metric scale; an all-umbilic surface has no valid node
    scale = float(np.median(np.trace(ginv, axis1=-2, axis2=-1)))
    valid = dens > UMBILIC_REL * max(float(np.median(np.abs(dens))), 1e-4 * scale)
    nu_star = _nu_star(Y, dY, nu, valid)

    return ConformalGaussField(grid=grid, Y=Y, dY=dY, dY_closed=dY_closed, nu=nu, dnu=dnu,
                               nu_star=nu_star, frame_valid=valid, H=forms.H, g=forms.g,
                               A0_norm2=forms.A0_norm2, source=imm)


def _nu_star(Y, dY, nu, valid):
    """The null normal paired with nu: <nu*, nu> = -1, nu* orthogonal to Y and dY."""
    V = np.stack([Y, dY[0], dY[1]], -2)  # (..., 3, 5)
    G = np.einsum("...ia,...ja->...ij", V * np.array([1, 1, 1, 1, -1.0]), V)
    G = np.where(valid[..., None, None], G, np.eye(3))
    w = np.zeros_like(Y)
    w[..., :4] = -nu[..., :4]
    w[..., 4] = 1.0
    coef = np.linalg.solve(G, eta_inner(V, w[..., None, :])[..., None])[..., 0]
    w = w - np.einsum("...i,...ia->...a", coef, V)
    wn = eta_inner(w, nu)
    a = -1.0 / wn
    b = -a * eta_inner(w, w) / (2.0 * wn)
    out = a[..., None] * w + b[..., None] * nu
    out[~valid] = np.nan
    return out


# identities -----------------------------------------------------------------------

def conformality_defect(F: ConformalGaussField) -> np.ndarray:
    """max_ij |<d_i Y, d_j Y> - 1/2 |A0|^2_g g_ij| per node."""
    D = F.G - 0.5 * F.A0_norm2[..., None, None] * F.g
    return np.max(np.abs(D), axis=(-2, -1))


@dataclass(frozen=True)
class EnergyReport:
    area: float
    dirichlet: float
    E_of_source: float


def energies(F: ConformalGaussField) -> EnergyReport:
    G = F.G
    det = np.clip(G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] ** 2, 0.0, None)
    area = float(F.grid.integrate(np.sqrt(det)))
    dirichlet = float(0.5 * F.grid.integrate(F.dirichlet_density))
    E = float(F.grid.integrate(F.A0_norm2 * F.sqrt_g))
    return EnergyReport(area, dirichlet, E)


def _expand(a, ndim):
    return a.reshape(a.shape + (1,) * (ndim - a.ndim))


def divergence_density(grid: QuadratureGrid, g, dfield) -> np.ndarray:
    """d_i (sqrt(g) g^ij d_j f) for a field with derivatives dfield = (d_t f, d_theta f)."""
    sg = np.sqrt(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2)
    gi = np.linalg.inv(g)
    n = dfield[0].ndim
    flux = [_expand(sg * gi[..., i, 0], n) * dfield[0] + _expand(sg * gi[..., i, 1], n) * dfield[1]
            for i in range(2)]
    return grid.diff(flux[0], 0) + grid.diff(flux[1], 1)


def laplacian(grid: QuadratureGrid, g, f, df=None) -> np.ndarray:
    """Laplace-Beltrami of f for the metric g, by grid differentiation."""
    if df is None:
        df = grid.gradient(f)
    sg = np.sqrt(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2)
    div = divergence_density(grid, g, df)
    return div / _expand(sg, div.ndim)


@dataclass(frozen=True)
class WillmoreResidual:
    R: np.ndarray  # density-weighted residual sqrt(g) (Delta_g Y + |grad Y|^2 Y)
    norm: float
    constraint_defect: np.ndarray  # R - R_5 nu
    constraint_norm: float


def willmore_residual(F: ConformalGaussField) -> WillmoreResidual:
    """Harmonic-map residual of Y and the mean-curvature constraint defect.

    Both are reported as densities sqrt(g)(...), which do not depend on the
    conformal factor of the chart metric.
    """
    R = divergence_density(F.grid, F.g, F.dY) + F.dirichlet_density[..., None] * F.Y
    defect = R - R[..., 4:5] * F.nu
    return WillmoreResidual(R, float(np.max(np.abs(R))), defect, float(np.max(np.abs(defect))))


@dataclass(frozen=True)
class HopfQuartic:
    h: np.ndarray
    Q: np.ndarray
    dbar_Q: np.ndarray
    h_norm: float
    dbar_Q_norm: float


def hopf_and_quartic(F: ConformalGaussField) -> HopfQuartic:
    """Hopf differential <Y_z, Y_z> and Bryant quartic <Y_zz, Y_zz>, d_z = (d_t - i d_theta)/2."""
    g = F.g
    skew = np.max(np.abs(g[..., 0, 0] - g[..., 1, 1]) + 2 * np.abs(g[..., 0, 1]))
    if skew > 1e-8 * float(np.max(g[..., 0, 0] + g[..., 1, 1])):
        raise PreconditionError("the Hopf differential and the quartic need a conformal chart")
    Yt, Yth = F.dY
    h = 0.25 * (eta_inner(Yt, Yt) - eta_inner(Yth, Yth) - 2j * eta_inner(Yt, Yth))
    grid = F.grid
    Ytt = grid.diff(Yt, 0)
    Ytth = grid.diff(Yt, 1)
    Ythth = grid.diff(Yth, 1)
    Yzz_re = 0.25 * (Ytt - Ythth)
    Yzz_im = -0.5 * Ytth
    Q = eta_inner(Yzz_re, Yzz_re) - eta_inner(Yzz_im, Yzz_im) + 2j * eta_inner(Yzz_re, Yzz_im)
    dbar = 0.5 * (grid.diff(Q.real, 0) - grid.diff(Q.imag, 1)) + 0.5j * (grid.diff(Q.imag, 0) + grid.diff(Q.real, 1))
    return HopfQuartic(h, Q, dbar, float(np.max(np.abs(h))), float(np.max(np.abs(dbar))))


@dataclass(frozen=True)
class Recovery:
    psi: np.ndarray  # recovered S^3 points (nan at umbilic nodes)
    position: np.ndarray  # recovered source positions (R^3 via stereographic projection)
    valid: np.ndarray
    max_error: float
    possible: bool


def recover_immersion(F: ConformalGaussField) -> Recovery:
    """Read the surface back from Y: nu = null normal of span(Y, d_t Y, d_theta Y), nu_5 = 1."""
    V = np.stack([F.Y, F.dY[0], F.dY[1]], -2)
    nu, _, ok, normalized = null_normal_pairs(V)
    valid = F.frame_valid & ok & normalized
    psi = np.where(valid[..., None], nu[..., :4], np.nan)
    if F.source is not None and F.source.ambient == "S3":
        pos = psi
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pos = psi[..., :3] / (1.0 - psi[..., 3:4])
    err = np.nan
    if F.source is not None and np.any(valid):
        t, th = F.grid.mesh()
        ref = F.source.evaluate(t, th)
        err = float(np.max(np.abs(pos[valid] - ref[valid])))
    return Recovery(psi, pos, valid, err, bool(np.any(valid)))


def export_field_csv(F: ConformalGaussField, path) -> None:
    t, th = F.grid.mesh()
    ge = F.grad_eta2
    gx = (xi_norm2(F.dY[0]) + xi_norm2(F.dY[1])) / F.sqrt_g
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={FIELD_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["t", "theta", "Y1", "Y2", "Y3", "Y4", "Y5", "grad_eta2", "grad_xi2"])
        for i in range(F.grid.n_t):
            for j in range(F.grid.n_theta):
                w.writerow([repr(float(t[i, j])), repr(float(th[i, j]))]
                           + [repr(float(v)) for v in F.Y[i, j]]
                           + [repr(float(ge[i, j])), repr(float(gx[i, j]))])


def field_from_samples(grid: QuadratureGrid, Y, g=None) -> ConformalGaussField:
    """Wrap sampled Y (n_t, n_theta, 5) as a field on a chart; derivatives by grid differentiation.

    Meant for synthetic cylinder fields.  The chart metric defaults to the flat one,
    the null frame is left undefined, and |A0|^2 is set to the value making Y conformal
    (|Y_t|^2 + |Y_theta|^2 in the flat case).
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape != grid.shape + (5,):
        raise ValueError(f"expected samples of shape {grid.shape + (5,)}, got {Y.shape}")
    dY = grid.gradient(Y)
    if g is None:
        g = np.broadcast_to(np.eye(2), grid.shape + (2, 2)).copy()
    nan = np.full_like(Y, np.nan)
    G = _sym(eta_inner(dY[0], dY[0]), eta_inner(dY[0], dY[1]), eta_inner(dY[1], dY[1]))
    A0n = np.einsum("...ij,...ji->...", np.linalg.inv(g), G)
    return ConformalGaussField(grid=grid, Y=Y, dY=dY, dY_closed=dY, nu=nan, dnu=np.stack([nan, nan]),
                               nu_star=nan, frame_valid=np.zeros(grid.shape, bool),
                               H=Y[..., 4] - Y[..., 3], g=g, A0_norm2=A0n, source=None)


def restrict_rows(F: ConformalGaussField, i0: int, i1: int) -> ConformalGaussField:
    """The field on the t-rows i0..i1 (inclusive) as a non-periodic sub-cylinder."""
    s = slice(i0, i1 + 1)
    return ConformalGaussField(grid=F.grid.sub(i0, i1), Y=F.Y[s], dY=F.dY[:, s], dY_closed=F.dY_closed[:, s],
                               nu=F.nu[s], dnu=F.dnu[:, s], nu_star=F.nu_star[s],
                               frame_valid=F.frame_valid[s], H=F.H[s], g=F.g[s],
                               A0_norm2=F.A0_norm2[s], source=F.source)
