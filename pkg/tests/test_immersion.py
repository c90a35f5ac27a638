from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgmlab.errors import DiffeomorphismError, PoleOnSurfaceError
from cgmlab.immersion import (FIXTURES, ParametricImmersion, build_fixture, catenoid, clifford_torus,
                              energy_identity, export_surface_csv, fundamental_forms,
                              gauss_curvature_integral, moebius_transform_immersion, neck_window,
                              round_sphere, s3_normal_energy_check, smoothstep_derivs, smoothstep_poly,
                              stereographic_lift, umbilic_circle_perturbation, willmore_W)
from cgmlab.moebius import Translation, inversion_about


def test_sphere_energies():
    S = round_sphere()
    I = energy_identity(S, S.grid(128))
    assert abs(I.W - 4 * np.pi) < 1e-6
    assert abs(I.E) < 1e-8
    assert I.defect < 1e-5


def test_sphere_radius_does_not_change_W():
    for R in (0.5, 3.0):
        S = round_sphere(R)
        assert willmore_W(S, S.grid(96)) == pytest.approx(4 * np.pi, abs=1e-6)


def test_torus_refinement():
    T = clifford_torus()
    W = [willmore_W(T, T.grid(n)) for n in (32, 64, 128)]
    assert abs(W[-1] - 2 * np.pi**2) < 1e-5
    assert abs(W[-1] - W[-2]) < 1e-8


def test_catenoid_forms():
    C = catenoid()
    F = fundamental_forms(C, C.grid(32))
    assert np.max(np.abs(F.H)) < 1e-12
    t, _ = C.grid(32).mesh()
    assert np.allclose(F.gauss_curvature, -1 / np.cosh(t) ** 4, atol=1e-12)
    assert np.allclose(F.lambda_conf, np.log(np.cosh(t)), atol=1e-12)


def test_fd_jets_agree_with_analytic():
    T = clifford_torus()
    g = T.grid(32)
    a = fundamental_forms(T, g)
    b = fundamental_forms(T.finite_difference(1e-2), g)
    assert np.max(np.abs(a.H - b.H)) < 1e-6


def test_gauss_bonnet_on_closed_fixtures():
    for imm, chi in ((round_sphere(), 2), (clifford_torus(), 0)):
        assert abs(gauss_curvature_integral(imm, imm.grid(128)) - 2 * np.pi * chi) < 1e-5


def test_stereographic_lift_preserves_E_and_W():
    T = clifford_torus()
    g = T.grid(64)
    a, b = energy_identity(T, g), energy_identity(stereographic_lift(T), g)
    assert b.E == pytest.approx(a.E, abs=1e-9)
    assert b.W == pytest.approx(a.W, abs=1e-9)


def test_s3_normal_energy_check_reports_a_finite_gap():
    T = stereographic_lift(clifford_torus())
    out = s3_normal_energy_check(T, T.grid(48))
    assert np.isfinite(out["discrepancy"])
    with pytest.raises(ValueError):
        s3_normal_energy_check(clifford_torus(), clifford_torus().grid(8))


@settings(max_examples=8, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_moebius_image_keeps_E(ax, ay):
    T = clifford_torus()
    g = T.grid(64)
    M = inversion_about([ax, ay, 2.5])
    E0 = energy_identity(T, g).E
    assert energy_identity(moebius_transform_immersion(T, M), g).E == pytest.approx(E0, rel=1e-8)


def test_pole_on_surface():
    T = clifford_torus()
    M = inversion_about(T.evaluate(0.0, 0.0))
    with pytest.raises(PoleOnSurfaceError):
        moebius_transform_immersion(T, M).evaluate(T.grid(8).mesh()[0], T.grid(8).mesh()[1])


def test_build_fixture():
    assert set(FIXTURES) >= {"round_sphere", "clifford_torus", "catenoid", "inverted_catenoid", "ellipsoid"}
    C = build_fixture("inverted_catenoid", eps=0.3, t_range=[-1, 1])
    assert C.t_range == (-1, 1)
    with pytest.raises(ValueError):
        build_fixture("klein_bottle")
    assert neck_window(0.1) == pytest.approx((2 * np.log(10), 3 * np.log(10)))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_smoothstep(k):
    P = smoothstep_poly(k)
    assert P(0.0) == pytest.approx(0.0) and P(1.0) == pytest.approx(1.0)
    Q = P
    for _ in range(k):
        Q = Q.deriv()
        assert Q(0.0) == pytest.approx(0.0, abs=1e-12) and Q(1.0) == pytest.approx(0.0, abs=1e-12)
    d = smoothstep_derivs(np.array([-1.0, 0.5, 2.0]), k, 1)
    assert d[0].tolist() == [0.0, 0.5, 1.0]


def _one_umbilic_circle():
    # meridian r(z) = 1 - z^2/2: the principal curvatures agree only on the circle z = 0
    def position(t, th):
        r = 1 - t * t / 2
        return [r * np.cos(th), r * np.sin(th), t]
    return ParametricImmersion(position, (-0.6, 0.6), name="one_umbilic_circle")


def test_umbilic_perturbation_removes_the_circle():
    P = _one_umbilic_circle()
    g = P.grid(121, 64)
    before = g.circle_integral(fundamental_forms(P, g).A0_norm2)
    assert np.sum(before <= 1e-14 * before.max()) == 1
    Q, rep = umbilic_circle_perturbation(P, 0.0, 0.3, 0.05, k=1, eps=0.2, grid=g)
    assert rep.shrunk and rep.w_norm <= 0.2 + 1e-12 and rep.min_jacobian > 0
    after = g.circle_integral(fundamental_forms(Q, g).A0_norm2)
    assert np.all(after > 1e-14 * after.max())


def test_umbilic_perturbation_guards():
    P = _one_umbilic_circle()
    with pytest.raises(ValueError):
        umbilic_circle_perturbation(P, 0.0, 0.7, 0.01)
    with pytest.raises(ValueError):
        umbilic_circle_perturbation(P, 0.5, 0.3, 0.01)
    with pytest.raises(DiffeomorphismError):
        umbilic_circle_perturbation(P, 0.0, 0.3, 1.0)


def test_perturbation_is_identity_outside_the_band():
    P = _one_umbilic_circle()
    Q, _ = umbilic_circle_perturbation(P, 0.0, 0.3, 0.01)
    t = np.array([-0.5, -0.25, 0.25, 0.5])
    th = np.full(4, 1.0)
    assert np.allclose(P.evaluate(t, th), Q.evaluate(t, th), atol=0, rtol=0)


def test_export_surface_csv(tmp_path):
    T = moebius_transform_immersion(clifford_torus(), Translation([1.0, 0, 0]))
    p = tmp_path / "s.csv"
    export_surface_csv(T, T.grid(8), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "# schema=cgmlab.surface.v1"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["t", "theta", "x", "y", "z"] and len(rows) == 65
