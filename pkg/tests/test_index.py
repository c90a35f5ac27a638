from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgmlab.errors import FeasibilityError, PreconditionError
from cgmlab.index import (DegenerateDirectionError, VariationField, area_fd_oracle, build_test_field,
                          constraint_residuals, cutoff, dirichlet_fd_oracle, divergence_psi, index_lower_bound,
                          interval_area, negativity_certificate, parallel_direction, profile_integral,
                          second_variation_dirichlet, smooth_variation, subdivide)
from cgmlab.cylinder_analysis import circle_quantities, line_fit
from cgmlab.immersion import neck_window
from cgmlab.minkowski import eta_inner, eta_norm2

from conftest import cached_field

E = np.eye(5)


def periodic_field(grid, rng, modes=2):
    """Random trigonometric polynomial on a doubly periodic chart."""
    t, th = grid.mesh()
    L = grid.t1 - grid.t0
    out = np.zeros_like(t)
    for j in range(modes + 1):
        for k in range(modes + 1):
            a, b, c, d = rng.normal(size=4)
            u, v = 2 * np.pi * j * (t - grid.t0) / L, k * th
            out += a * np.cos(u) * np.cos(v) + b * np.cos(u) * np.sin(v) + c * np.sin(u) * np.cos(v) + d * np.sin(u) * np.sin(v)
    return out


@pytest.mark.parametrize("seed", range(5))
def test_constraint_identity_normal_part(seed):
    _, F = cached_field("clifford_torus", 128)
    beta = periodic_field(F.grid, np.random.default_rng(seed))
    res = constraint_residuals(F, beta[..., None] * F.nu)
    assert np.nanmax(np.abs(res.r1 + 2 * beta)) <= 1e-4
    assert res.r2_max <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_constraint_identity_tangential_part(seed):
    _, F = cached_field("clifford_torus", 128)
    rng = np.random.default_rng(100 + seed)
    alpha = np.stack([periodic_field(F.grid, rng), periodic_field(F.grid, rng)])
    Z = alpha[0][..., None] * F.dnu[0] + alpha[1][..., None] * F.dnu[1]
    res = constraint_residuals(F, Z)
    assert np.nanmax(np.abs(res.r1 + 2 * divergence_psi(F, alpha))) <= 1e-4


SECOND_VARIATION_CASES = [("clifford_torus", 128, None, (1.0, 5.0)), ("inverted_catenoid_long", 128, None, (-2.0, 2.0))]


def _case(name, n):
    if name == "inverted_catenoid_long":
        from cgmlab.conformal_gauss import build_cgm
        from cgmlab.immersion import inverted_catenoid
        key = ("ic_long", n)
        if key not in _LONG:
            C = inverted_catenoid(0.5, (-3.0, 3.0))
            _LONG[key] = build_cgm(C, C.grid(n))
        return _LONG[key]
    return cached_field(name, n)[1]


_LONG: dict = {}


@pytest.mark.parametrize("name, n, _, interval", SECOND_VARIATION_CASES)
@pytest.mark.parametrize("seed", range(5))
def test_second_variation_matches_fd_oracle(name, n, _, interval, seed):
    F = _case(name, n)
    V = smooth_variation(F, np.random.default_rng(seed), interval)
    closed = second_variation_dirichlet(F, V)
    fd = dirichlet_fd_oracle(F, V)
    assert closed == pytest.approx(fd, rel=1e-4)


@settings(max_examples=10, deadline=None)
@given(st.floats(-20.0, 20.0).filter(lambda c: abs(c) > 1e-3), st.integers(0, 100))
def test_second_variation_is_quadratic(c, seed):
    F = cached_field("clifford_torus", 64)[1]
    V = smooth_variation(F, np.random.default_rng(seed), (1.0, 5.0))
    base = second_variation_dirichlet(F, V)
    assert second_variation_dirichlet(F, V * c) == pytest.approx(c * c * base, rel=1e-10)


def test_second_variation_is_moebius_invariant():
    from cgmlab.moebius import compose, random_generator
    F = cached_field("clifford_torus", 64)[1]
    V = smooth_variation(F, np.random.default_rng(3), (1.0, 5.0))
    M = compose(*[random_generator(np.random.default_rng(9), 0.4) for _ in range(3)])
    G = F.transformed(M)
    W = VariationField(V.Z @ M.T, V.support)
    assert second_variation_dirichlet(G, W) == pytest.approx(second_variation_dirichlet(F, V), rel=1e-9)


def test_variation_validation():
    F = cached_field("clifford_torus", 64)[1]
    with pytest.raises(ValueError):
        second_variation_dirichlet(F, VariationField(F.Y))  # normal, not tangent
    V = smooth_variation(F, np.random.default_rng(0), (1.0, 5.0))
    with pytest.raises(ValueError):
        second_variation_dirichlet(F, VariationField(V.Z, (2.0, 3.0)))
    with pytest.raises(ValueError):
        second_variation_dirichlet(F, VariationField(V.Z[:10]))


def test_area_oracle_of_a_harmonic_direction():
    F = cached_field("clifford_torus", 64)[1]
    V = smooth_variation(F, np.random.default_rng(1), (1.0, 5.0))
    assert np.isfinite(area_fd_oracle(F, V))


def test_parallel_direction():
    Ed = parallel_direction([1, 0, 0, 0, 1.0], E[3])
    assert eta_norm2(Ed) == pytest.approx(1.0)
    assert abs(eta_inner(Ed, [1, 0, 0, 0, 1.0])) < 1e-12 and abs(eta_inner(Ed, E[3])) < 1e-12
    # ties between e2 and e3 go to the earlier basis vector
    assert np.allclose(np.abs(Ed), E[1])
    with pytest.raises(DegenerateDirectionError):
        parallel_direction(E[0], 2 * E[0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_parallel_direction_property(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 5))
    Ed = parallel_direction(a, b)
    assert eta_norm2(Ed) == pytest.approx(1.0, rel=1e-9)
    assert abs(eta_inner(Ed, a)) < 1e-9 * np.linalg.norm(a) * np.linalg.norm(Ed)
    assert abs(eta_inner(Ed, b)) < 1e-9 * np.linalg.norm(b) * np.linalg.norm(Ed)


def test_cutoff_shape():
    s = np.linspace(0, 6, 601)
    rho = cutoff(s, 6.0)
    assert np.all(rho[s <= 0.5] == 0) and np.all(rho[s >= 5.5] == 0)
    assert np.allclose(rho[(s >= 1) & (s <= 5)], 1.0)
    assert np.all((rho >= 0) & (rho <= 1))


@settings(max_examples=20, deadline=None)
@given(st.floats(2.5, 30.0), st.integers(0, 1000))
def test_profile_integral_two_ways(ell, seed):
    rng = np.random.default_rng(seed)
    s = np.linspace(0, ell, 200)
    speed = 1.0 + 0.3 * np.sin(rng.uniform(0, 3) * s) ** 2
    direct, expanded = profile_integral(s, speed, ell)
    assert direct == pytest.approx(expanded, abs=1e-9)


def test_profile_integral_constant_speed_closed_form():
    ell = 10.0
    s = np.linspace(0, ell, 50)
    direct, _ = profile_integral(s, np.ones_like(s), ell)
    k = np.pi / ell
    a, b = 1.0, ell - 1.0
    cos2 = 0.5 * (b - a) + (np.sin(2 * k * b) - np.sin(2 * k * a)) / (4 * k)
    sin2 = (b - a) - cos2
    assert direct == pytest.approx(4 * np.pi * k * k * cos2 - sin2, rel=1e-10)


def test_subdivision_and_feasibility():
    F = cached_field("neck_0.05", 256, 64)[1]
    whole = (F.grid.t0, F.grid.t1)
    lam = interval_area(F, whole) / 1.5
    pieces = subdivide(F, lam, 3)
    assert len(pieces) == 3
    for i0, i1 in pieces:
        a = interval_area(F, (F.grid.t[i0], F.grid.t[i1]))
        assert lam / 6 * (1 - 1e-2) <= a <= lam / 3 * (1 + 1e-2)
    with pytest.raises(FeasibilityError) as info:
        index_lower_bound(F, lam, 40)
    assert 0 < info.value.max_feasible < 40
    with pytest.raises(PreconditionError):
        index_lower_bound(F, 10 * lam, 1)


def test_certificate_preconditions():
    F = cached_field("neck_0.05", 256, 64)[1]
    win = neck_window(0.05)
    area = interval_area(F, win)
    with pytest.raises(PreconditionError):
        negativity_certificate(F, win, 10 * area)
    with pytest.raises(PreconditionError):
        build_test_field(F, win)  # no fit and no direction


def test_test_field_is_tangent_and_supported():
    F = cached_field("neck_0.05", 256, 64)[1]
    iv = (F.grid.t0 + 0.5, F.grid.t1 - 0.5)
    fit = line_fit(circle_quantities(F, iv).Ystar)
    V, ing = build_test_field(F, iv, fit)
    assert np.max(np.abs(eta_inner(V.Z, F.Y))) < 1e-8 * np.max(np.abs(V.Z))
    assert ing.ell > 2
    t = F.grid.t
    assert np.all(V.Z[(t < iv[0]) | (t > iv[1])] == 0)
