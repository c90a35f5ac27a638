from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cgmlab.conformal_gauss import build_cgm
from cgmlab.errors import SearchFailure
from cgmlab.gauge import (AlreadyBalanced, AnnulusSpec, AverageNotSpacelike, BalancingSphere, annulus_averages,
                          balancing_sphere, fibonacci_sphere, find_balancing_inversion, predicted_balanced_mean)
from cgmlab.immersion import inverted_catenoid, moebius_transform_immersion, round_sphere
from cgmlab.minkowski import eta_norm2
from cgmlab.moebius import inversion_about

ANNULI = [AnnulusSpec(-2.5, -1.5, "left"), AnnulusSpec(-1.0, 0.2, "middle"), AnnulusSpec(1.0, 2.5, "right")]


@pytest.fixture(scope="module")
def neck():
    C = inverted_catenoid(0.5, (-3.0, 3.0))
    return C, build_cgm(C, C.grid(128))


def test_dyadic_annuli_are_nested():
    specs = [AnnulusSpec.dyadic(2.0, v) for v in ("A", "A_hat", "A_tilde", "A_bar")]
    for outer, inner in zip(specs, specs[1:]):
        assert outer.t_lo < inner.t_lo < inner.t_hi < outer.t_hi
    assert specs[0].t_lo == pytest.approx(np.log(2.0)) and specs[0].t_hi == pytest.approx(np.log(4.0))
    with pytest.raises(ValueError):
        AnnulusSpec(1.0, 1.0)
    with pytest.raises(ValueError):
        AnnulusSpec.dyadic(-1.0)


def test_average_H_is_linear_in_average_Y(neck):
    _, F = neck
    Ybar, H = annulus_averages(F, ANNULI[0])
    assert H == pytest.approx(Ybar[4] - Ybar[3])
    assert eta_norm2(Ybar) > 0


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-2, 2)), st.floats(0.2, 3.0),
       arrays(np.float64, 3, elements=st.floats(-1, 1)))
def test_balancing_sphere_zero_set(c, r, u):
    # the predicted post-inversion mean vanishes exactly on the sphere
    H = 0.7
    Y3 = c * H
    # pick Y4, Y5 with Y5 - Y4 = H and |Y|^2 = (r H)^2
    n2 = (r * H) ** 2
    s = (Y3 @ Y3 - n2) / H  # Y5 + Y4
    Ybar = np.concatenate([Y3, [(s - H) / 2, (s + H) / 2]])
    sph = balancing_sphere(Ybar, H)
    assert isinstance(sph, BalancingSphere)
    assert sph.radius == pytest.approx(r, rel=1e-9)
    if np.linalg.norm(u) < 1e-3:
        return
    a = sph.center + sph.radius * u / np.linalg.norm(u)
    assert abs(predicted_balanced_mean(Ybar, H, a)) < 1e-9 * (1 + a @ a)


def test_balancing_sphere_degenerate_cases():
    assert isinstance(balancing_sphere(np.zeros(5), 0.0), AlreadyBalanced)
    with pytest.raises(AverageNotSpacelike):
        balancing_sphere(np.array([0, 0, 0, 0.0, 1.0]), 1.0)


def test_fibonacci_points_are_unit():
    P = fibonacci_sphere(64)
    assert np.allclose(np.linalg.norm(P, axis=1), 1.0)


@pytest.mark.parametrize("A", ANNULI, ids=lambda A: A.label)
def test_balancing_inversion_on_annuli(neck, A):
    C, F = neck
    M, rep = find_balancing_inversion(C, F, A)
    assert rep.passed and abs(rep.post_average) <= 1e-6
    assert rep.invariance_defect <= 1e-6
    assert rep.pointwise_defect <= 1e-6
    assert rep.post_average == pytest.approx(rep.predicted_post_average, abs=1e-9)
    assert np.allclose(M, inversion_about(rep.a))
    G = build_cgm(moebius_transform_immersion(C, M), F.grid)
    assert abs(annulus_averages(G, A)[1]) <= 1e-6


def test_sphere_balances_to_a_plane_which_is_already_balanced():
    S = round_sphere()
    A = AnnulusSpec(-1.0, 1.0)
    F = build_cgm(S, S.grid(64))
    M, rep = find_balancing_inversion(S, F, A)
    assert not rep.identity and abs(rep.post_average) <= 1e-12
    P = moebius_transform_immersion(S, M)
    M2, rep2 = find_balancing_inversion(P, build_cgm(P, F.grid), A)
    assert rep2.identity and np.allclose(M2, np.eye(5))


def test_search_failure_when_bound_excludes_sphere(neck):
    C, F = neck
    with pytest.raises(SearchFailure):
        find_balancing_inversion(C, F, ANNULI[0], t_bound=1e-3)
