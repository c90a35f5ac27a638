from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cgmlab.minkowski import ETA, eta_norm2, verify_so41
from cgmlab.moebius import (INFINITY, Dilation, OrientedSphere, Rotation, Translation, UnitInversion,
                            apply_to_point, compose, desitter_to_sphere, inversion_about,
                            is_orientation_reversing, lift, matrix_of, random_generator, sphere_to_desitter)

point = arrays(np.float64, 3, elements=st.floats(-5, 5, allow_nan=False))
seeds = st.integers(0, 2**32 - 1)


def test_generator_matrices():
    assert np.allclose(matrix_of(UnitInversion()), np.diag([-1, -1, -1, 1, -1.0]))
    D = matrix_of(Dilation(np.log(2.0)))
    assert np.allclose(D[3:, 3:], [[1.25, 0.75], [0.75, 1.25]])
    T = matrix_of(Translation([1.0, 0, 0]))
    assert np.allclose(T @ lift([0, 0, 0.0]), lift([1.0, 0, 0]))
    with pytest.raises(ValueError):
        Rotation(np.diag([1, 1, -1.0]))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_compositions_stay_in_so41(seed):
    rng = np.random.default_rng(seed)
    M = compose(*[random_generator(rng) for _ in range(rng.integers(1, 6))])
    ok, defect = verify_so41(M)
    assert ok, defect
    assert np.max(np.abs(M.T @ ETA @ M - ETA)) <= 1e-9 * max(1.0, float(np.max(np.abs(M))) ** 2)


@settings(max_examples=60, deadline=None)
@given(point, point, st.floats(-1.5, 1.5))
def test_point_actions(x, a, lam):
    assert np.allclose(apply_to_point(matrix_of(Translation(a)), x), x + a)
    assert np.allclose(apply_to_point(matrix_of(Dilation(lam)), x), np.exp(lam) * x)
    assert abs(eta_norm2(lift(x))) <= 1e-9 * (1 + x @ x) ** 2
    if x @ x > 1e-6:
        assert np.allclose(apply_to_point(matrix_of(UnitInversion()), x), x / (x @ x))


def test_inversion_poles_and_infinity():
    M = inversion_about([1.0, 0, 0], 2.0)
    assert apply_to_point(M, np.array([1.0, 0, 0])) is INFINITY
    assert np.allclose(apply_to_point(M, INFINITY), [0, 0, 0])
    assert np.allclose(apply_to_point(M, np.array([3.0, 0, 0])), [2.0, 0, 0])
    assert is_orientation_reversing(M)
    assert not is_orientation_reversing(matrix_of(Translation([1.0, 2, 3])))


@settings(max_examples=60, deadline=None)
@given(point, st.floats(0.1, 5.0), st.sampled_from([1, -1]))
def test_sphere_round_trip(c, r, o):
    S = OrientedSphere(c, r, o)
    Y = sphere_to_desitter(S)
    assert eta_norm2(Y) == pytest.approx(1.0, abs=1e-9 * (1 + Y @ Y))
    back = desitter_to_sphere(Y)
    assert np.allclose(back.center, c, atol=1e-9 * (1 + np.abs(c).max()))
    assert back.radius == pytest.approx(r, rel=1e-9)
    assert back.orientation == o


def test_unit_sphere_is_e4_up_to_sign():
    # the unit sphere about the origin with outward normal corresponds to -e4 under these conventions
    Y = sphere_to_desitter(OrientedSphere(np.zeros(3), 1.0, 1))
    assert np.allclose(Y, [0, 0, 0, -1, 0])
    with pytest.raises(ValueError):
        desitter_to_sphere(np.array([1.0, 0, 0, 0, 0]))


@settings(max_examples=30, deadline=None)
@given(seeds, point)
def test_sphere_maps_equivariantly(seed, c):
    rng = np.random.default_rng(seed)
    M = compose(*[random_generator(rng, 0.5) for _ in range(3)])
    S = OrientedSphere(c, 1.3)
    Y = M @ sphere_to_desitter(S)
    if abs(Y[4] - Y[3]) < 1e-3:
        return  # the image is (nearly) a plane
    img = desitter_to_sphere(Y)
    # a point of S goes to a point of the image sphere
    p = c + 1.3 * np.array([0.6, 0.0, 0.8])
    q = apply_to_point(M, p)
    if q is INFINITY:
        return
    assert np.linalg.norm(q - img.center) == pytest.approx(img.radius, rel=1e-7, abs=1e-7)
