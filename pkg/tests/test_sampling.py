import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisoscat.errors import ConvergenceFailure
from anisoscat.phase_function import PRESETS, ScatteringKernel, normalize
from anisoscat.sampling import (
    CDF_TOL,
    CosineSampler,
    Direction,
    azimuth_from_uniform,
    cdf_coefficients,
    cosine_from_uniform,
    invert_cdf_batch,
    isotropic_direction,
    rotate_direction,
    sample_azimuth,
    sample_cosine,
    sample_isotropic,
    sample_isotropic_many,
    sampler_for,
)
from anisoscat.streams import RandomStream

ISO = PRESETS["isotropic"]
F1 = normalize(PRESETS["F1"])
S2 = PRESETS["S2"]


def test_cdf_polynomial_endpoints():
    for raw in PRESETS.values():
        f = np.polynomial.polynomial.Polynomial(cdf_coefficients(normalize(raw)))
        assert f(-1.0) == pytest.approx(0.0, abs=1e-15)
        assert f(1.0) == pytest.approx(1.0, abs=1e-14)


def test_isotropic_inversion():
    assert cosine_from_uniform(ISO, 0.75) == pytest.approx(0.5, abs=2e-12)


def test_f1_inversion_closed_form():
    assert cosine_from_uniform(F1, 0.25) == pytest.approx(0.0, abs=1e-11)
    for u in np.linspace(0.01, 0.99, 25):
        assert cosine_from_uniform(F1, u) == pytest.approx(2 * math.sqrt(u) - 1, abs=1e-11)


def test_s2_inversion_closed_form():
    # F is flat at mu = 0, so |F(mu) - u| <= 1e-12 pins mu only to a cube root
    mu = cosine_from_uniform(S2, 0.5)
    assert abs((mu**3 + 1) / 2 - 0.5) <= CDF_TOL
    assert abs(mu) <= (2 * CDF_TOL) ** (1 / 3)
    for u in np.linspace(0.01, 0.99, 25):
        want = np.cbrt(2 * u - 1)
        assert abs((cosine_from_uniform(S2, u) ** 3 + 1) / 2 - u) <= CDF_TOL
        assert cosine_from_uniform(S2, u) == pytest.approx(want, abs=2e-4)


def test_inversion_extremes_stay_in_range():
    for raw in PRESETS.values():
        s = sampler_for(raw)
        for u in (0.0, 1e-300, 0.5, 1 - 2**-53):
            assert -1.0 <= s.from_uniform(u) <= 1.0


def test_corrupt_bracket_fails_to_converge():
    # a bracket that excludes the root leaves bisection no crossing to find
    s = CosineSampler(ISO)
    s.lower[:] = 0.9
    s.upper[:] = 1.0
    with pytest.raises(ConvergenceFailure):
        s.from_uniform(0.1)
    with pytest.raises(ConvergenceFailure):
        s.sample_many(1, 1, 10)


def test_presets_use_monomial_cdf():
    assert not any(sampler_for(k).legendre for k in PRESETS.values())


@pytest.mark.parametrize("order,a", [(16, 0.3), (32, 0.001)])
def test_high_order_kernel_inverts(order, a):
    # monomial coefficients of P_32 reach 1e8; Horner would miss the tolerance
    coeffs = [0.5] + [0.0] * (order - 1) + [a]
    k = ScatteringKernel.legendre(coeffs)
    s = CosineSampler(k)
    assert s.legendre
    u = RandomStream(8, 1).uniforms(2000)
    out = np.empty_like(u)
    assert invert_cdf_batch(s.fcoef, s.legendre, s.lower, s.upper, u, out, u.size)
    np.testing.assert_array_equal(out, [s.from_uniform(v) for v in u])
    cdf = np.polynomial.legendre.legval(out, np.polynomial.legendre.legint(coeffs, lbnd=-1))
    assert np.max(np.abs(cdf - u)) <= 2 * CDF_TOL


def test_batch_inversion_matches_scalar():
    for name in ("F7", "B5", "S6", "isotropic"):
        s = sampler_for(PRESETS[name])
        u = RandomStream(3, 9).uniforms(5000)
        out = np.empty_like(u)
        assert invert_cdf_batch(s.fcoef, s.legendre, s.lower, s.upper, u, out, u.size)
        np.testing.assert_array_equal(out, [s.from_uniform(v) for v in u])


def test_sample_cosine_consumes_stream():
    s1 = RandomStream(1, 1)
    s2 = RandomStream(1, 1)
    assert sample_cosine(F1, s1) == cosine_from_uniform(F1, s2.uniform())


def test_azimuth_examples():
    assert azimuth_from_uniform(0.0) == 0.0
    assert azimuth_from_uniform(0.5) == pytest.approx(math.pi)
    assert azimuth_from_uniform(0.25) == pytest.approx(math.pi / 2)
    phi = sample_azimuth(RandomStream(2, 2))
    assert 0.0 <= phi < 2 * math.pi


def test_rotate_canonical_frame():
    t, phi = 0.3, 1.1
    d = rotate_direction(Direction(0, 0, 1), t, phi)
    s = math.sqrt(1 - t * t)
    assert d.as_tuple() == pytest.approx((s * math.cos(phi), s * math.sin(phi), t), abs=1e-12)


def test_rotate_forward_and_back():
    inc = Direction(0.48, -0.6, 0.64)
    assert rotate_direction(inc, 1.0, 2.5).as_tuple() == pytest.approx(inc.as_tuple(), abs=1e-12)
    assert rotate_direction(Direction(1, 0, 0), -1.0, 0.7).as_tuple() == pytest.approx((-1, 0, 0), abs=1e-12)


def test_rotate_rejects_bad_cosine():
    with pytest.raises(ValueError):
        rotate_direction(Direction(1, 0, 0), 1.5, 0.0)


def test_rotation_is_right_handed():
    # e1 x e2 = d, checked through two azimuths a quarter turn apart
    inc = Direction(0.0, 0.6, 0.8)
    e1 = np.array(rotate_direction(inc, 0.0, 0.0).as_tuple())
    e2 = np.array(rotate_direction(inc, 0.0, math.pi / 2).as_tuple())
    np.testing.assert_allclose(np.cross(e1, e2), inc.as_tuple(), atol=1e-12)


unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(lambda v: 1e-3 < math.hypot(*v))


@settings(max_examples=300, deadline=None)
@given(unit, st.floats(-1, 1), st.floats(0, 2 * math.pi))
def test_rotate_norm_and_angle(v, t, phi):
    n = math.sqrt(sum(c * c for c in v))
    inc = Direction(*(c / n for c in v))
    out = rotate_direction(inc, t, phi)
    assert abs(out.norm() - 1) <= 1e-12
    assert abs(np.dot(out.as_tuple(), inc.as_tuple()) - t) <= 1e-12


def test_rotate_many_random_including_poles():
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(10_000, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    dirs[:50] = [0, 0, 1]
    dirs[50:100] = [0, 0, -1]
    dirs[100:150] = [1e-11, 0, math.sqrt(1 - 1e-22)]
    dirs[150:200] = [0, 1.2e-4, math.sqrt(1 - 1.44e-8)]  # near a pole but outside its cutoff
    ts = rng.uniform(-1, 1, 10_000)
    phis = rng.uniform(0, 2 * math.pi, 10_000)
    for d, t, p in zip(dirs, ts, phis):
        out = rotate_direction(Direction(*d), t, p)
        assert abs(out.norm() - 1) <= 1e-12
        assert abs(np.dot(out.as_tuple(), d) - t) <= 1e-12


def test_isotropic_examples():
    assert isotropic_direction(0.5, 0.0).as_tuple() == pytest.approx((1, 0, 0), abs=1e-15)
    assert isotropic_direction(1.0, 0.37).as_tuple() == pytest.approx((0, 0, 1), abs=1e-15)
    d = sample_isotropic(RandomStream(4, 4))
    assert abs(d.norm() - 1) < 1e-12


def test_isotropic_ensemble_mean():
    dirs = sample_isotropic_many(1, 0, 1_000_000)
    assert abs(dirs[:, 2].mean()) <= 3e-3
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)


def test_sample_many_reproducible():
    s = sampler_for(PRESETS["B3"])
    np.testing.assert_array_equal(s.sample_many(5, 1, 1000), s.sample_many(5, 1, 1000))
