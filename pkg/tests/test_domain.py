import math

import numpy as np
import pytest
from scipy import integrate

from asymlink.domain import (Domain, GammaConfig, RNGStream, ball_volume, gamma_bound, potential_integral,
                             sample_uniform, sphere_area)
from asymlink.errors import DegenerateDomainError, DimensionError


def test_sphere_area_values():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(4) == pytest.approx(2 * math.pi**2)
    with pytest.raises(DimensionError):
        sphere_area(1)


def test_ball_volume_is_area_over_n():
    for n in range(2, 8):
        assert ball_volume(n) == pytest.approx(sphere_area(n) / n)


def test_sampling_is_reproducible_and_centered():
    d = Domain.unit_ball(3)
    a = sample_uniform(d, RNGStream(7, 1), 20_000)
    b = sample_uniform(d, RNGStream(7, 1), 20_000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_uniform(d, RNGStream(7, 2), 20_000))
    se = a.std(axis=0) / math.sqrt(len(a))
    assert np.all(np.abs(a.mean(axis=0)) <= 3 * se)
    assert np.all(d.contains(a))


def test_box_sampling_accepts_everything():
    d = Domain.box([0, 0, 0], [1, 1, 1])
    x = sample_uniform(d, RNGStream(0), 1000)
    assert x.shape == (1000, 3) and np.all(d.contains(x))
    assert d.volume == pytest.approx(1.0)


def test_volume_fraction_matches_analytic_ratio():
    d = Domain.unit_ball(4)
    inner = Domain.ball(4, 0.5)
    x = sample_uniform(d, RNGStream(3), 40_000)
    frac = np.mean(inner.contains(x))
    want = inner.volume / d.volume
    assert abs(frac - want) <= 3 * math.sqrt(want * (1 - want) / len(x))


def test_degenerate_domain_is_rejected():
    # the ball fills V_12 / 2^12 ~ 3e-4 of its bounding box
    with pytest.raises(DegenerateDomainError):
        sample_uniform(Domain.unit_ball(12), RNGStream(0), 10)
    with pytest.raises(DegenerateDomainError):
        Domain.ball(3, 0.0)
    with pytest.raises(ValueError):
        sample_uniform(Domain.unit_ball(3), RNGStream(0), 0)


@pytest.mark.parametrize("d", [Domain.unit_ball(3), Domain.ellipsoid([1.0, 0.6, 0.8, 0.5]),
                               Domain.ball(3, 2.0, [1.0, -1.0, 0.5])])
def test_normals_are_unit_outward_and_match_distance_gradient(d):
    gen = np.random.default_rng(1)
    u = gen.normal(size=(50, d.n))
    x = d.center + d.semi_axes * u / np.linalg.norm(u, axis=-1, keepdims=True)
    assert np.allclose(d.signed_distance(x), 0.0, atol=1e-9)
    N = d.boundary_normal(x)
    assert np.allclose(np.linalg.norm(N, axis=-1), 1.0)
    h = 1e-6
    grad = np.stack([(d.signed_distance(x + h * e) - d.signed_distance(x - h * e)) / (2 * h)
                     for e in np.eye(d.n)], axis=-1)
    grad /= np.linalg.norm(grad, axis=-1, keepdims=True)
    assert np.allclose(N, grad, atol=1e-6)
    assert np.all(d.signed_distance(x + 1e-3 * N) > 0)
    assert np.allclose(d.signed_distance(d.project(x + 0.1 * N)), 0.0, atol=1e-12)


def test_convexity_spot_check():
    d = Domain.ellipsoid([1.0, 0.3, 0.7])
    x = d.sample(RNGStream(5), 2000)
    mid = 0.5 * (x[:1000] + x[1000:])
    assert np.all(d.contains(mid))


def test_from_config():
    assert Domain.from_config({"kind": "unit-ball", "n": 4}).n == 4
    e = Domain.from_config({"kind": "ellipsoid", "semi_axes": [1, 2, 3]})
    assert e.volume == pytest.approx(4 / 3 * math.pi * 6)


def test_gamma_center_value_and_bound():
    d = Domain.unit_ball(3)
    assert potential_integral(d, np.zeros(3), 24)[0] == pytest.approx(4 * math.pi, rel=1e-12)
    assert gamma_bound(d) >= 4 * math.pi


def _ball_potential_oracle(q):
    """int over the unit sphere of the ray length from q to the unit sphere (scipy dblquad)."""
    def f(phi, theta):
        u = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
        b = float(q @ u)
        return (-b + math.sqrt(b * b - q @ q + 1.0)) * math.sin(theta)
    val, _ = integrate.dblquad(f, 0.0, math.pi, 0.0, 2 * math.pi, epsabs=1e-10)
    return val


def test_potential_integral_against_adaptive_quadrature():
    d = Domain.unit_ball(3)
    for q in ([0.3, 0.0, 0.0], [0.2, -0.4, 0.5], [0.0, 0.0, 0.9]):
        q = np.asarray(q)
        assert potential_integral(d, q, 24)[0] == pytest.approx(_ball_potential_oracle(q), rel=1e-6)


def test_gamma_scaling_translation_and_monotonicity():
    eps = 1e-3
    assert gamma_bound(Domain.ball(3, eps)) == pytest.approx(4 * math.pi * eps, rel=1e-6)
    a = gamma_bound(Domain.ellipsoid([1.0, 0.5, 0.7]))
    b = gamma_bound(Domain.ellipsoid([1.0, 0.5, 0.7], center=[3.0, -2.0, 1.0]))
    assert a == pytest.approx(b, rel=1e-9)
    assert gamma_bound(Domain.ellipsoid([0.9, 0.5, 0.7])) <= a + 1e-9
    assert a <= gamma_bound(Domain.unit_ball(3)) + 1e-9


def test_gamma_dominates_sampled_potential():
    d = Domain.ellipsoid([1.0, 0.4, 0.6])
    G = gamma_bound(d, GammaConfig(grid=5))
    q = d.sample(RNGStream(2), 200)
    assert np.all(potential_integral(d, q, 32) <= G)
