import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from asymlink.domain import RNGStream
from asymlink.errors import DimensionError
from asymlink.flows import action_diagnostics, flow
from asymlink.scenarios import (BumpProfile, TorusTube, build_action_vs_circle, build_linked_tori, combined_action,
                                core_link, get_scenario, list_scenarios, tube_flux)

NAMES = ["arnold-n3", "tori-n4-k2l1", "tori-n5-k2l2", "tube-circle-n3"]


@pytest.fixture(scope="module", params=NAMES)
def scenario(request):
    return get_scenario(request.param)


def test_registry():
    reg = list_scenarios()
    assert "arnold-n3" in reg and "tori-n5-k2l2" in reg
    for name, info in reg.items():
        assert info["k"] + info["l"] + 1 == info["n"]
        assert get_scenario(name).name == name
    with pytest.raises(KeyError):
        get_scenario("nope")


def test_generators_are_conservative(scenario):
    actions = [scenario.phi] + ([scenario.psi] if scenario.psi is not None else [])
    for a in actions:
        diag = action_diagnostics(a, 400, RNGStream(1))
        assert max(diag.values()) <= 1e-6, diag


def test_dimensions_consistent(scenario):
    k = scenario.phi.k
    l = scenario.psi.k if scenario.psi is not None else scenario.manifold.dim
    assert k + l + 1 == scenario.n


def test_core_orbits_are_periodic(scenario):
    a = scenario.phi.with_method("rk4")
    A = scenario.embeddings[0]
    x = scenario.phi.support.sample(RNGStream(6), 2000)
    p = x[A.core_distance(x) < scenario.bump.inner][:5]
    assert len(p) == 5
    back = flow(a, np.full((len(p), a.k), 2 * math.pi), p)
    assert np.max(np.abs(back - p)) <= 1e-7


def test_tubes_fit_and_are_disjoint(scenario):
    A, B = scenario.embeddings
    rho = scenario.params["rho"]
    for emb in (A, B):
        pts = emb.core_samples(24)
        assert np.max(np.linalg.norm(pts, axis=-1)) + rho < 1.0
    assert scenario.params["tube_margin"] >= rho / 2
    # the generator supports are disjoint: no sample of one lies in the other
    if scenario.psi is not None:
        x = scenario.phi.support.sample(RNGStream(2), 5000)
        assert not np.any(scenario.psi.support.contains(x))


def test_core_embedding_is_injective(scenario):
    for emb in scenario.embeddings:
        assert np.min(pdist(emb.core_samples(12))) > 1e-3


@pytest.mark.parametrize("n,k,l", [(3, 1, 1), (5, 2, 2)])
def test_cores_link_once(n, k, l):
    s = build_linked_tori(n, k, l)
    A, B = s.embeddings
    assert abs(abs(core_link(A, B)) - 1.0) <= 0.05
    assert s.targets["core_link"] == 1.0


def test_orientation_flip_negates_targets():
    s = build_linked_tori(3, 1, 1)
    f = build_linked_tori(3, 1, 1, orientation=-1)
    for key in ("core_link", "predicted_I", "normalized_core_link"):
        assert f.targets[key] == -s.targets[key]
    assert math.isclose(core_link(*f.embeddings), -core_link(*s.embeddings), rel_tol=1e-12)


def test_scaling_targets():
    s = build_linked_tori(4, 2, 1, scale=1.5)
    b = build_linked_tori(4, 2, 1)
    assert math.isclose(s.targets["predicted_I"], 1.5**2 * b.targets["predicted_I"], rel_tol=1e-12)


def test_tube_collision_is_rejected():
    with pytest.raises(ValueError, match="collide"):
        build_linked_tori(3, 1, 1, rho=0.6)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        build_linked_tori(4, 1, 1)
    with pytest.raises(DimensionError):
        build_action_vs_circle(4, 1)
    with pytest.raises(DimensionError):
        combined_action(get_scenario("tori-n4-k2l1"))


def test_action_vs_circle_variants():
    s = build_action_vs_circle(3, 1)
    far = build_action_vs_circle(3, 1, far=True)
    flip = build_action_vs_circle(3, 1, orientation=-1)
    assert s.targets["predicted_I"] > 0
    assert far.targets["predicted_I"] == 0.0
    assert flip.targets["predicted_I"] == -s.targets["predicted_I"]
    # the far circle stays clear of the tube
    pts = far.manifold.sample(64)
    assert not np.any(far.phi.support.contains(pts))


def test_bump_profile():
    b = BumpProfile(0.1, 0.3)
    d = np.linspace(0, 0.5, 1001)
    v = b(d)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(v[d <= 0.1] == 1.0) and np.all(v[d >= 0.3] == 0.0)
    fd = np.gradient(v, d)
    assert np.allclose(b.derivative(d)[1:-1], fd[1:-1], atol=1e-2)
    # moment of the indicator part plus the smooth transition
    from scipy.integrate import quad
    assert math.isclose(b.moment(2, 1), quad(lambda t: float(b(t)) ** 2 * t, 0, 0.3, points=[0.1])[0], rel_tol=1e-10)
    with pytest.raises(ValueError):
        BumpProfile(0.3, 0.1)


def test_tube_volume_and_sampling():
    s = get_scenario("arnold-n3")
    tube = s.phi.support
    x = tube.sample(RNGStream(3), 4000)
    assert np.all(tube.contains(x))
    lo, hi = tube.bounding_box()
    box = np.random.default_rng(0).uniform(lo, hi, (400_000, 3))
    frac = np.mean(tube.contains(box)) * np.prod(hi - lo)
    assert abs(frac - tube.volume) < 0.02 * tube.volume
    assert isinstance(tube, TorusTube)


def test_flux_matches_cross_section_integral():
    # arnold: the generator is lambda(d) times the unit rotation, so its flux through a
    # meridian half-plane is int lambda(d) * rho over the disk around the core
    s = get_scenario("arnold-n3")
    A = s.embeddings[0]
    R = A.radii[0]
    b = s.bump
    from scipy.integrate import dblquad
    val = dblquad(lambda r, a: float(b(r)) * (R + r * math.cos(a)) * r, 0, 2 * math.pi, 0, b.outer)[0]
    assert math.isclose(tube_flux(A, b), val, rel_tol=1e-6)


def test_combined_action_matches_parts():
    s = get_scenario("arnold-n3")
    c = combined_action(s)
    x = np.concatenate([s.phi.support.sample(RNGStream(4), 50), s.psi.support.sample(RNGStream(5), 50)])
    assert np.allclose(c.wedge(x), s.phi.wedge(x) + s.psi.wedge(x))
    assert np.allclose(flow(c, np.ones((100, 1)), x)[:50], flow(s.phi, np.ones((50, 1)), x[:50]))
