import math

import numpy as np
import pytest

from asymlink.asymptotic import (ErgodicSchedule, MCConfig, I_action_manifold, I_two_actions, asymptotic_lk,
                                 compare, energy, energy_bound_check, ergodic_mean, kernel_f, kernel_f_batch,
                                 kernel_g, lk_action_manifold, lk_TS)
from asymlink.calculus import constant_field, scale_field, vector_field, zero_field
from asymlink.domain import Domain, RNGStream, sphere_area
from asymlink.errors import DimensionError, NearCollisionError
from asymlink.flows import Action, Rectangle
from asymlink.linking import QuadratureConfig, circle, manifold_nodes
from asymlink.multivector import MultiVector
from asymlink.scenarios import build_action_vs_circle, build_linked_tori, get_scenario
from asymlink.stats import Estimate, agree


@pytest.fixture(scope="module")
def arnold():
    return get_scenario("arnold-n3")


@pytest.fixture(scope="module")
def tori4():
    return get_scenario("tori-n4-k2l1")


@pytest.fixture(scope="module")
def tori5():
    return get_scenario("tori-n5-k2l2")


def trivial(n, k=1):
    return Action(Domain.unit_ball(n), [zero_field(n, 1)] * k, label="trivial")


def support_pairs(s, count, seed=0):
    return s.phi.support.sample(RNGStream(seed, (0,)), count), s.psi.support.sample(RNGStream(seed, (1,)), count)


# ---------------------------------------------------------------------------
# estimates


def test_estimate_from_samples():
    e = Estimate.from_samples([1.0, 2.0, 3.0, 4.0], scale=2.0)
    assert e.value == 5.0
    assert math.isclose(e.std_error, 2.0 * np.std([1, 2, 3, 4], ddof=1) / 2.0)
    assert (-e).value == -5.0 and (-e).std_error == e.std_error
    assert agree(Estimate(1.0, 0.3, 10), Estimate(1.9, 0.4, 10))
    assert not agree(Estimate(1.0, 0.3, 10), Estimate(2.1, 0.4, 10))
    assert compare(Estimate(1.0, 0.3, 10), Estimate(1.9, 0.4, 10))["agree_2sigma"]
    with pytest.raises(ValueError):
        Estimate(0.0, -1.0, 1)


def test_standard_error_halves_when_samples_quadruple(arnold):
    a = energy(arnold.phi, MCConfig(samples=20_000, rng=RNGStream(1)))
    b = energy(arnold.phi, MCConfig(samples=80_000, rng=RNGStream(2)))
    assert 1.7 < a.std_error / b.std_error < 2.3


# ---------------------------------------------------------------------------
# pair kernel


def test_kernel_f_vanishes_off_support(arnold):
    p = np.array([0.0, 0.0, 0.9])  # outside both tubes
    q = arnold.psi.support.sample(RNGStream(3), 1)[0]
    assert kernel_f(arnold.phi, arnold.psi, p, q) == 0.0
    assert kernel_f(trivial(3), arnold.psi, q + 0.05, q) == 0.0


def test_kernel_f_bound(arnold, tori5):
    for s in (arnold, tori5):
        P, Q = support_pairs(s, 2000)
        f, r = kernel_f_batch(s.phi, s.psi, P, Q)
        bound = (np.linalg.norm(s.phi.wedge(P), axis=-1) * np.linalg.norm(s.psi.wedge(Q), axis=-1)
                 / (sphere_area(s.n) * r ** (s.n - 1)))
        assert np.all(np.abs(f) <= bound * (1 + 1e-12))
        assert np.max(np.abs(f)) > 0


def test_kernel_f_linear_in_one_generator(tori5):
    phi = tori5.phi
    scaled = Action(phi.domain, [scale_field(phi.generators[0], 2.5)] + list(phi.generators[1:]))
    P, Q = support_pairs(tori5, 200)
    f1, _ = kernel_f_batch(phi, tori5.psi, P, Q)
    f2, _ = kernel_f_batch(scaled, tori5.psi, P, Q)
    assert np.allclose(f2, 2.5 * f1, rtol=1e-12, atol=0)


def test_kernel_f_errors(arnold, tori5):
    p = arnold.phi.support.sample(RNGStream(4), 1)[0]
    with pytest.raises(NearCollisionError):
        kernel_f(arnold.phi, arnold.psi, p, p + 1e-9)
    with pytest.raises(DimensionError):
        kernel_f(arnold.phi, tori5.psi, np.zeros(5), np.ones(5) * 0.1)


# ---------------------------------------------------------------------------
# integral invariant of two actions


def test_I_of_trivial_action_is_zero(arnold):
    e = I_two_actions(arnold.phi, trivial(3), MCConfig(samples=2000))
    assert e.value == 0.0 and e.std_error == 0.0


def test_I_orientation_flip_negates(arnold):
    flipped = build_linked_tori(3, 1, 1, orientation=-1)
    cfg = MCConfig(samples=5000, rng=RNGStream(8))
    a = I_two_actions(arnold.phi, arnold.psi, cfg)
    b = I_two_actions(flipped.phi, flipped.psi, cfg)
    assert math.isclose(b.value, -a.value, rel_tol=1e-12)
    assert flipped.targets["predicted_I"] == -arnold.targets["predicted_I"]


@pytest.mark.parametrize("name", ["arnold-n3", "tori-n4-k2l1", "tori-n5-k2l2"])
def test_exchange_symmetry(name):
    s = get_scenario(name)
    k, l = s.phi.k, s.psi.k
    a = I_two_actions(s.phi, s.psi, MCConfig(samples=40_000, rng=RNGStream(1)))
    b = I_two_actions(s.psi, s.phi, MCConfig(samples=40_000, rng=RNGStream(2)))
    sign = (-1) ** ((l + 1) * (k + 1))
    assert agree(a, b.scaled(sign))
    assert abs(a.value) > 4 * a.std_error


def test_I_routes_agree_on_arnold(arnold):
    a = I_two_actions(arnold.phi, arnold.psi, MCConfig(samples=40_000, rng=RNGStream(3)))
    b = I_two_actions(arnold.phi, arnold.psi, MCConfig(samples=4096, inner=64, replicates=128, rng=RNGStream(4)),
                      method="biot-savart")
    assert agree(a, b)
    with pytest.raises(ValueError):
        I_two_actions(arnold.phi, arnold.psi, method="grid")


def test_I_is_deterministic_across_workers(arnold):
    a = I_two_actions(arnold.phi, arnold.psi, MCConfig(samples=3000, chunk=500, workers=1))
    b = I_two_actions(arnold.phi, arnold.psi, MCConfig(samples=3000, chunk=500, workers=3))
    assert a == b


# ---------------------------------------------------------------------------
# ergodic means


def rotation_action():
    def func(x):
        out = np.zeros_like(x)
        out[:, 0] = -x[:, 1]
        out[:, 1] = x[:, 0]
        return out
    return Action(Domain.unit_ball(3), [vector_field(3, func)], method="rk4")


def test_ergodic_mean_of_invariant_function(arnold):
    A = arnold.embeddings[0]
    p = arnold.phi.support.sample(RNGStream(5), 1)[0]
    means = ergodic_mean(A.core_distance, arnold.phi, p, ErgodicSchedule(steps=4, tau=1.3, nodes=5))
    assert np.allclose(means, A.core_distance(p), atol=1e-12, rtol=0)


def test_ergodic_mean_of_constant():
    means = ergodic_mean(lambda x: np.full(len(x), 2.5), rotation_action(), [0.3, 0.1, 0.0],
                         ErgodicSchedule(steps=3, tau=1.0, nodes=4))
    assert np.allclose(means, 2.5, atol=1e-14)


def test_ergodic_mean_circle_average_decays_like_one_over_T():
    # orbit of (a, 0, z) is a circle; the mean of x1 over [0, T] is a sin(T) / T
    a = 0.5
    sched = ErgodicSchedule(steps=12, tau=1.0, nodes=64)
    means = ergodic_mean(lambda x: x[:, 0], rotation_action(), [a, 0.0, 0.2], sched)
    T = np.asarray(sched.sides)
    quad_err = (sched.tau / sched.nodes) ** 2 / 24 * a  # midpoint rule, |x1''| <= a
    assert np.all(np.abs(means - a * np.sin(T) / T) <= quad_err)
    assert np.all(np.abs(means) * T <= a + T * quad_err)


# ---------------------------------------------------------------------------
# asymptotic linking of two actions


def test_asymptotic_lk_of_trivial_action_is_zero(arnold):
    r = asymptotic_lk(arnold.phi, trivial(3), 200, ErgodicSchedule(steps=2, nodes=4))
    assert r.estimate.value == 0.0 and r.estimate.std_error == 0.0
    assert len(r.rows()) == 2 and r.rows()[1]["T_sides"] == 4 * math.pi


def test_asymptotic_lk_scales_with_time_scaling():
    for (n, k, l), s in (((3, 1, 1), 3.0), ((4, 2, 1), 2.0)):
        base = build_linked_tori(n, k, l)
        fast = build_linked_tori(n, k, l, scale=s)
        sched = ErgodicSchedule(steps=2, nodes=4)
        a = asymptotic_lk(base.phi, base.psi, 600, sched, RNGStream(6)).estimate
        b = asymptotic_lk(fast.phi, fast.psi, 600, sched, RNGStream(6)).estimate
        assert abs(b.value - s**k * a.value) <= 2 * math.hypot(s**k * a.std_error, b.std_error)
        assert math.isclose(fast.targets["predicted_I"], s**k * base.targets["predicted_I"], rel_tol=1e-12)


def test_asymptotic_lk_deterministic_across_workers(arnold):
    sched = ErgodicSchedule(steps=2, nodes=4)
    a = asymptotic_lk(arnold.phi, arnold.psi, 300, sched, RNGStream(2), workers=1, chunk=100)
    b = asymptotic_lk(arnold.phi, arnold.psi, 300, sched, RNGStream(2), workers=3, chunk=100)
    assert a.table == b.table


def test_asymptotic_lk_variance_does_not_grow(arnold):
    r = asymptotic_lk(arnold.phi, arnold.psi, 2000, ErgodicSchedule(steps=5, nodes=8), RNGStream(4))
    se = [e.std_error for e in r.table]
    assert all(b <= 1.05 * a for a, b in zip(se[2:], se[3:]))


def test_asymptotic_lk_dimension_mismatch(arnold, tori5):
    with pytest.raises(DimensionError):
        asymptotic_lk(arnold.phi, tori5.psi, 10)


def test_schedule_validation():
    with pytest.raises(ValueError):
        ErgodicSchedule(steps=0)
    assert ErgodicSchedule(steps=3, tau=2.0).sides == [2.0, 4.0, 6.0]


# ---------------------------------------------------------------------------
# finite-time linking


def test_lk_TS_core_value(arnold):
    T = Rectangle.cube(1, 2 * math.pi)
    p, q = arnold.core_points
    raw = lk_TS(arnold.phi, arnold.psi, p, q, T, T, arnold.apexes[0], normalize=False)
    assert abs(raw - 1.0) < 0.02
    norm = lk_TS(arnold.phi, arnold.psi, p, q, T, T, arnold.apexes[0])
    assert abs(norm - (2 * math.pi) ** -2) < 0.02 * (2 * math.pi) ** -2


def test_lk_TS_of_fixed_point_is_zero(arnold):
    T = Rectangle.cube(1, 2 * math.pi)
    p = np.array([0.0, 0.0, 0.9])  # outside the tube: a fixed point of the action
    q = arnold.core_points[1]
    assert abs(lk_TS(arnold.phi, arnold.psi, p, q, T, T, arnold.apexes[0])) < 1e-12


# ---------------------------------------------------------------------------
# action against a manifold


def test_kernel_g_axial_field_of_a_circle():
    R = 0.5
    phi = Action(Domain.unit_ball(3), [constant_field(MultiVector.basis(3, 3))])
    N = circle([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], R)
    for z in (0.0, 0.2, -0.4):
        g = kernel_g(phi, N, [0.0, 0.0, z], QuadratureConfig(points=256))
        assert math.isclose(g, R**2 / (2 * (R**2 + z**2) ** 1.5), rel_tol=1e-10)


def test_kernel_g_bound_and_zero(arnold):
    N = circle([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 0.3)
    y, w = manifold_nodes(N, QuadratureConfig(points=128))
    eta = np.linalg.norm(w, axis=-1)
    P = arnold.phi.support.sample(RNGStream(7), 200)
    P = P[np.min(np.linalg.norm(P[:, None] - y[None], axis=-1), axis=1) > 0.05]
    for p in P:
        bound = np.linalg.norm(arnold.phi.wedge(p)) / sphere_area(3) * np.sum(eta / np.linalg.norm(y - p, axis=-1) ** 2)
        assert abs(kernel_g(arnold.phi, N, p, QuadratureConfig(points=128))) <= bound * (1 + 1e-12)
    assert kernel_g(trivial(3), N, [0.0, 0.0, 0.5]) == 0.0
    with pytest.raises(NearCollisionError):
        kernel_g(arnold.phi, N, [0.3, 0.0, 0.0])


def test_far_circle_gives_zero():
    s = build_action_vs_circle(3, 1, far=True)
    I = I_action_manifold(s.phi, s.manifold, MCConfig(samples=20_000))
    lk = lk_action_manifold(s.phi, s.manifold, 300, ErgodicSchedule(steps=2, nodes=8))
    assert abs(I.value) <= 2 * I.std_error
    assert abs(lk.estimate.value) <= 2 * lk.estimate.std_error


def test_circle_flip_negates():
    s = build_action_vs_circle(3, 1)
    f = build_action_vs_circle(3, 1, orientation=-1)
    cfg = MCConfig(samples=4000, rng=RNGStream(2))
    assert math.isclose(I_action_manifold(f.phi, f.manifold, cfg).value,
                        -I_action_manifold(s.phi, s.manifold, cfg).value, rel_tol=1e-12)
    sched = ErgodicSchedule(steps=1, nodes=8)
    a = lk_action_manifold(s.phi, s.manifold, 50, sched, RNGStream(3)).estimate
    b = lk_action_manifold(f.phi, f.manifold, 50, sched, RNGStream(3)).estimate
    assert math.isclose(b.value, -a.value, rel_tol=1e-12)
    assert f.targets["predicted_I"] == -s.targets["predicted_I"] > -1


def test_action_manifold_routes_agree():
    s = get_scenario("tube-circle-n3")
    a = I_action_manifold(s.phi, s.manifold, MCConfig(samples=40_000, rng=RNGStream(1)))
    b = I_action_manifold(s.phi, s.manifold, MCConfig(samples=32, inner=4096, replicates=16, rng=RNGStream(2)),
                          method="biot-savart")
    assert agree(a, b)
    assert abs(a.value - s.targets["predicted_I"]) <= 2 * a.std_error + 0.02 * s.targets["predicted_I"]


# ---------------------------------------------------------------------------
# energy


def test_energy_zero_and_scaling(arnold, tori4):
    assert energy(trivial(3), MCConfig(samples=1000)).value == 0.0
    cfg = MCConfig(samples=4000, rng=RNGStream(5))
    for s in (arnold, tori4):
        c = 1.7
        e1 = energy(s.phi, cfg).value
        e2 = energy(s.phi.scaled(c), cfg).value
        assert math.isclose(e2, c ** (2 * s.phi.k) * e1, rel_tol=1e-12)


def test_energy_bound_needs_odd_dimension(tori4):
    with pytest.raises(DimensionError):
        energy_bound_check(tori4.phi, 1.0)


def test_energy_bound_report(arnold):
    rep = energy_bound_check(arnold.phi, 4.0, MCConfig(samples=2048, inner=64, replicates=32))
    assert rep["holds"] and rep["margin"] > 0
    assert math.isclose(rep["bound"], 4.0 * rep["energy"]["value"])
