import math

import numpy as np
import pytest

from asymlink.errors import DimensionError, NearCollisionError
from asymlink.linking import (QuadratureConfig, SingularManifold, circle, hopf_pair, kernel_sum, link, linking_kernel,
                              manifold_nodes, max_cell, min_distance, point_distance, unlinked_pair)
from asymlink.multivector import MultiVector
from asymlink.scenarios import get_scenario


def crossing_count(cA, aA, bA, rA, cB, aB, bB, rB, m=20000):
    """Signed crossings of circle B through the disk bounded by circle A (independent oracle)."""
    normal = np.cross(aA, bA)
    s = 2 * math.pi * (np.arange(m) + 0.5) / m
    x = cB + rB * (np.outer(np.cos(s), aB) + np.outer(np.sin(s), bB))
    h = (x - cA) @ normal
    total = 0
    for i in np.flatnonzero(np.sign(h) != np.sign(np.roll(h, -1))):
        j = (i + 1) % m
        w = h[i] / (h[i] - h[j])
        y = (1 - w) * x[i] + w * x[j]
        if np.linalg.norm(y - cA) < rA:
            total += 1 if h[j] > h[i] else -1
    return total


def random_frame(gen):
    Q, _ = np.linalg.qr(gen.normal(size=(3, 3)))
    return Q[:, 0], Q[:, 1]


def test_kernel_properties():
    gen = np.random.default_rng(0)
    x, y = gen.normal(size=(2, 3))
    tx, ty = (MultiVector.vector(v) for v in gen.normal(size=(2, 3)))
    k = linking_kernel(x, tx, y, ty)
    assert linking_kernel(x, -tx, y, ty) == pytest.approx(-k)
    # classical Gauss integrand -(1/4 pi) ((y - x) x tx) . ty / |y - x|^3 in R^3
    u = y - x
    gauss = -np.dot(np.cross(u, tx.to_array()), ty.to_array()) / (4 * math.pi * np.linalg.norm(u) ** 3)
    assert k == pytest.approx(gauss, rel=1e-12)
    par = MultiVector.vector(3.0 * u)
    assert linking_kernel(x, par, y, ty) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(NearCollisionError):
        linking_kernel(x, tx, x, ty)
    with pytest.raises(DimensionError):
        linking_kernel(x, tx, y, MultiVector.basis(3, 1, 2))


def test_hopf_and_unlinked():
    assert link(*hopf_pair()).value == pytest.approx(1.0, abs=0.01)
    assert link(*unlinked_pair()).value == pytest.approx(0.0, abs=0.01)


def test_hopf_against_crossing_oracle():
    e = np.eye(3)
    assert crossing_count(np.zeros(3), e[0], e[1], 1.0, e[0], e[0], -e[2], 1.0) == 1


def test_random_circle_pairs_match_crossing_oracle():
    gen = np.random.default_rng(4)
    checked = nonzero = 0
    while checked < 12:
        cA, cB = gen.uniform(-0.6, 0.6, size=(2, 3))
        (aA, bA), (aB, bB) = random_frame(gen), random_frame(gen)
        rA, rB = gen.uniform(0.5, 1.0, size=2)
        A, B = circle(cA, aA, bA, rA, "A"), circle(cB, aB, bB, rB, "B")
        if min_distance(A, B, m=256) < 0.05:
            continue
        want = crossing_count(cA, aA, bA, rA, cB, aB, bB, rB)
        got = link(A, B, QuadratureConfig(points=64)).value
        assert got == pytest.approx(want, abs=0.01)
        checked += 1
        nonzero += want != 0
    assert nonzero >= 3


def test_orientation_and_exchange_in_r3():
    A, B = hopf_pair()
    q = QuadratureConfig(points=48)
    ab = link(A, B, q).value
    assert link(A.flipped(), B, q).value == -ab
    assert link(A, B.flipped(), q).value == -ab
    assert link(B, A, q).value == pytest.approx(ab, abs=1e-10)  # sign (-1)^{(1+1)(1+1)} = +1


def test_exchange_sign_with_even_dimensional_cycles():
    """Two 2-tori in R^5: exchanging them multiplies the linking number by (-1)^{3*3} = -1."""
    A, B = get_scenario("tori-n5-k2l2").embeddings
    q = QuadratureConfig(points=24, max_depth=0)
    ab = link(A.core(), B.core(), q).value
    ba = link(B.core(), A.core(), q).value
    assert abs(abs(ab) - 1.0) <= 0.05
    assert ba == pytest.approx(-ab, abs=1e-9)


def test_isotopy_and_integer_snap():
    A, B = hopf_pair()
    q = QuadratureConfig(points=64)
    est = link(A, B, q)
    moved = link(A, B.translated([0.0, 0.15, 0.1]), q)
    assert moved.value == pytest.approx(est.value, abs=max(0.01, 2 * (est.std_error + moved.std_error)))
    assert abs(est.value - round(est.value)) <= max(2 * est.std_error, 1e-6)


def test_near_collision_names_the_patches():
    e = np.eye(3)
    A = circle(np.zeros(3), e[0], e[1], 1.0, "A")
    B = circle(np.array([2.0, 0.0, 0.0]), e[0], e[2], 1.0, "B")  # touches A at (1, 0, 0)
    with pytest.raises(NearCollisionError) as info:
        link(A, B, QuadratureConfig(points=32))
    assert info.value.pair == ("A", "B")


def test_dimension_check():
    e = np.eye(4)
    A = circle(np.zeros(4), e[0], e[1], 1.0)
    with pytest.raises(DimensionError):
        link(A, A.translated(e[2]))


def test_min_distance():
    A, B = hopf_pair()
    assert min_distance(A, A) == 0.0
    assert min_distance(A, B) > 0.1
    e = np.eye(3)
    r = 0.5
    C = circle(np.zeros(3), e[0], e[1], r)
    D = circle(np.array([4 * r, 0, 0]), e[1], e[2], r)
    assert min_distance(C, D) >= 2 * r - 1e-9


def test_node_sums_match_link():
    A, B = hopf_pair()
    q = QuadratureConfig(points=200, max_depth=0)
    xa, wa = manifold_nodes(A, q)
    xb, wb = manifold_nodes(B, q)
    assert kernel_sum(xa, wa, 1, xb, wb, 1) == pytest.approx(1.0, abs=1e-3)


def test_singular_manifold_validation():
    with pytest.raises(ValueError):
        SingularManifold(())


def test_point_distance_to_circle(gen):
    N = circle(np.zeros(3), [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 0.7)
    P = gen.uniform(-1, 1, (3000, 3))
    exact = np.hypot(np.hypot(P[:, 0], P[:, 1]) - 0.7, P[:, 2])
    q = QuadratureConfig(points=8)
    d = point_distance(N, P, q)
    assert np.all(d >= exact - 1e-12) and np.all(d <= exact + max_cell(N, q))
    near = exact < 0.2
    assert near.sum() > 20
    assert np.allclose(d[near], exact[near], atol=1e-9)
