import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asymlink import multivector as mv
from asymlink.errors import DimensionError
from asymlink.multivector import MultiVector, cross, dot, hodge, triple, wedge

E = MultiVector.basis


def test_wedge_basis_blades():
    assert wedge(E(3, 1), E(3, 2)) == E(3, 1, 2)
    assert wedge(E(3, 1), E(3, 1)).is_zero()
    assert wedge(E(4, 1, 2), E(4, 3)) == E(4, 1, 2, 3)
    assert wedge(E(3, 2), E(3, 1)) == -E(3, 1, 2)


def test_wedge_overflow_gives_zero_top_grade():
    w = wedge(E(3, 1, 2), E(3, 2, 3))
    assert w.grade == 3 and w.is_zero()


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        wedge(E(3, 1), E(4, 1))


def test_multi_index_validation():
    with pytest.raises(ValueError):
        E(3, 2, 1)
    with pytest.raises(ValueError):
        E(3, 4)
    with pytest.raises(DimensionError):
        MultiVector(17, 1)


def test_hodge_examples():
    assert hodge(E(3, 1, 2)) == E(3, 3)
    assert hodge(E(3, 1, 3)) == -E(3, 2)
    assert hodge(hodge(E(4, 1))) == -E(4, 1)


def test_cross_examples():
    assert cross(E(3, 1), E(3, 2)) == E(3, 3)
    assert cross(E(4, 1, 2), E(4, 3)) == E(4, 4)
    assert cross(E(4, 1, 2), E(4, 2, 3)).is_zero()


def test_cross_matches_classical_cross_product(gen):
    for _ in range(20):
        u, v = gen.normal(size=(2, 3))
        got = cross(MultiVector.vector(u), MultiVector.vector(v)).to_array()
        assert np.allclose(got, np.cross(u, v), atol=1e-14)


def test_dot_examples():
    assert dot(E(3, 1), E(3, 1, 2)) == -E(3, 2)
    for n in (2, 3, 5):
        assert dot(E(n, 1, 2), E(n, 1, 2)).scalar_part() == 1.0
    assert dot(E(3, 1), E(3, 2, 3)).is_zero()


def test_dot_equals_cross_with_hodge(gen):
    for n in (3, 4, 5):
        for r in range(n + 1):
            for s in range(r, n + 1):
                a = MultiVector.from_array(n, r, gen.normal(size=mv.dim(n, r)))
                b = MultiVector.from_array(n, s, gen.normal(size=mv.dim(n, s)))
                assert dot(a, b).allclose(cross(a, hodge(b)), atol=1e-12)


def test_equal_grade_dot_is_inner_product(gen):
    for n in (3, 5):
        for r in range(n + 1):
            a = MultiVector.from_array(n, r, gen.normal(size=mv.dim(n, r)))
            b = MultiVector.from_array(n, r, gen.normal(size=mv.dim(n, r)))
            assert abs(dot(a, b).scalar_part() - float(a.to_array() @ b.to_array())) < 1e-12


def test_triple_examples(gen):
    assert triple(E(3, 1), E(3, 2), E(3, 3)) == 1.0
    u = MultiVector.vector(gen.normal(size=4))
    v = MultiVector.from_array(4, 1, gen.normal(size=4))
    w = wedge(u, MultiVector.vector(gen.normal(size=4)))
    assert triple(u, v, w) == pytest.approx(0.0, abs=1e-13)
    with pytest.raises(DimensionError):
        triple(E(3, 1), E(3, 2), E(3, 1, 2))


def test_triple_is_determinant(gen):
    for n in range(3, 8):
        A = gen.normal(size=(n, n))
        vs = [MultiVector.vector(row) for row in A]
        r = n // 3 or 1
        u = mv.wedge_all(vs[:r])
        v = mv.wedge_all(vs[r : r + 1])
        w = mv.wedge_all(vs[r + 1 :])
        assert triple(u, v, w) == pytest.approx(np.linalg.det(A), rel=1e-12, abs=1e-12)


def test_norm_is_coefficient_norm_and_gram_determinant(gen):
    for k in (1, 2, 3):
        V = gen.normal(size=(k, 5))
        X = mv.wedge_all([MultiVector.vector(v) for v in V])
        assert X.norm() ** 2 == pytest.approx(np.linalg.det(V @ V.T), rel=1e-12)


def test_zero_multivector_at_every_grade():
    for r in range(5):
        z = MultiVector.zero(4, r)
        assert z.is_zero() and z.grade == r and z.norm() == 0.0


def test_multivector_is_immutable():
    a = E(3, 1)
    with pytest.raises(AttributeError):
        a.grade = 2


def test_dense_kernels_match_sparse(gen):
    for n in (3, 4, 6):
        for r, s in itertools.product(range(n + 1), repeat=2):
            a = gen.normal(size=mv.dim(n, r))
            b = gen.normal(size=mv.dim(n, s))
            A, B = MultiVector.from_array(n, r, a), MultiVector.from_array(n, s, b)
            if r + s <= n:
                assert np.allclose(mv.wedge_c(a, r, b, s, n), wedge(A, B).to_array(), atol=1e-13)
            if r <= s:
                assert np.allclose(mv.dot_c(a, r, b, s, n), dot(A, B).to_array(), atol=1e-13)


def test_dual_vector_represents_triple(gen):
    n, k, l = 6, 2, 3
    X = gen.normal(size=mv.dim(n, k))
    Y = gen.normal(size=mv.dim(n, l))
    z = mv.dual_vector_c(X, k, Y, l, n)
    for _ in range(5):
        u = gen.normal(size=n)
        assert float(u @ z) == pytest.approx(float(mv.triple_c(u, X, k, Y, l)), abs=1e-12)


grades = st.integers(3, 7).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(0, n)))


@settings(max_examples=60, deadline=None)
@given(grades, st.integers(0, 2**32 - 1))
def test_graded_anticommutativity(nrs, seed):
    n, r, s = nrs
    g = np.random.default_rng(seed)
    a = MultiVector.from_array(n, r, g.normal(size=mv.dim(n, r)))
    b = MultiVector.from_array(n, s, g.normal(size=mv.dim(n, s)))
    assert wedge(a, b).allclose(wedge(b, a) * (-1) ** (r * s), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(grades, st.integers(0, 2**32 - 1))
def test_hodge_involution_property(nrs, seed):
    n, r, _ = nrs
    g = np.random.default_rng(seed)
    a = MultiVector.from_array(n, r, g.normal(size=mv.dim(n, r)))
    assert hodge(hodge(a)) == a * (-1) ** (r * (n - r))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 6), st.integers(0, 2**32 - 1))
def test_wedge_associative(n, seed):
    g = np.random.default_rng(seed)
    r, s, t = g.integers(0, 3, size=3)
    a, b, c = (MultiVector.from_array(n, int(q), g.normal(size=mv.dim(n, int(q)))) for q in (r, s, t))
    assert wedge(wedge(a, b), c).allclose(wedge(a, wedge(b, c)), atol=1e-12)
