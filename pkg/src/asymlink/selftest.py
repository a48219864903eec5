"""Named identity checks for the exterior algebra, the field operators and the
divergence theorem.  Each check returns its worst error; ids have the form
``module.invariant``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import multivector as mv
from .calculus import (FDConfig, MultiVectorField, exterior_derivative_coefficients, grad_field,
                       check_div_product, gauss_divergence_check, random_polynomial_field, rot_field)
from .domain import Domain, RNGStream
from .flows import Action, Rectangle, chain_boundary, closed_orbit_manifold
from .linking import hopf_pair, link

DIMS = (3, 4, 5, 6, 7)


@dataclass(frozen=True)
class Check:
    id: str
    description: str
    tolerance: float
    run: Callable  # (generator, count) -> worst error


def _split(count: int, parts: int) -> int:
    return max(1, math.ceil(count / parts))


def _perm_sign(seq) -> int:
    seq = list(seq)
    inv = sum(1 for a, b in itertools.combinations(range(len(seq)), 2) if seq[a] > seq[b])
    return -1 if inv % 2 else 1


# ---------------------------------------------------------------------------
# algebra


def hodge_involution(gen: np.random.Generator, count: int) -> float:
    worst = 0.0
    for n in DIMS:
        for r in range(n + 1):
            a = gen.normal(size=(_split(count, len(DIMS) * (n + 1)), mv.dim(n, r)))
            back = mv.hodge_c(mv.hodge_c(a, r, n), n - r, n)
            worst = max(worst, float(np.max(np.abs(back - (-1) ** (r * (n - r)) * a))))
    return worst


def hodge_basis(gen: np.random.Generator, count: int) -> float:
    """hodge(e_I) = sign(I, J) e_J against a permutation-parity oracle."""
    worst = 0.0
    for n in DIMS:
        for r in range(n + 1):
            for I in itertools.combinations(range(1, n + 1), r):
                J = tuple(i for i in range(1, n + 1) if i not in I)
                e = np.zeros((1, mv.dim(n, r)))
                e[0, mv.blade_position(n, r)[mv.mask_of(I)]] = 1.0
                want = np.zeros((1, mv.dim(n, n - r)))
                want[0, mv.blade_position(n, n - r)[mv.mask_of(J)]] = _perm_sign(I + J)
                worst = max(worst, float(np.max(np.abs(mv.hodge_c(e, r, n) - want))))
    return worst


def cross_of_cross(gen: np.random.Generator, count: int) -> float:
    """u x (v x w) = u . (v ^ w) for a vector u."""
    worst = 0.0
    for n in DIMS:
        combos = [(s, t) for s in range(1, n) for t in range(1, n) if s + t <= n]
        m = _split(count, len(DIMS) * len(combos))
        for s, t in combos:
            u = gen.normal(size=(m, n))
            v = gen.normal(size=(m, mv.dim(n, s)))
            w = gen.normal(size=(m, mv.dim(n, t)))
            lhs = mv.cross_c(u, 1, mv.cross_c(v, s, w, t, n), n - s - t, n)
            rhs = mv.dot_c(u, 1, mv.wedge_c(v, s, w, t, n), s + t, n)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def triple_determinant(gen: np.random.Generator, count: int) -> float:
    """*(u ^ v ^ w) for decomposable u, v, w equals det of all factor vectors."""
    worst = 0.0
    for n in DIMS:
        splits = [(r, s, n - r - s) for r in range(1, n) for s in range(1, n - r)]
        m = _split(count, len(DIMS) * len(splits))
        for r, s, q in splits:
            A = gen.normal(size=(m, n, n))
            u = mv.wedge_vectors(A[:, :r])
            v = mv.wedge_vectors(A[:, r : r + s])
            w = mv.wedge_vectors(A[:, r + s :])
            t = mv.hodge_c(mv.wedge_c(mv.wedge_c(u, r, v, s, n), r + s, w, q, n), n, n)[:, 0]
            det = np.linalg.det(A)
            worst = max(worst, float(np.max(np.abs(t - det) / np.maximum(1.0, np.abs(det)))))
        # the contracted kernel used for linking integrals
        A = gen.normal(size=(_split(count, len(DIMS)), n, n))
        k = int(gen.integers(0, n))
        t = mv.triple_c(A[:, 0], mv.wedge_vectors(A[:, 1 : 1 + k]), k, mv.wedge_vectors(A[:, 1 + k :]), n - 1 - k)
        det = np.linalg.det(A)
        worst = max(worst, float(np.max(np.abs(t - det) / np.maximum(1.0, np.abs(det)))))
    return worst


def dot_expansion(gen: np.random.Generator, count: int) -> float:
    """u . (v1 ^ ... ^ vk) = (-1)^{(k-1)(n-k)} sum_i (-1)^{i-1} <u, vi> v1 ^ .. ^ vi^ .. ^ vk."""
    worst = 0.0
    for n in DIMS:
        m = _split(count, len(DIMS) * (n - 1))
        for k in range(1, n):
            u = gen.normal(size=(m, n))
            V = gen.normal(size=(m, k, n))
            lhs = mv.dot_c(u, 1, mv.wedge_vectors(V), k, n)
            rhs = np.zeros_like(lhs)
            for i in range(k):
                rest = mv.wedge_vectors(np.delete(V, i, axis=1))
                rhs += (-1) ** i * np.einsum("mi,mi->m", u, V[:, i])[:, None] * rest
            rhs *= (-1) ** ((k - 1) * (n - k))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def double_cross(gen: np.random.Generator, count: int) -> float:
    """u x (v x w) = (-1)^n (<u, v> w - <u, w> v) for vectors."""
    worst = 0.0
    for n in DIMS:
        m = _split(count, len(DIMS))
        u, v, w = (gen.normal(size=(m, n)) for _ in range(3))
        lhs = mv.cross_c(u, 1, mv.cross_c(v, 1, w, 1, n), n - 2, n)
        uv = np.einsum("mi,mi->m", u, v)[:, None]
        uw = np.einsum("mi,mi->m", u, w)[:, None]
        worst = max(worst, float(np.max(np.abs(lhs - (-1) ** n * (uv * w - uw * v)))))
    return worst


def triple_bound(gen: np.random.Generator, count: int) -> float:
    """max(0, |*(u ^ v ^ w)| - |u||v||w|) for decomposable factors."""
    worst = 0.0
    for n in DIMS:
        m = _split(count, len(DIMS))
        r = int(gen.integers(1, n - 1))
        s = int(gen.integers(1, n - r))
        A = gen.normal(size=(m, n, n))
        u, v, w = (mv.wedge_vectors(A[:, a:b]) for a, b in ((0, r), (r, r + s), (r + s, n)))
        tr = mv.hodge_c(mv.wedge_c(mv.wedge_c(u, r, v, s, n), r + s, w, n - r - s, n), n, n)[:, 0]
        bound = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1) * np.linalg.norm(w, axis=1)
        worst = max(worst, float(np.max(np.abs(tr) - bound * (1 + 1e-12))), 0.0)
    return worst


def sparse_dense(gen: np.random.Generator, count: int) -> float:
    """The sparse MultiVector operations agree with the dense coefficient kernels."""
    worst = 0.0
    for _ in range(max(1, count // 50)):
        n = int(gen.choice(DIMS))
        r, s = (int(x) for x in gen.integers(0, n + 1, size=2))
        a = gen.normal(size=mv.dim(n, r))
        b = gen.normal(size=mv.dim(n, s))
        A = mv.MultiVector.from_array(n, r, a)
        B = mv.MultiVector.from_array(n, s, b)
        if r + s <= n:
            worst = max(worst, float(np.max(np.abs(mv.wedge(A, B).to_array() - mv.wedge_c(a, r, b, s, n)))))
        worst = max(worst, float(np.max(np.abs(mv.hodge(A).to_array() - mv.hodge_c(a, r, n)))))
    return worst


# ---------------------------------------------------------------------------
# calculus


def _trig_field(n: int, k: int, gen: np.random.Generator) -> MultiVectorField:
    """sum_I sin(<a_I, x> + b_I) e_I with an analytic jacobian."""
    C = mv.dim(n, k)
    a = gen.normal(size=(C, n))
    b = gen.normal(size=C)
    return MultiVectorField(n, k, lambda x: np.sin(x @ a.T + b),
                            lambda x: np.cos(x @ a.T + b)[:, :, None] * a[None], label="trig")


def _without_jacobian(F: MultiVectorField) -> MultiVectorField:
    return MultiVectorField(F.n, F.grade, F.func)


def div_product(gen: np.random.Generator, count: int) -> float:
    """div(V1 ^ ... ^ Vk) expansion by divergences and brackets; degree-2 polynomials, h = 1e-4."""
    worst = 0.0
    fd = FDConfig(h=1e-4)
    cases = [(n, k) for n in (3, 4, 5) for k in (1, 2, 3) if k <= n - 1]
    for i in range(max(1, count)):
        n, k = cases[i % len(cases)]
        Vs = [random_polynomial_field(n, 1, 2, gen) for _ in range(k)]
        pts = gen.uniform(-0.5, 0.5, size=(4, n))
        worst = max(worst, check_div_product(Vs, fd, pts))
    return worst


def exterior_derivative(gen: np.random.Generator, count: int) -> float:
    """*rot F against a term-by-term exterior derivative, FD vs analytic.

    Returns the error at h = 1e-3 divided by the O(h^2) prediction from
    h = 1e-2 (about 1 for second order), capped below by the h = 1e-3 error.
    """
    worst = 0.0
    for i in range(max(1, count)):
        n = (3, 4, 5)[i % 3]
        k = int(gen.integers(1, n))
        F = _trig_field(n, k, gen)
        x = gen.uniform(-0.5, 0.5, size=(3, n))
        via_rot = mv.hodge_c(rot_field(F)(x), n - k - 1, n)

        def err(h):
            d = exterior_derivative_coefficients(_without_jacobian(F), x, FDConfig(h=h))
            return float(np.max(np.abs(d - via_rot)))

        e1, e2 = err(1e-2), err(1e-3)
        worst = max(worst, e2 / max(1e-2 * e1, 1e-14))
    return worst


def d_squared(gen: np.random.Generator, count: int) -> float:
    """grad(grad F) -> 0 as h -> 0: returns max ratio err(1e-3) / err(1e-2) (0.01 for O(h^2))."""
    worst = 0.0
    for i in range(max(1, count)):
        n = (3, 4, 5)[i % 3]
        k = int(gen.integers(0, n - 1))
        F = _trig_field(n, k, gen)
        x = gen.uniform(-0.5, 0.5, size=(3, n))
        errs = [float(np.max(np.abs(grad_field(grad_field(F), FDConfig(h=h))(x)))) for h in (1e-2, 1e-3)]
        worst = max(worst, errs[1] / max(errs[0], 1e-300))
    return worst


def gauss_theorem(gen: np.random.Generator, count: int) -> float:
    worst = 0.0
    for i in range(max(1, count)):
        n = (3, 4, 5)[i % 3]
        k = int(gen.integers(1, n))
        V = random_polynomial_field(n, k, 3, gen)
        worst = max(worst, gauss_divergence_check(V, Domain.unit_ball(n))["relative_residual"])
    return worst


# ---------------------------------------------------------------------------
# flows and linking


def _rotation_action(n: int, planes) -> Action:
    gens = []
    for i, j in planes:
        def func(x, i=i, j=j):
            out = np.zeros_like(x)
            out[:, i] = -x[:, j]
            out[:, j] = x[:, i]
            return out
        gens.append(MultiVectorField(n, 1, func))
    return Action(Domain.unit_ball(n), gens, method="rk4")


def cone_closure(gen: np.random.Generator, count: int) -> float:
    """Boundary of orbit rectangle plus cones integrates a random form to zero (relative)."""
    worst = 0.0
    a = _rotation_action(5, [(0, 1), (2, 3)])
    for _ in range(max(1, count)):
        p = 0.4 * gen.uniform(-1, 1, size=5)
        T = Rectangle(tuple(gen.uniform(0.5, 3.0, size=2)))
        theta = closed_orbit_manifold(a, p, T, 0.3 * gen.uniform(-1, 1, size=5))
        form = random_polynomial_field(5, 1, 2, gen)
        total, scale = chain_boundary(theta.patches, form, m=12)
        worst = max(worst, abs(total) / max(scale, 1e-300))
    return worst


def hopf_link(gen: np.random.Generator, count: int) -> float:
    return abs(link(*hopf_pair()).value - 1.0)


CHECKS = (
    Check("multivector.hodge-involution", "** = (-1)^{r(n-r)} on random r-vectors, n = 3..7", 1e-12, hodge_involution),
    Check("multivector.hodge-basis", "hodge(e_I) = sign(I, J) e_J", 0.0, hodge_basis),
    Check("multivector.cross-of-cross", "u x (v x w) = u . (v ^ w)", 1e-12, cross_of_cross),
    Check("multivector.triple-determinant", "*(u ^ v ^ w) = det of the factor vectors", 1e-12, triple_determinant),
    Check("multivector.dot-expansion", "u . (v1 ^ .. ^ vk) by cofactor expansion", 1e-12, dot_expansion),
    Check("multivector.double-cross", "u x (v x w) = (-1)^n (<u,v> w - <u,w> v)", 1e-12, double_cross),
    Check("multivector.triple-bound", "|*(u ^ v ^ w)| <= |u| |v| |w|", 0.0, triple_bound),
    Check("multivector.sparse-dense", "sparse and dense products agree", 1e-13, sparse_dense),
    Check("calculus.div-product", "divergence of a wedge of vector fields, h = 1e-4", 1e-5, div_product),
    Check("calculus.exterior-derivative", "rot agrees with the exterior derivative to O(h^2) (ratio)", 2.0,
          exterior_derivative),
    Check("calculus.d-squared", "grad grad F decays with h (err ratio for h / 10)", 0.05, d_squared),
    Check("domain.gauss-theorem", "divergence theorem for k-vector fields on the unit ball", 1e-3, gauss_theorem),
    Check("flows.cone-closure", "orbit rectangle plus cones has no boundary", 1e-10, cone_closure),
    Check("linking.hopf", "Hopf link has linking number 1", 0.01, hopf_link),
)

# default number of randomized instances per check
DEFAULT_COUNTS = {
    "calculus.div-product": 12, "calculus.exterior-derivative": 6, "calculus.d-squared": 6,
    "domain.gauss-theorem": 6, "flows.cone-closure": 3, "linking.hopf": 1,
}


def run_checks(seed: int = 0, count: int = 10_000, only=None) -> list[dict]:
    """Run every check (or those whose id starts with an entry of ``only``)."""
    out = []
    for i, c in enumerate(CHECKS):
        if only and not any(c.id.startswith(o) for o in only):
            continue
        gen = RNGStream(seed, (i,)).generator()
        n = DEFAULT_COUNTS.get(c.id, count)
        try:
            err = float(c.run(gen, n))
            passed = err <= c.tolerance
            note = ""
        except Exception as exc:  # a crashing check is a failing check
            err, passed, note = math.inf, False, f"{type(exc).__name__}: {exc}"
        out.append({"id": c.id, "description": c.description, "max_error": err, "tolerance": c.tolerance,
                    "passed": passed, "error": note})
    return out
