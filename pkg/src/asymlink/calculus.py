"""Multivector fields and the extended grad / rot / div operators.

A field of grade ``r`` is a vectorized function mapping points ``(N, n)`` to
coefficient arrays ``(N, C(n, r))`` in the canonical blade order.  Differential
forms are never stored: a k-form is carried by its dual k-vector field, with
the pairing ``alpha(V) = A . V``.

Operators follow the sign conventions

    grad(sum f_I e_I) = sum (grad f_I) ^ e_I
    rot X = (-1)^{(k+1) l} *(grad X),      l = n - k - 1
    div X = (-1)^{(k+1) l} *grad(*X)

Derivatives use central differences unless a field supplies an analytic
jacobian.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import multivector as mv
from .errors import DimensionError
from .multivector import MultiVector


@dataclass(frozen=True)
class FDConfig:
    h: float = 1e-5
    scheme: str = "central"

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")
        if self.scheme != "central":
            raise ValueError("only central differences are supported")


DEFAULT_FD = FDConfig()


class MultiVectorField:
    """Smooth field R^n -> Lambda_r(R^n).

    Parameters
    ----------
    func
        ``(N, n) -> (N, C(n, grade))``.
    jac
        optional analytic jacobian ``(N, n) -> (N, C(n, grade), n)``.
    support
        optional region (anything with ``sample(rng, count)``, ``volume`` and
        ``contains``) outside of which the field vanishes.
    flow
        optional closed-form flow ``(points, times) -> points`` for vector
        fields.
    """

    def __init__(self, n: int, grade: int, func: Callable, jac: Callable | None = None,
                 support=None, flow: Callable | None = None, label: str = ""):
        if not 0 <= grade <= n:
            raise DimensionError(f"grade {grade} outside 0..{n}")
        self.n = n
        self.grade = grade
        self.func = func
        self.jac = jac
        self.support = support
        self.flow = flow
        self.label = label

    @property
    def size(self) -> int:
        return mv.dim(self.n, self.grade)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionError(f"points in R^{x.shape[-1]} for a field on R^{self.n}")
        flat = x.reshape(-1, self.n)
        out = np.asarray(self.func(flat), dtype=float).reshape(len(flat), self.size)
        return out.reshape(x.shape[:-1] + (self.size,))

    def at(self, p) -> MultiVector:
        return MultiVector.from_array(self.n, self.grade, self(np.asarray(p, dtype=float)))

    def jacobian(self, x, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
        """(..., C, n) array of coefficient derivatives d f_I / d x_i."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.n)
        if self.jac is not None:
            J = np.asarray(self.jac(flat), dtype=float)
        else:
            J = fd_jacobian(self, flat, fd.h)
        return J.reshape(x.shape[:-1] + (self.size, self.n))

    def __repr__(self):
        return f"MultiVectorField(n={self.n}, grade={self.grade}{', ' + self.label if self.label else ''})"


def fd_jacobian(F: MultiVectorField, x: np.ndarray, h: float) -> np.ndarray:
    n = F.n
    E = h * np.eye(n)
    shifted = np.concatenate([x[None] + E[:, None, :], x[None] - E[:, None, :]])  # (2n, N, n)
    vals = F(shifted.reshape(-1, n)).reshape(2, n, len(x), F.size)
    return np.moveaxis((vals[0] - vals[1]) / (2.0 * h), 0, -1)


# ---------------------------------------------------------------------------
# constructors


def constant_field(value: MultiVector) -> MultiVectorField:
    c = value.to_array()
    n, r = value.n, value.grade
    return MultiVectorField(
        n, r,
        lambda x: np.broadcast_to(c, (len(x), len(c))).copy(),
        lambda x: np.zeros((len(x), len(c), n)),
        label="constant",
    )


def zero_field(n: int, grade: int) -> MultiVectorField:
    return constant_field(MultiVector.zero(n, grade))


def vector_field(n: int, func: Callable, jac: Callable | None = None, **kw) -> MultiVectorField:
    return MultiVectorField(n, 1, func, jac, **kw)


def linear_vector_field(A) -> MultiVectorField:
    """x -> A x (+ nothing); a common test fixture."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    return MultiVectorField(n, 1, lambda x: x @ A.T,
                            lambda x: np.broadcast_to(A, (len(x), n, n)).copy(), label="linear")


def monomial_exponents(n: int, degree: int) -> np.ndarray:
    exps = [e for d in range(degree + 1) for e in itertools.product(range(d + 1), repeat=n) if sum(e) == d]
    return np.array(sorted(set(exps)), dtype=int)


def polynomial_field(n: int, grade: int, coeffs: np.ndarray, exponents: np.ndarray) -> MultiVectorField:
    """Field with coefficient f_I(x) = sum_m coeffs[I, m] x^exponents[m]."""
    coeffs = np.asarray(coeffs, dtype=float)
    E = np.asarray(exponents, dtype=int)

    def monomials(x, E):
        return np.prod(x[:, None, :] ** E[None, :, :], axis=-1)

    def func(x):
        return monomials(x, E) @ coeffs.T

    def jac(x):
        out = np.empty((len(x), coeffs.shape[0], n))
        for i in range(n):
            Ei = E.copy()
            Ei[:, i] -= 1
            d = E[:, i] * monomials(x, np.maximum(Ei, 0))
            out[:, :, i] = d @ coeffs.T
        return out

    return MultiVectorField(n, grade, func, jac, label="polynomial")


def random_polynomial_field(n: int, grade: int, degree: int, rng: np.random.Generator) -> MultiVectorField:
    E = monomial_exponents(n, degree)
    C = rng.uniform(-1.0, 1.0, size=(mv.dim(n, grade), len(E)))
    return polynomial_field(n, grade, C, E)


# ---------------------------------------------------------------------------
# pointwise algebra on fields


def add_fields(*fields: MultiVectorField, weights: Sequence[float] | None = None) -> MultiVectorField:
    F0 = fields[0]
    if any(F.n != F0.n or F.grade != F0.grade for F in fields):
        raise DimensionError("fields must share dimension and grade")
    w = list(weights) if weights is not None else [1.0] * len(fields)
    jac = None
    if all(F.jac is not None for F in fields):
        jac = lambda x: sum(wi * F.jac(x) for wi, F in zip(w, fields))
    return MultiVectorField(F0.n, F0.grade, lambda x: sum(wi * F(x) for wi, F in zip(w, fields)), jac)


def scale_field(F: MultiVectorField, c: float) -> MultiVectorField:
    jac = (lambda x: c * F.jac(x)) if F.jac is not None else None
    flow = (lambda p, t: F.flow(p, c * np.asarray(t))) if F.flow is not None else None
    return MultiVectorField(F.n, F.grade, lambda x: c * F(x), jac, support=F.support, flow=flow,
                            label=f"{c:g}*{F.label}")


def wedge_fields(*fields: MultiVectorField) -> MultiVectorField:
    n = fields[0].n
    if any(F.n != n for F in fields):
        raise DimensionError("fields must share the ambient dimension")
    grade = sum(F.grade for F in fields)
    if grade > n:
        return zero_field(n, n)

    def func(x):
        out = np.ones((len(x), 1))
        g = 0
        for F in fields:
            out = mv.wedge_c(out, g, F(x), F.grade, n)
            g += F.grade
        return out

    supports = [F.support for F in fields if F.support is not None]
    return MultiVectorField(n, grade, func, support=supports[0] if supports else None, label="wedge")


def hodge_field(F: MultiVectorField) -> MultiVectorField:
    n, r = F.n, F.grade
    jac = None
    if F.jac is not None:
        tgt, sgn = mv.hodge_table(n, r)

        def jac(x):
            J = F.jac(x)
            out = np.empty_like(J)
            out[:, tgt, :] = J * sgn[None, :, None]
            return out

    return MultiVectorField(n, n - r, lambda x: mv.hodge_c(F(x), r, n), jac, support=F.support)


def cross_fields(U: MultiVectorField, V: MultiVectorField) -> MultiVectorField:
    return hodge_field(wedge_fields(U, V))


# ---------------------------------------------------------------------------
# differential operators


def grad_field(F: MultiVectorField, fd: FDConfig = DEFAULT_FD) -> MultiVectorField:
    """Exterior derivative on the dual side: sum_I (grad f_I) ^ e_I."""
    n, k = F.n, F.grade
    if k >= n:
        return zero_field(n, n)

    def func(x):
        return _grad_from_jacobian(F.jacobian(x, fd), n, k)

    return MultiVectorField(n, k + 1, func, support=F.support, label="grad")


def _grad_from_jacobian(J: np.ndarray, n: int, k: int) -> np.ndarray:
    ii, jj, oo, ss = mv.wedge_table(n, 1, k)
    # term for blade pair (e_i, e_I): J[:, I, i]
    prod = J[:, jj, ii]
    return prod @ mv._scatter(n, 1, k)


def rot_field(F: MultiVectorField, fd: FDConfig = DEFAULT_FD) -> MultiVectorField:
    n, k = F.n, F.grade
    if k > n - 1:
        raise DimensionError("rot needs grade k <= n - 1")
    l = n - k - 1
    sign = (-1.0) ** ((k + 1) * l)
    G = grad_field(F, fd)
    return MultiVectorField(n, l, lambda x: sign * mv.hodge_c(G(x), k + 1, n), support=F.support, label="rot")


def div_field(F: MultiVectorField, fd: FDConfig = DEFAULT_FD) -> MultiVectorField:
    n, k = F.n, F.grade
    if k < 1:
        raise DimensionError("divergence of a scalar field is not defined")
    l = n - k - 1
    sign = (-1.0) ** ((k + 1) * l)
    G = grad_field(hodge_field(F), fd)
    return MultiVectorField(n, k - 1, lambda x: sign * mv.hodge_c(G(x), n - k + 1, n),
                            support=F.support, label="div")


def lie_bracket(U: MultiVectorField, V: MultiVectorField, fd: FDConfig = DEFAULT_FD) -> MultiVectorField:
    """[U, V]_i = sum_j u_j dv_i/dx_j - v_j du_i/dx_j."""
    if U.grade != 1 or V.grade != 1 or U.n != V.n:
        raise DimensionError("Lie bracket needs two vector fields on the same space")

    def func(x):
        return (np.einsum("nij,nj->ni", V.jacobian(x, fd), U(x))
                - np.einsum("nij,nj->ni", U.jacobian(x, fd), V(x)))

    return MultiVectorField(U.n, 1, func, label="bracket")


def div_product_rhs(Vs: Sequence[MultiVectorField], x: np.ndarray, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """Expansion of div(V^1 ^ ... ^ V^k) through divergences and Lie brackets."""
    k = len(Vs)
    n = Vs[0].n
    vals = [V(x) for V in Vs]
    out = np.zeros((len(x), mv.dim(n, k - 1)))

    def wedge_except(skip):
        acc = np.ones((len(x), 1))
        g = 0
        for j, v in enumerate(vals):
            if j in skip:
                continue
            acc = mv.wedge_c(acc, g, v, 1, n)
            g += 1
        return acc

    for i in range(k):
        d = div_field(Vs[i], fd)(x)[:, 0]
        out += (-1.0) ** k * (-1.0) ** (i + 1) * d[:, None] * wedge_except({i})
    for i in range(k):
        for j in range(i + 1, k):
            br = lie_bracket(Vs[i], Vs[j], fd)(x)
            out += (-1.0) ** k * (-1.0) ** (i + j + 2) * mv.wedge_c(br, 1, wedge_except({i, j}), k - 2, n)
    return out


def check_div_product(Vs: Sequence[MultiVectorField], fd: FDConfig, points: np.ndarray) -> float:
    """Max residual of the divergence-of-a-wedge expansion at ``points``."""
    k = len(Vs)
    n = Vs[0].n
    if k > n - 1:
        raise DimensionError("need k <= n - 1")
    points = np.atleast_2d(points)
    lhs = div_field(wedge_fields(*Vs), fd)(points)
    rhs = div_product_rhs(Vs, points, fd)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=-1)))


def exterior_derivative_coefficients(F: MultiVectorField, x: np.ndarray, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """d of the k-form with coefficients f_I, written in the dual blade basis.

    Computed term by term from multi-indices (sorting i into I and counting
    the transpositions), independently of the wedge tables.
    """
    n, k = F.n, F.grade
    J = F.jacobian(np.atleast_2d(x), fd)
    pos = mv.blade_position(n, k + 1)
    out = np.zeros((J.shape[0], mv.dim(n, k + 1)))
    for a, I in enumerate(itertools.combinations(range(1, n + 1), k)):
        for i in range(1, n + 1):
            if i in I:
                continue
            seq = (i,) + I
            inversions = sum(1 for s in I if s < i)
            target = mv.mask_of(sorted(seq))
            out[:, pos[target]] += (-1.0) ** inversions * J[:, a, i - 1]
    return out


# ---------------------------------------------------------------------------
# divergence theorem on balls


def gauss_divergence_check(V: MultiVectorField, d, m_radial: int = 8, m_angular: int = 8,
                           fd: FDConfig = DEFAULT_FD) -> dict:
    """Compare the volume integral of div V with the boundary flux of N . V.

    Returns both sides (coefficient vectors), the sign relating them and the
    relative residual |vol - sign * bnd| / max(|vol|, |bnd|).
    """
    from .domain import boundary_rule, volume_rule

    n, k = V.n, V.grade
    if not 1 <= k <= n - 1:
        raise DimensionError("divergence theorem check needs 1 <= k <= n - 1")
    l = n - k - 1
    xv, wv = volume_rule(d, m_radial, m_angular)
    vol = wv @ div_field(V, fd)(xv)
    xb, wb, normal = boundary_rule(d, m_angular + 2)
    flux = mv.dot_c(normal, 1, V(xb), k, n)
    bnd = wb @ flux
    sign = (-1.0) ** ((k + 1) * l)
    scale = max(np.linalg.norm(vol), np.linalg.norm(bnd), 1e-300)
    return {
        "n": n, "k": k,
        "volume_side": vol, "boundary_side": bnd, "sign": sign,
        "relative_residual": float(np.linalg.norm(vol - sign * bnd) / scale),
    }
