"""Exterior algebra over R^n with an orthonormal blade basis.

Blades are keyed by bitmasks: bit ``i - 1`` set means the basis vector
``e_i`` occurs.  Signs come from counting inversions of the concatenated
index sequences, so they are exact integers.

Two layers live here:

* ``MultiVector`` -- an immutable sparse element of a single grade, used for
  exact algebra and for the public API.
* dense coefficient arrays -- ``(..., C(n, r))`` arrays in the canonical blade
  order returned by ``blades(n, r)``.  The ``*_c`` functions operate on those
  and broadcast over leading axes; the numeric modules use them.
"""
from __future__ import annotations

import functools
import itertools
import math
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import DimensionError

MAX_DIM = 16


# ---------------------------------------------------------------------------
# multi-indices and signs


def mask_of(indices: Iterable[int], n: int | None = None) -> int:
    """Bitmask of a strictly increasing 1-based multi-index."""
    mask = 0
    prev = 0
    for i in indices:
        if i <= prev:
            raise ValueError("multi-index must be strictly increasing")
        if i < 1 or (n is not None and i > n):
            raise ValueError(f"index {i} out of range 1..{n}")
        mask |= 1 << (i - 1)
        prev = i
    return mask


def indices_of(mask: int) -> tuple[int, ...]:
    """1-based indices of the bits set in ``mask``."""
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def grade_of(mask: int) -> int:
    return bin(mask).count("1")


def blade_sign(a: int, b: int) -> int:
    """Sign of e_a ^ e_b relative to the sorted blade e_(a|b); 0 if they overlap."""
    if a & b:
        return 0
    # inversions: pairs (i in a, j in b) with i > j
    inv = 0
    bb = b
    while bb:
        low = bb & -bb
        inv += grade_of(a & ~((low << 1) - 1))
        bb ^= low
    return -1 if inv & 1 else 1


@functools.lru_cache(maxsize=None)
def blades(n: int, r: int) -> tuple[int, ...]:
    """Masks of grade ``r`` in canonical (lexicographic index) order."""
    _check_dim(n)
    if r < 0 or r > n:
        return ()
    return tuple(mask_of(c) for c in itertools.combinations(range(1, n + 1), r))


@functools.lru_cache(maxsize=None)
def blade_position(n: int, r: int) -> Mapping[int, int]:
    return MappingProxyType({m: i for i, m in enumerate(blades(n, r))})


def _check_dim(n: int) -> None:
    if not 1 <= n <= MAX_DIM:
        raise DimensionError(f"ambient dimension {n} outside 1..{MAX_DIM}")


# ---------------------------------------------------------------------------
# sparse multivectors


class MultiVector:
    """Immutable homogeneous multivector of grade ``grade`` in R^n."""

    __slots__ = ("n", "grade", "_coeffs")

    def __init__(self, n: int, grade: int, coeffs: Mapping[int, float] | None = None):
        _check_dim(n)
        if not 0 <= grade <= n:
            raise DimensionError(f"grade {grade} outside 0..{n}")
        clean = {}
        for mask, c in (coeffs or {}).items():
            if mask >> n or grade_of(mask) != grade:
                raise DimensionError(f"blade {indices_of(mask)} is not of grade {grade} in R^{n}")
            c = float(c)
            if c != 0.0:
                clean[mask] = c
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "grade", grade)
        object.__setattr__(self, "_coeffs", MappingProxyType(clean))

    def __setattr__(self, name, value):
        raise AttributeError("MultiVector is immutable")

    # constructors
    @classmethod
    def zero(cls, n: int, grade: int) -> "MultiVector":
        return cls(n, grade)

    @classmethod
    def scalar(cls, n: int, value: float) -> "MultiVector":
        return cls(n, 0, {0: value})

    @classmethod
    def basis(cls, n: int, *indices: int) -> "MultiVector":
        """The blade e_{i1...ir}; indices are 1-based and strictly increasing."""
        return cls(n, len(indices), {mask_of(indices, n): 1.0})

    @classmethod
    def vector(cls, components) -> "MultiVector":
        comps = np.asarray(components, dtype=float)
        n = comps.shape[0]
        return cls(n, 1, {1 << i: c for i, c in enumerate(comps)})

    @classmethod
    def from_array(cls, n: int, grade: int, coeffs) -> "MultiVector":
        coeffs = np.asarray(coeffs, dtype=float)
        bl = blades(n, grade)
        if coeffs.shape != (len(bl),):
            raise DimensionError(f"expected {len(bl)} coefficients, got shape {coeffs.shape}")
        return cls(n, grade, dict(zip(bl, coeffs)))

    # access
    @property
    def coeffs(self) -> Mapping[int, float]:
        return self._coeffs

    def to_array(self) -> np.ndarray:
        pos = blade_position(self.n, self.grade)
        out = np.zeros(len(pos))
        for mask, c in self._coeffs.items():
            out[pos[mask]] = c
        return out

    def coefficient(self, *indices: int) -> float:
        return self._coeffs.get(mask_of(indices, self.n), 0.0)

    def scalar_part(self) -> float:
        if self.grade not in (0, self.n) and self._coeffs:
            raise DimensionError("scalar_part needs grade 0 (or grade n)")
        return next(iter(self._coeffs.values()), 0.0)

    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self._coeffs.values()))

    def is_zero(self) -> bool:
        return not self._coeffs

    def allclose(self, other: "MultiVector", atol: float = 1e-12) -> bool:
        _same_space(self, other)
        if self.grade != other.grade:
            return self.is_zero() and other.is_zero()
        return bool(np.all(np.abs(self.to_array() - other.to_array()) <= atol))

    # linear structure
    def __add__(self, other: "MultiVector") -> "MultiVector":
        _same_space(self, other)
        if self.grade != other.grade:
            if other.is_zero():
                return self
            if self.is_zero():
                return other
            raise DimensionError("cannot add multivectors of different grades")
        out = dict(self._coeffs)
        for m, c in other._coeffs.items():
            out[m] = out.get(m, 0.0) + c
        return MultiVector(self.n, self.grade, out)

    def __neg__(self) -> "MultiVector":
        return MultiVector(self.n, self.grade, {m: -c for m, c in self._coeffs.items()})

    def __sub__(self, other: "MultiVector") -> "MultiVector":
        return self + (-other)

    def __mul__(self, s: float) -> "MultiVector":
        s = float(s)
        return MultiVector(self.n, self.grade, {m: s * c for m, c in self._coeffs.items()})

    __rmul__ = __mul__

    def __xor__(self, other: "MultiVector") -> "MultiVector":
        return wedge(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiVector):
            return NotImplemented
        if self.n != other.n:
            return False
        if self.is_zero() and other.is_zero():
            return True
        return self.grade == other.grade and dict(self._coeffs) == dict(other._coeffs)

    def __hash__(self):
        return hash((self.n, self.grade, frozenset(self._coeffs.items())))

    def __repr__(self) -> str:
        if not self._coeffs:
            return f"MultiVector(n={self.n}, grade={self.grade}, 0)"
        terms = []
        for m in sorted(self._coeffs, key=lambda m: indices_of(m)):
            name = "e" + "".join(str(i) for i in indices_of(m)) if m else "1"
            terms.append(f"{self._coeffs[m]:+g}*{name}")
        return f"MultiVector(n={self.n}, {' '.join(terms)})"


def _same_space(a: MultiVector, b: MultiVector) -> None:
    if a.n != b.n:
        raise DimensionError(f"dimension mismatch: R^{a.n} vs R^{b.n}")


def wedge(a: MultiVector, b: MultiVector) -> MultiVector:
    """Exterior product.  Grade overflow (r + s > n) gives the zero n-vector."""
    _same_space(a, b)
    n = a.n
    g = a.grade + b.grade
    if g > n:
        return MultiVector.zero(n, n)
    out: dict[int, float] = {}
    for ma, ca in a.coeffs.items():
        for mb, cb in b.coeffs.items():
            s = blade_sign(ma, mb)
            if s:
                out[ma | mb] = out.get(ma | mb, 0.0) + s * ca * cb
    return MultiVector(n, g, out)


def wedge_all(vectors: Iterable[MultiVector], n: int | None = None) -> MultiVector:
    vs = list(vectors)
    if not vs:
        if n is None:
            raise ValueError("need n for an empty wedge")
        return MultiVector.scalar(n, 1.0)
    return functools.reduce(wedge, vs)


def hodge(a: MultiVector) -> MultiVector:
    """Hodge star: e_I -> sign(I, J) e_J with J the complement of I."""
    n = a.n
    full = (1 << n) - 1
    out = {}
    for m, c in a.coeffs.items():
        comp = full ^ m
        out[comp] = blade_sign(m, comp) * c
    return MultiVector(n, n - a.grade, out)


def cross(a: MultiVector, b: MultiVector) -> MultiVector:
    """Generalized cross product *(a ^ b), grade n - r - s."""
    _same_space(a, b)
    if a.grade + b.grade > a.n:
        return MultiVector.zero(a.n, 0)
    return hodge(wedge(a, b))


def dot(a: MultiVector, b: MultiVector) -> MultiVector:
    """Generalized dot product *(a ^ *b), grade s - r (zero scalar if r > s)."""
    _same_space(a, b)
    if a.grade > b.grade:
        return MultiVector.zero(a.n, 0)
    return hodge(wedge(a, hodge(b)))


def triple(u: MultiVector, v: MultiVector, w: MultiVector) -> float:
    """Scalar (u x v) . w = *(u ^ v ^ w); grades must sum to n."""
    _same_space(u, v)
    _same_space(u, w)
    if u.grade + v.grade + w.grade != u.n:
        raise DimensionError(
            f"triple product needs grades summing to {u.n}, got {u.grade}+{v.grade}+{w.grade}"
        )
    return hodge(wedge(wedge(u, v), w)).scalar_part()


def inner(a: MultiVector, b: MultiVector) -> float:
    """Euclidean pairing of two multivectors of equal grade."""
    _same_space(a, b)
    if a.grade != b.grade:
        raise DimensionError("inner product needs equal grades")
    return float(sum(c * b.coeffs.get(m, 0.0) for m, c in a.coeffs.items()))


# ---------------------------------------------------------------------------
# dense coefficient arrays


def dim(n: int, r: int) -> int:
    return math.comb(n, r) if 0 <= r <= n else 0


@functools.lru_cache(maxsize=None)
def wedge_table(n: int, r: int, s: int):
    """Non-zero products of blades: arrays (i, j, out, sign) indexing the grade r, s, r+s bases."""
    ii, jj, oo, ss = [], [], [], []
    if r + s <= n:
        pos = blade_position(n, r + s)
        for i, ma in enumerate(blades(n, r)):
            for j, mb in enumerate(blades(n, s)):
                sg = blade_sign(ma, mb)
                if sg:
                    ii.append(i)
                    jj.append(j)
                    oo.append(pos[ma | mb])
                    ss.append(sg)
    arr = lambda x, t: np.asarray(x, dtype=t)
    return arr(ii, np.intp), arr(jj, np.intp), arr(oo, np.intp), arr(ss, float)


@functools.lru_cache(maxsize=None)
def hodge_table(n: int, r: int):
    """(target position, sign) of the Hodge image of each grade-r blade."""
    full = (1 << n) - 1
    pos = blade_position(n, n - r)
    tgt, sgn = [], []
    for m in blades(n, r):
        tgt.append(pos[full ^ m])
        sgn.append(blade_sign(m, full ^ m))
    return np.asarray(tgt, dtype=np.intp), np.asarray(sgn, dtype=float)


def wedge_c(a: np.ndarray, r: int, b: np.ndarray, s: int, n: int) -> np.ndarray:
    """Wedge of coefficient arrays; leading axes broadcast."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if r + s > n:
        shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        return np.zeros(shape + (1,))
    ii, jj, oo, ss = wedge_table(n, r, s)
    prod = a[..., ii] * b[..., jj]
    return prod @ _scatter(n, r, s)


@functools.lru_cache(maxsize=None)
def _scatter(n: int, r: int, s: int) -> np.ndarray:
    _, _, oo, ss = wedge_table(n, r, s)
    M = np.zeros((len(oo), dim(n, r + s)))
    M[np.arange(len(oo)), oo] = ss
    return M


def hodge_c(a: np.ndarray, r: int, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    tgt, sgn = hodge_table(n, r)
    out = np.empty_like(a)
    out[..., tgt] = a * sgn
    return out


def cross_c(a, r, b, s, n):
    if r + s > n:
        shape = np.broadcast_shapes(np.shape(a)[:-1], np.shape(b)[:-1])
        return np.zeros(shape + (1,))
    return hodge_c(wedge_c(a, r, b, s, n), r + s, n)


def dot_c(a, r, b, s, n):
    if r > s:
        shape = np.broadcast_shapes(np.shape(a)[:-1], np.shape(b)[:-1])
        return np.zeros(shape + (1,))
    return hodge_c(wedge_c(a, r, hodge_c(b, s, n), n - s, n), r + n - s, n)


def wedge_vectors(vecs: np.ndarray) -> np.ndarray:
    """Coefficients of v1 ^ ... ^ vk for ``vecs`` of shape (..., k, n)."""
    vecs = np.asarray(vecs, dtype=float)
    k, n = vecs.shape[-2:]
    out = np.ones(vecs.shape[:-2] + (1,))
    for i in range(k):
        out = wedge_c(out, i, vecs[..., i, :], 1, n)
    return out


@functools.lru_cache(maxsize=None)
def triple_tensor(n: int, k: int, l: int) -> np.ndarray:
    """T[i, I, J] = *(e_i ^ e_I ^ e_J) for grades 1, k, l with 1 + k + l = n."""
    if 1 + k + l != n:
        raise DimensionError("triple tensor needs 1 + k + l = n")
    full = (1 << n) - 1
    T = np.zeros((n, dim(n, k), dim(n, l)))
    for a, mI in enumerate(blades(n, k)):
        for b, mJ in enumerate(blades(n, l)):
            sIJ = blade_sign(mI, mJ)
            if not sIJ:
                continue
            rest = full ^ (mI | mJ)
            i = rest.bit_length() - 1
            T[i, a, b] = blade_sign(rest, mI | mJ) * sIJ
    return T


def triple_c(u: np.ndarray, X: np.ndarray, k: int, Y: np.ndarray, l: int) -> np.ndarray:
    """*(u ^ X ^ Y) for a vector u and a k-vector / l-vector pair, broadcast over leading axes."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    T = triple_tensor(n, k, l)
    return np.einsum("...i,...a,...b,iab->...", u, X, Y, T, optimize=True)


def dual_vector_c(X: np.ndarray, k: int, Y: np.ndarray, l: int, n: int) -> np.ndarray:
    """Vector z with <u, z> = *(u ^ X ^ Y) for every u."""
    T = triple_tensor(n, k, l)
    return np.einsum("...a,...b,iab->...i", X, Y, T, optimize=True)
