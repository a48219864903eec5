"""Gauss-integral linking numbers of parametrized cycles in R^n.

For a k-cycle A and an l-cycle B with k + l = n - 1 the linking number is

    lk(A, B) = (-1)^k / a_n  int_A int_B  *((y - x) ^ tx ^ ty) / |y - x|^n

where tx, ty are the raw parameter-tangent wedges, so no surface-measure
normalization is needed.  In R^3 this is the classical Gauss integral.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from . import multivector as mv
from .domain import sphere_area
from .errors import DimensionError, NearCollisionError
from .flows import ParamPatch
from .stats import Estimate


@dataclass(frozen=True)
class SingularManifold:
    patches: tuple[ParamPatch, ...]
    label: str = ""

    def __post_init__(self):
        patches = tuple(self.patches)
        if not patches:
            raise ValueError("a manifold needs at least one patch")
        if len({P.dim for P in patches}) != 1:
            raise DimensionError("patches must share a dimension")
        object.__setattr__(self, "patches", patches)

    @property
    def dim(self) -> int:
        return self.patches[0].dim

    def flipped(self) -> "SingularManifold":
        return SingularManifold(tuple(P.flipped() for P in self.patches), self.label)

    def translated(self, v) -> "SingularManifold":
        v = np.asarray(v, dtype=float)

        def shift(P):
            def frame(u, f=P.frame):
                x, t = f(u)
                return x + v, t
            return ParamPatch(P.dim, P.lo, P.hi, frame, P.orientation, P.label)

        return SingularManifold(tuple(shift(P) for P in self.patches), self.label)

    def sample(self, m: int = 16) -> np.ndarray:
        return np.concatenate([P.map(P.grid([m] * P.dim)[0]) for P in self.patches])


@dataclass(frozen=True)
class QuadratureConfig:
    """Midpoint tensor quadrature settings.

    Each patch axis gets ``max(points, ceil(length / spacing))`` nodes, where
    ``length`` is the axis' physical length.  A patch pair is refined
    dyadically (up to ``max_depth`` times) while ``near_factor`` times the
    larger cell diameter exceeds the distance between the patches.
    ``delta_near`` defaults to 1e-3 times the ``scale`` passed to ``link``.
    """

    points: int = 16
    spacing: float | None = None
    delta_near: float | None = None
    max_depth: int = 3
    near_factor: float = 10.0
    max_nodes: int = 400_000

    def __post_init__(self):
        if self.delta_near is not None and not self.delta_near > 0:
            raise ValueError("delta_near must be positive")
        if self.points < 1:
            raise ValueError("need at least one point per axis")


def linking_kernel(x, tx, y, ty) -> float:
    """(-1)^k / a_n * *((y - x) ^ tx ^ ty) / |y - x|^n for MultiVector tangents."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    k, l = tx.grade, ty.grade
    if k + l != n - 1:
        raise DimensionError("tangent grades must sum to n - 1")
    u = y - x
    r = float(np.linalg.norm(u))
    if r == 0.0:
        raise NearCollisionError("kernel evaluated on the diagonal")
    t = float(mv.triple_c(u, tx.to_array(), k, ty.to_array(), l))
    return (-1) ** k * t / (sphere_area(n) * r**n)


def kernel_rows(x: np.ndarray, X: np.ndarray, k: int, y: np.ndarray, Y: np.ndarray, l: int,
                chunk: int = 4_000_000) -> np.ndarray:
    """Row sums  sum_b (-1)^k / a_n * *((y_b - x_a) ^ X_a ^ Y_b) / |y_b - x_a|^n  for each a.

    X, Y carry any quadrature weights.  Uses the dual vector of X_a ^ Y_b
    through one matrix product per chunk.
    """
    n = x.shape[-1]
    T = mv.triple_tensor(n, k, l)
    M = np.einsum("aI,iIJ->aiJ", X, T)  # (A, n, C_l)
    B = len(y)
    step = max(1, chunk // max(1, B * n))
    out = np.empty(len(x))
    for s in range(0, len(x), step):
        Ms = M[s : s + step]
        MY = (Ms.reshape(-1, Ms.shape[-1]) @ Y.T).reshape(len(Ms), n, B)
        u = y[None, :, :] - x[s : s + step, None, :]
        trip = np.einsum("abi,aib->ab", u, MY)
        r2 = np.einsum("abi,abi->ab", u, u)
        out[s : s + step] = np.sum(trip / r2 ** (0.5 * n), axis=1)
    return (-1) ** k * out / sphere_area(n)


def kernel_sum(x: np.ndarray, X: np.ndarray, k: int, y: np.ndarray, Y: np.ndarray, l: int,
               chunk: int = 4_000_000) -> float:
    """Sum of the linking kernel over all node pairs (see kernel_rows)."""
    return math.fsum(kernel_rows(x, X, k, y, Y, l, chunk))


def _axis_lengths(P: ParamPatch, probe: int = 5) -> np.ndarray:
    u, _ = P.grid([probe] * P.dim)
    _, t = P.frame(u)
    norms = np.linalg.norm(t, axis=-1)  # (M, d)
    return np.max(norms, axis=0) * (np.asarray(P.hi) - np.asarray(P.lo))


def _counts(P: ParamPatch, q: QuadratureConfig) -> list[int]:
    if q.spacing is None:
        return [q.points] * P.dim
    L = _axis_lengths(P)
    return [max(q.points, int(math.ceil(Li / q.spacing))) for Li in L]


class _Sampled:
    """A patch evaluated on a midpoint grid."""

    def __init__(self, P: ParamPatch, counts):
        self.counts = list(counts)
        u, cell = P.grid(self.counts)
        x, t = P.frame(u)
        self.u = u
        self.x = x
        self.w = mv.wedge_vectors(t) * (cell * P.orientation)
        lengths = np.linalg.norm(t, axis=-1) * ((np.asarray(P.hi) - np.asarray(P.lo)) / np.asarray(self.counts))
        self.cell = float(np.max(np.sqrt(np.sum(lengths**2, axis=-1)))) if P.dim else 0.0


def _min_dist(a: np.ndarray, b: np.ndarray) -> float:
    d, _ = cKDTree(b).query(a, k=1)
    return float(np.min(d))


def _closest_nodes(SP: "_Sampled", SQ: "_Sampled") -> tuple[float, int, int]:
    d, j = cKDTree(SQ.x).query(SP.x, k=1)
    i = int(np.argmin(d))
    return float(d[i]), i, int(j[i])


def _local_distance(P: ParamPatch, Q: ParamPatch, SP: "_Sampled", SQ: "_Sampled") -> float:
    """Distance between the patches near their closest node pair, minimized over both parameters.

    Node distances overestimate the true gap by up to a cell diameter, which
    hides contacts between nodes.
    """
    d0, i, j = _closest_nodes(SP, SQ)
    k = P.dim
    x0 = np.concatenate([SP.u[i], SQ.u[j]])
    bounds = list(zip(np.asarray(P.lo, float), np.asarray(P.hi, float))) + \
        list(zip(np.asarray(Q.lo, float), np.asarray(Q.hi, float)))

    def gap(z):
        return float(np.sum((P.map(z[None, :k])[0] - Q.map(z[None, k:])[0]) ** 2))

    res = minimize(gap, x0, method="L-BFGS-B", bounds=bounds, options={"maxiter": 50})
    return min(d0, math.sqrt(max(res.fun, 0.0)))


def link_patch_pair(P: ParamPatch, Q: ParamPatch, q: QuadratureConfig, delta_near: float,
                    counts_p=None, counts_q=None) -> tuple[float, float, dict]:
    """Linking integral over one patch pair: (value, refinement error proxy, info)."""
    k, l = P.dim, Q.dim
    cp = list(counts_p or _counts(P, q))
    cq = list(counts_q or _counts(Q, q))
    SP, SQ = _Sampled(P, cp), _Sampled(Q, cq)
    dist = _min_dist(SP.x, SQ.x)
    if dist < delta_near:
        raise NearCollisionError(f"patches {P.label!r} and {Q.label!r} within {dist:.2e}", (P.label, Q.label))
    depth = 0
    while (q.near_factor * max(SP.cell, SQ.cell) > dist and depth < q.max_depth
           and 2 ** k * len(SP.x) <= q.max_nodes and 2 ** l * len(SQ.x) <= q.max_nodes):
        cp = [2 * c for c in cp]
        cq = [2 * c for c in cq]
        SP, SQ = _Sampled(P, cp), _Sampled(Q, cq)
        dist = min(dist, _min_dist(SP.x, SQ.x))
        if dist < delta_near:
            raise NearCollisionError(f"patches {P.label!r} and {Q.label!r} within {dist:.2e}", (P.label, Q.label))
        depth += 1
    if max(SP.cell, SQ.cell) > dist:
        dist = min(dist, _local_distance(P, Q, SP, SQ))
        if dist < delta_near:
            raise NearCollisionError(f"patches {P.label!r} and {Q.label!r} within {dist:.2e}", (P.label, Q.label))
    fine = kernel_sum(SP.x, SP.w, k, SQ.x, SQ.w, l)
    CP = _Sampled(P, [max(1, c // 2) for c in cp])
    CQ = _Sampled(Q, [max(1, c // 2) for c in cq])
    coarse = kernel_sum(CP.x, CP.w, k, CQ.x, CQ.w, l)
    return fine, abs(fine - coarse), {"distance": dist, "depth": depth, "counts": (cp, cq)}


def link(A: SingularManifold, B: SingularManifold, q: QuadratureConfig | None = None,
         scale: float = 2.0) -> Estimate:
    """Linking number of two disjoint cycles with dim A + dim B = n - 1.

    ``std_error`` holds the refinement error proxy (sum over patch pairs of
    |fine - coarse|); ``n_samples`` the number of patch pairs.  ``scale`` is
    the length that sets the default near-collision cutoff (the domain
    diameter).
    """
    q = q or QuadratureConfig()
    n = A.patches[0].map(np.zeros((1, A.dim)) + np.asarray(A.patches[0].lo)).shape[-1]
    if A.dim + B.dim != n - 1:
        raise DimensionError(f"dimensions {A.dim} + {B.dim} must equal n - 1 = {n - 1}")
    delta = q.delta_near if q.delta_near is not None else 1e-3 * scale
    values, errors = [], []
    for P in A.patches:
        for Q in B.patches:
            v, e, _ = link_patch_pair(P, Q, q, delta)
            values.append(v)
            errors.append(e)
    return Estimate(math.fsum(values), math.fsum(errors), len(values))


def manifold_nodes(A: SingularManifold, q: QuadratureConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes of all patches and their weighted tangent wedges."""
    q = q or QuadratureConfig()
    parts = [_Sampled(P, _counts(P, q)) for P in A.patches]
    return np.concatenate([S.x for S in parts]), np.concatenate([S.w for S in parts])


def max_cell(A: SingularManifold, q: QuadratureConfig | None = None) -> float:
    """Largest quadrature cell diameter; node distances overestimate true distances by at most this."""
    q = q or QuadratureConfig()
    return max(_Sampled(P, _counts(P, q)).cell for P in A.patches)


def point_distance(A: SingularManifold, points, q: QuadratureConfig | None = None, steps: int = 8) -> np.ndarray:
    """Distance from each point to A.

    Points within a cell diameter of a patch are refined by Gauss-Newton
    steps from the nearest node's parameters; farther points get the node
    distance, which exceeds the true distance by less than a cell diameter.
    """
    q = q or QuadratureConfig()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.full(len(pts), np.inf)
    for P in A.patches:
        S = _Sampled(P, _counts(P, q))
        d, j = cKDTree(S.x).query(pts, k=1)
        best = np.minimum(best, d)
        near = np.flatnonzero(d < S.cell)
        if len(near) == 0 or P.dim == 0:
            continue
        u = S.u[j[near]].copy()
        target = pts[near]
        lo, hi = np.asarray(P.lo, dtype=float), np.asarray(P.hi, dtype=float)
        for _ in range(steps):
            x, t = P.frame(u)
            best[near] = np.minimum(best[near], np.linalg.norm(target - x, axis=-1))
            step = np.einsum("mdn,mn->md", np.linalg.pinv(np.swapaxes(t, 1, 2)), target - x)
            u = np.clip(u + step, lo, hi)
        best[near] = np.minimum(best[near], np.linalg.norm(target - P.map(u), axis=-1))
    return best


def min_distance(A: SingularManifold, B: SingularManifold, m: int = 32) -> float:
    """Lower bound on dist(A, B): sampled distance minus half the cell diameters."""
    best = math.inf
    for P in A.patches:
        SP = _Sampled(P, [m] * P.dim)
        for Q in B.patches:
            SQ = _Sampled(Q, [m] * Q.dim)
            d = _min_dist(SP.x, SQ.x) - 0.5 * (SP.cell + SQ.cell)
            best = min(best, d)
    return max(0.0, best)


# ---------------------------------------------------------------------------
# simple cycles


def circle_patch(center, e_a, e_b, radius: float, label: str = "circle") -> ParamPatch:
    """s -> center + radius (cos s e_a + sin s e_b), s in [0, 2 pi]."""
    c = np.asarray(center, dtype=float)
    a = np.asarray(e_a, dtype=float)
    b = np.asarray(e_b, dtype=float)

    def frame(u):
        s = u[:, :1]
        x = c + radius * (np.cos(s) * a + np.sin(s) * b)
        t = radius * (-np.sin(s) * a + np.cos(s) * b)
        return x, t[:, None, :]

    return ParamPatch(1, np.zeros(1), np.array([2 * np.pi]), frame, 1.0, label)


def circle(center, e_a, e_b, radius: float, label: str = "circle") -> SingularManifold:
    return SingularManifold((circle_patch(center, e_a, e_b, radius, label),), label)


def hopf_pair() -> tuple[SingularManifold, SingularManifold]:
    """Unit circle in the x1x2-plane and unit circle in the x1x3-plane through its center.

    B is traversed so that it crosses the disk bounded by A along +e3,
    which makes the linking number +1.
    """
    e = np.eye(3)
    A = circle(np.zeros(3), e[0], e[1], 1.0, "A")
    B = circle(e[0], e[0], -e[2], 1.0, "B")
    return A, B


def unlinked_pair() -> tuple[SingularManifold, SingularManifold]:
    """The Hopf circles with B moved 3 units along e1, so they bound disjoint disks."""
    A, B = hopf_pair()
    return A, B.translated(np.array([3.0, 0.0, 0.0]))
