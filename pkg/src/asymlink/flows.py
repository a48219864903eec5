"""Actions generated by commuting divergence-free fields, orbit rectangles and their cone closures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import multivector as mv
from .calculus import DEFAULT_FD, FDConfig, MultiVectorField, div_field, lie_bracket, scale_field
from .domain import Domain, RNGStream
from .errors import DimensionError, FlowEscapeError

ESCAPE_TOL = 1e-6


@dataclass(frozen=True)
class Rectangle:
    """[0, T_1] x ... x [0, T_k]."""

    sides: tuple[float, ...]

    def __post_init__(self):
        sides = tuple(float(s) for s in np.atleast_1d(self.sides))
        if any(s <= 0 for s in sides):
            raise ValueError("rectangle sides must be positive")
        object.__setattr__(self, "sides", sides)

    @classmethod
    def cube(cls, k: int, side: float) -> "Rectangle":
        return cls((side,) * k)

    @property
    def k(self) -> int:
        return len(self.sides)

    @property
    def measure(self) -> float:
        return float(np.prod(self.sides))


class Action:
    """R^k-action generated by commuting vector fields on a domain.

    ``method`` is ``"rk4"``, ``"exact"`` (closed-form flows supplied by the
    generators) or ``"auto"`` (exact when every generator supplies one).
    """

    def __init__(self, domain: Domain, generators: Sequence[MultiVectorField], dt: float | None = None,
                 method: str = "auto", label: str = ""):
        gens = tuple(generators)
        if not gens:
            raise DimensionError("an action needs at least one generator")
        for g in gens:
            if g.grade != 1 or g.n != domain.n:
                raise DimensionError("generators must be vector fields on the domain's space")
        if method not in ("auto", "rk4", "exact"):
            raise ValueError(f"unknown integration method {method!r}")
        if method == "exact" and any(g.flow is None for g in gens):
            raise ValueError("exact flows requested but a generator has none")
        self.domain = domain
        self.generators = gens
        self.method = method
        self.label = label
        self._dt = dt

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def k(self) -> int:
        return len(self.generators)

    @property
    def support(self):
        """Common support region of the generators, if they declare one."""
        sups = {id(g.support): g.support for g in self.generators}
        if len(sups) == 1:
            return next(iter(sups.values()))
        return None

    @property
    def uses_exact_flow(self) -> bool:
        return self.method == "exact" or (self.method == "auto" and all(g.flow is not None for g in self.generators))

    @property
    def dt(self) -> float:
        if self._dt is None:
            self._dt = default_step(self)
        return self._dt

    def values(self, x) -> np.ndarray:
        """Generator values, shape (..., k, n)."""
        x = np.asarray(x, dtype=float)
        return np.stack([g(x) for g in self.generators], axis=-2)

    def wedge(self, x) -> np.ndarray:
        """Coefficients of X^1 ^ ... ^ X^k at x, shape (..., C(n, k))."""
        return mv.wedge_vectors(self.values(x))

    def scaled(self, c: float) -> "Action":
        return Action(self.domain, [scale_field(g, c) for g in self.generators], method=self.method,
                      label=self.label)

    def with_method(self, method: str) -> "Action":
        return Action(self.domain, self.generators, self._dt, method, self.label)

    def flow(self, t, p) -> np.ndarray:
        return flow(self, t, p)


def default_step(a: Action, samples: int = 4000) -> float:
    """1e-2 * diameter / max |X^i| over sample points (support-aware)."""
    pts = [a.domain.sample(RNGStream(0, (7,)), samples)]
    if a.support is not None:
        pts.append(a.support.sample(RNGStream(0, (8,)), samples))
    x = np.concatenate(pts)
    vmax = float(np.max(np.linalg.norm(a.values(x), axis=-1)))
    if vmax == 0.0:
        return 1e-2 * a.domain.diameter
    return 1e-2 * a.domain.diameter / vmax


def _rk4(field: MultiVectorField, p: np.ndarray, t: np.ndarray, dt: float) -> np.ndarray:
    steps = int(math.ceil(float(np.max(np.abs(t))) / dt)) if t.size else 0
    if steps == 0:
        return p.copy()
    h = (t / steps)[:, None]
    x = p.copy()
    for _ in range(steps):
        k1 = field(x)
        k2 = field(x + 0.5 * h * k1)
        k3 = field(x + 0.5 * h * k2)
        k4 = field(x + h * k3)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def _confine(d: Domain, x: np.ndarray) -> np.ndarray:
    sd = d.signed_distance(x)
    worst = float(np.max(sd)) if sd.size else -1.0
    if worst > ESCAPE_TOL:
        raise FlowEscapeError(f"trajectory left the domain by {worst:.3e}")
    if worst > 0.0:
        x = d.project(x)
    return x


def flow(a: Action, t, p) -> np.ndarray:
    """Phi_t(p) = phi^1_{t_1} o ... o phi^k_{t_k}(p), applying generator k first.

    ``t`` has shape (k,) or (N, k); ``p`` has shape (n,) or (N, n).
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    single = t.ndim == 1 and p.ndim == 1
    t2 = np.atleast_2d(t)
    p2 = np.atleast_2d(p)
    if t2.shape[-1] != a.k:
        raise DimensionError(f"need {a.k} times per point, got {t2.shape[-1]}")
    N = max(len(t2), len(p2))
    t2 = np.broadcast_to(t2, (N, a.k))
    x = np.broadcast_to(p2, (N, a.n)).copy()
    exact = a.uses_exact_flow
    for i in reversed(range(a.k)):
        g = a.generators[i]
        ti = np.ascontiguousarray(t2[:, i])
        if exact:
            x = np.asarray(g.flow(x, ti), dtype=float)
        else:
            x = _rk4(g, x, ti, a.dt)
        x = _confine(a.domain, x)
    return x[0] if single else x


# ---------------------------------------------------------------------------
# parametrized patches


@dataclass(frozen=True)
class ParamPatch:
    """Oriented map of a parameter rectangle into R^n.

    ``frame(u)`` returns ``(points (M, n), tangents (M, d, n))`` for parameter
    rows ``u`` of shape (M, d).
    """

    dim: int
    lo: np.ndarray
    hi: np.ndarray
    frame: Callable
    orientation: float = 1.0
    label: str = ""

    def map(self, u) -> np.ndarray:
        return self.frame(np.atleast_2d(u))[0]

    def tangent(self, u) -> np.ndarray:
        return self.frame(np.atleast_2d(u))[1]

    def flipped(self) -> "ParamPatch":
        return ParamPatch(self.dim, self.lo, self.hi, self.frame, -self.orientation, self.label)

    def grid(self, counts: Sequence[int]) -> tuple[np.ndarray, float]:
        """Midpoint tensor grid: nodes (M, d) and the common cell volume."""
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(c) + 0.5) / c for i, c in enumerate(counts)]
        if not axes:
            return np.zeros((1, 0)), 1.0
        nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        cell = float(np.prod((hi - lo) / np.asarray(counts, dtype=float)))
        return nodes, cell


def orbit_patch(a: Action, p, T: Rectangle) -> ParamPatch:
    """t -> Phi(t, p) on T with tangents X^i(Phi(t, p))."""
    p = np.asarray(p, dtype=float)
    if T.k != a.k:
        raise DimensionError("rectangle dimension must match the action")

    def frame(u):
        x = flow(a, u, p)
        return x, a.values(x)

    return ParamPatch(a.k, np.zeros(a.k), np.asarray(T.sides), frame, 1.0, "orbit")


def _face_times(s: np.ndarray, i: int, value: float) -> np.ndarray:
    return np.insert(s, i, value, axis=1)


def cone_patches(a: Action, p, T: Rectangle, apex) -> list[ParamPatch]:
    """Straight cones from the faces t_i = delta * T_i of the orbit rectangle to ``apex``.

    Parameters of the cone over face (i, delta) are (r, t without t_i); the
    orientation (-1)^{i + delta} (1-based i) makes orbit plus cones a cycle.
    """
    p = np.asarray(p, dtype=float)
    apex = np.asarray(apex, dtype=float)
    k = a.k
    out = []
    for i in range(k):
        for delta in (0, 1):
            value = delta * T.sides[i]
            others = [T.sides[j] for j in range(k) if j != i]

            def frame(u, i=i, value=value):
                r = u[:, :1]
                base = flow(a, _face_times(u[:, 1:], i, value), p)
                vals = a.values(base)
                tangents = np.empty((len(u), k, a.n))
                tangents[:, 0] = apex - base
                rest = [j for j in range(k) if j != i]
                for col, j in enumerate(rest, start=1):
                    tangents[:, col] = (1.0 - r) * vals[:, j]
                return (1.0 - r) * base + r * apex, tangents

            out.append(ParamPatch(k, np.zeros(k), np.array([1.0] + others), frame,
                                  float((-1) ** (i + 1 + delta)), f"cone[{i + 1},{delta}]"))
    return out


@dataclass(frozen=True)
class ClosedOrbitManifold:
    """Orbit rectangle closed up by cones to an apex.

    ``cancelled`` lists faces i whose two cones coincide pointwise with
    opposite orientation (the orbit closes up along axis i); they are left
    out of ``patches`` since they cancel as chains.
    """

    orbit: ParamPatch
    cones: tuple[ParamPatch, ...]
    apex: np.ndarray
    cancelled: tuple[int, ...] = field(default=())

    @property
    def patches(self) -> list[ParamPatch]:
        keep = [c for idx, c in enumerate(self.cones) if idx // 2 not in self.cancelled]
        return [self.orbit] + keep


def closed_orbit_manifold(a: Action, p, T: Rectangle, apex, cancel_tol: float | None = None,
                          probe: int = 7) -> ClosedOrbitManifold:
    orbit = orbit_patch(a, p, T)
    cones = cone_patches(a, p, T, apex)
    tol = 1e-7 * a.domain.diameter if cancel_tol is None else cancel_tol
    cancelled = []
    for i in range(a.k):
        s = _probe_nodes(T, i, probe)
        lo = flow(a, _face_times(s, i, 0.0), p)
        hi = flow(a, _face_times(s, i, T.sides[i]), p)
        if float(np.max(np.linalg.norm(lo - hi, axis=-1))) <= tol:
            cancelled.append(i)
    return ClosedOrbitManifold(orbit, tuple(cones), np.asarray(apex, dtype=float), tuple(cancelled))


def _probe_nodes(T: Rectangle, i: int, m: int) -> np.ndarray:
    others = [T.sides[j] for j in range(T.k) if j != i]
    if not others:
        return np.zeros((1, 0))
    axes = [s * (np.arange(m) + 0.5) / m for s in others]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(others))


def closure_residual(a: Action, p, T: Rectangle, apex, m: int = 5) -> float:
    """Max distance between orbit faces and the r = 0 edges of the matching cones."""
    cones = cone_patches(a, p, T, apex)
    worst = 0.0
    for i in range(a.k):
        s = _probe_nodes(T, i, m)
        for delta in (0, 1):
            face = flow(a, _face_times(s, i, delta * T.sides[i]), p)
            edge = cones[2 * i + delta].map(np.concatenate([np.zeros((len(s), 1)), s], axis=1))
            worst = max(worst, float(np.max(np.linalg.norm(face - edge, axis=-1))))
    return worst


def chain_boundary(patches: Sequence[ParamPatch], form: MultiVectorField, m: int = 24) -> tuple[float, float]:
    """Integrate a (d-1)-vector field (dual of a form) over the boundary of a chain.

    Returns (signed total, sum of absolute face contributions).  For a cycle
    the total vanishes up to quadrature error.
    """
    total = []
    scale = 0.0
    for P in patches:
        d = P.dim
        for i in range(d):
            for delta in (0, 1):
                other = [j for j in range(d) if j != i]
                sub = ParamPatch(d - 1, np.asarray(P.lo)[other], np.asarray(P.hi)[other], None)
                s, cell = sub.grid([m] * (d - 1))
                u = np.insert(s, i, P.hi[i] if delta else P.lo[i], axis=1)
                x, tang = P.frame(u)
                blade = mv.wedge_vectors(tang[:, other, :])
                val = cell * float(np.sum(np.sum(form(x) * blade, axis=-1)))
                val *= P.orientation * (-1) ** (i + 1 + delta)
                total.append(val)
                scale += abs(val)
    return math.fsum(total), scale


# ---------------------------------------------------------------------------
# diagnostics


def boundary_samples(d: Domain, rng: RNGStream, count: int) -> np.ndarray:
    u = rng.generator().normal(size=(count, d.n))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    if d.kind == "box":
        return d.project(d.center + (d.size - d.center) * (0.5 + u))
    return d.center + d.semi_axes * u


def action_diagnostics(a: Action, samples: int, rng: RNGStream, fd: FDConfig = DEFAULT_FD) -> dict:
    """Max Lie bracket, max divergence and max normal component over random samples."""
    interior = [a.domain.sample(rng.spawn(0), samples)]
    if a.support is not None:
        interior.append(a.support.sample(rng.spawn(1), samples))
    x = np.concatenate(interior)
    bracket = 0.0
    for i in range(a.k):
        for j in range(i + 1, a.k):
            br = lie_bracket(a.generators[i], a.generators[j], fd)(x)
            bracket = max(bracket, float(np.max(np.linalg.norm(br, axis=-1))))
    divergence = max(float(np.max(np.abs(div_field(g, fd)(x)))) for g in a.generators)
    xb = boundary_samples(a.domain, rng.spawn(2), samples)
    normal = a.domain.boundary_normal(xb)
    tangency = max(float(np.max(np.abs(np.sum(g(xb) * normal, axis=-1)))) for g in a.generators)
    return {"max_bracket": bracket, "max_divergence": divergence, "max_normal_component": tangency}
