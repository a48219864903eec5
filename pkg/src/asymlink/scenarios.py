"""Linked torus tubes carrying conservative torus actions.

Every torus here is a product of circles, one per rotation plane: rotation s
acts in the coordinate plane (i_s, j_s) about a center c_s, and the core torus
is the set where each planar radius rho_s equals R_s and every remaining
("fixed") coordinate equals its core value.  The distance to the core,

    d(x)^2 = sum_s (rho_s(x) - R_s)^2 + sum_f (x_f - x0_f)^2,

is invariant under all the rotations, so the generators lambda(d) K_s
(K_s the rigid rotation field of plane s, lambda a bump in d) are
divergence-free, commute, have closed-form flows and vanish outside the tube
d < outer radius.

Higher-dimensional linked pairs are obtained from a Hopf-like pair of
circles in R^3 by revolving one of the two tori about a hyperplane that
misses both, which adds one dimension to the revolved torus and one to the
ambient space.  Since each torus can only revolve through one of its fixed
coordinates, dimensions (k, l) with |k - l| <= 1 are reachable.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import roots_legendre

from .calculus import MultiVectorField, scale_field
from .domain import Domain, RNGStream, ball_volume, sphere_area
from .errors import DimensionError
from .flows import Action, ParamPatch
from .linking import QuadratureConfig, SingularManifold, circle, link

TWO_PI = 2.0 * math.pi


class BumpProfile:
    """C^2 quintic step in the core distance: 1 on [0, inner], 0 on [outer, inf)."""

    def __init__(self, inner: float, outer: float):
        if not 0.0 <= inner < outer:
            raise ValueError("need 0 <= inner < outer")
        self.inner = float(inner)
        self.outer = float(outer)

    def _t(self, d):
        return np.clip((self.outer - np.asarray(d, dtype=float)) / (self.outer - self.inner), 0.0, 1.0)

    def __call__(self, d) -> np.ndarray:
        t = self._t(d)
        return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)

    def derivative(self, d) -> np.ndarray:
        t = self._t(d)
        return -30.0 * t * t * (1.0 - t) ** 2 / (self.outer - self.inner)

    def moment(self, power: int, degree: int) -> float:
        """int_0^outer lambda(d)^power d^degree dd (exact Gauss-Legendre on each polynomial piece)."""
        m = 5 * power + degree + 2
        s, w = roots_legendre(m)
        core = self.inner ** (degree + 1) / (degree + 1)
        h = 0.5 * (self.outer - self.inner)
        d = self.inner + h * (s + 1.0)
        return core + h * float(np.sum(w * self(d) ** power * d**degree))

    def __repr__(self):
        return f"BumpProfile(inner={self.inner:g}, outer={self.outer:g})"


@dataclass(frozen=True)
class TorusEmbedding:
    """Core torus T^k in R^n as a product of planar circles.

    ``planes[s] = (i, j)`` with center ``centers[s]`` (in that plane's two
    coordinates), radius ``radii[s]`` and rotation sense ``signs[s]``;
    ``fixed`` maps each remaining coordinate to its core value.
    """

    n: int
    planes: tuple
    centers: tuple
    radii: tuple
    signs: tuple
    fixed: tuple  # ((coordinate, value), ...)

    def __post_init__(self):
        used = [c for p in self.planes for c in p] + [f for f, _ in self.fixed]
        if sorted(used) != list(range(self.n)):
            raise DimensionError("planes and fixed coordinates must partition the coordinates")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")

    @property
    def k(self) -> int:
        return len(self.planes)

    @property
    def normal_dim(self) -> int:
        return self.n - self.k

    def _rel(self, x: np.ndarray, s: int) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.planes[s]
        c = self.centers[s]
        return x[..., i] - c[0], x[..., j] - c[1]

    def planar_radii(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([np.hypot(*self._rel(x, s)) for s in range(self.k)], axis=-1)

    def core_distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d2 = np.sum((self.planar_radii(x) - np.asarray(self.radii)) ** 2, axis=-1)
        for f, v in self.fixed:
            d2 = d2 + (x[..., f] - v) ** 2
        return np.sqrt(d2)

    def core_distance_grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = self.core_distance(x)
        g = np.zeros(x.shape)
        for s, (i, j) in enumerate(self.planes):
            a, b = self._rel(x, s)
            rho = np.hypot(a, b)
            f = (rho - self.radii[s]) / np.where(rho > 0, rho, 1.0)
            g[..., i] = f * a
            g[..., j] = f * b
        for f, v in self.fixed:
            g[..., f] = x[..., f] - v
        return g / np.where(d > 0, d, 1.0)[..., None]

    def rotation_field(self, x, s: int) -> np.ndarray:
        """sign_s * K_s(x), the unit-speed rotation of plane s."""
        x = np.asarray(x, dtype=float)
        i, j = self.planes[s]
        a, b = self._rel(x, s)
        out = np.zeros(x.shape)
        out[..., i] = -self.signs[s] * b
        out[..., j] = self.signs[s] * a
        return out

    def rotate(self, x, s: int, angle) -> np.ndarray:
        x = np.array(x, dtype=float)
        i, j = self.planes[s]
        c = self.centers[s]
        a, b = self._rel(x, s)
        ang = self.signs[s] * np.asarray(angle, dtype=float)
        ca, sa = np.cos(ang), np.sin(ang)
        x[..., i] = c[0] + ca * a - sa * b
        x[..., j] = c[1] + sa * a + ca * b
        return x

    def base_point(self) -> np.ndarray:
        p = np.zeros(self.n)
        for s, (i, j) in enumerate(self.planes):
            p[i] = self.centers[s][0] + self.radii[s]
            p[j] = self.centers[s][1]
        for f, v in self.fixed:
            p[f] = v
        return p

    def map(self, theta) -> np.ndarray:
        """Core point at angles theta (..., k), applying the last rotation first."""
        theta = np.asarray(theta, dtype=float)
        x = np.broadcast_to(self.base_point(), theta.shape[:-1] + (self.n,)).copy()
        for s in reversed(range(self.k)):
            x = self.rotate(x, s, theta[..., s])
        return x

    def core_patch(self, label: str = "core") -> ParamPatch:
        def frame(u):
            x = self.map(u)
            return x, np.stack([self.rotation_field(x, s) for s in range(self.k)], axis=-2)

        return ParamPatch(self.k, np.zeros(self.k), np.full(self.k, TWO_PI), frame, 1.0, label)

    def core(self, label: str = "core") -> SingularManifold:
        return SingularManifold((self.core_patch(label),), label)

    def core_samples(self, m: int = 48) -> np.ndarray:
        axes = [TWO_PI * np.arange(m) / m] * self.k
        theta = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.k)
        return self.map(theta)

    def extent(self, coord: int) -> tuple[float, float]:
        for s, p in enumerate(self.planes):
            if coord in p:
                c = self.centers[s][p.index(coord)]
                return c - self.radii[s], c + self.radii[s]
        v = dict(self.fixed)[coord]
        return v, v

    # rigid edits ------------------------------------------------------------

    def translated(self, coord: int, amount: float) -> "TorusEmbedding":
        centers = []
        for s, p in enumerate(self.planes):
            c = list(self.centers[s])
            if coord in p:
                c[p.index(coord)] += amount
            centers.append(tuple(c))
        fixed = tuple((f, v + amount if f == coord else v) for f, v in self.fixed)
        return replace(self, centers=tuple(centers), fixed=fixed)

    def affine(self, scale: float, shift) -> "TorusEmbedding":
        """Image under x -> scale * x + shift."""
        shift = np.asarray(shift, dtype=float)
        centers = tuple((float(scale * c[0] + shift[i]), float(scale * c[1] + shift[j]))
                        for c, (i, j) in zip(self.centers, self.planes))
        return replace(self, centers=centers, radii=tuple(scale * r for r in self.radii),
                       fixed=tuple((f, float(scale * v + shift[f])) for f, v in self.fixed))

    def with_extra_fixed(self) -> "TorusEmbedding":
        """Same torus inside R^{n+1}, new coordinate fixed at 0."""
        return replace(self, n=self.n + 1, fixed=self.fixed + ((self.n, 0.0),))

    def revolved(self, coord: int) -> "TorusEmbedding":
        """Revolve about {x_coord = x_new = 0}; ``coord`` must be fixed and positive."""
        fixed = dict(self.fixed)
        if coord not in fixed or fixed[coord] <= 0:
            raise ValueError("revolution needs a fixed coordinate with positive core value")
        v = fixed.pop(coord)
        return TorusEmbedding(self.n + 1, self.planes + ((coord, self.n),), self.centers + ((0.0, 0.0),),
                              self.radii + (v,), self.signs + (1,), tuple(sorted(fixed.items())))

    def flipped(self, s: int | None = None) -> "TorusEmbedding":
        s = self.k - 1 if s is None else s
        signs = list(self.signs)
        signs[s] = -signs[s]
        return replace(self, signs=tuple(signs))


class TorusTube:
    """The open tube {d(x) < radius} around a core torus; uniform sampling by rejection."""

    def __init__(self, emb: TorusEmbedding, radius: float):
        if radius >= min(emb.radii):
            raise ValueError("tube radius must stay below every planar radius")
        self.emb = emb
        self.radius = float(radius)

    @property
    def n(self) -> int:
        return self.emb.n

    @property
    def volume(self) -> float:
        return TWO_PI**self.emb.k * float(np.prod(self.emb.radii)) * ball_volume(self.emb.normal_dim, self.radius)

    def contains(self, x) -> np.ndarray:
        return self.emb.core_distance(x) < self.radius

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.empty(self.n)
        hi = np.empty(self.n)
        for c in range(self.n):
            a, b = self.emb.extent(c)
            lo[c], hi[c] = a - self.radius, b + self.radius
        return lo, hi

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        lo, hi = self.bounding_box()
        return 0.5 * (lo + hi), 0.5 * float(np.linalg.norm(hi - lo))

    def sample(self, rng: RNGStream, count: int) -> np.ndarray:
        e = self.emb
        m = e.normal_dim
        gen = rng.generator()
        R = np.asarray(e.radii)
        bound = float(np.prod(R + self.radius))
        out, have = [], 0
        while have < count:
            batch = int(1.5 * (count - have)) + 64
            u = gen.normal(size=(batch, m))
            u *= (self.radius * gen.random(batch) ** (1.0 / m) / np.linalg.norm(u, axis=-1))[:, None]
            rho = R + u[:, : e.k]
            keep = gen.random(batch) * bound < np.prod(rho, axis=-1)
            theta = TWO_PI * gen.random((batch, e.k))
            x = np.empty((batch, e.n))
            for s, (i, j) in enumerate(e.planes):
                x[:, i] = e.centers[s][0] + rho[:, s] * np.cos(theta[:, s])
                x[:, j] = e.centers[s][1] + rho[:, s] * np.sin(theta[:, s])
            for col, (f, v) in enumerate(e.fixed):
                x[:, f] = v + u[:, e.k + col]
            out.append(x[keep])
            have += int(keep.sum())
        return np.concatenate(out)[:count]


class RegionUnion:
    """Disjoint union of regions; sampling picks a part in proportion to its volume."""

    def __init__(self, parts):
        self.parts = tuple(parts)

    @property
    def n(self) -> int:
        return self.parts[0].n

    @property
    def volume(self) -> float:
        return sum(p.volume for p in self.parts)

    def contains(self, x) -> np.ndarray:
        return np.logical_or.reduce([p.contains(x) for p in self.parts])

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        boxes = [p.bounding_box() for p in self.parts]
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        return 0.5 * (lo + hi), 0.5 * float(np.linalg.norm(hi - lo))

    def sample(self, rng: RNGStream, count: int) -> np.ndarray:
        vols = np.array([p.volume for p in self.parts])
        counts = rng.spawn(0).generator().multinomial(count, vols / vols.sum())
        pts = [p.sample(rng.spawn(1, i), int(c)) for i, (p, c) in enumerate(zip(self.parts, counts)) if c]
        x = np.concatenate(pts)
        return x[rng.spawn(2).generator().permutation(len(x))]


def tube_generators(emb: TorusEmbedding, bump: BumpProfile, label: str = "") -> list[MultiVectorField]:
    """lambda(d) * sign_s K_s for each rotation plane, sharing one TorusTube support."""
    support = TorusTube(emb, bump.outer)
    n = emb.n
    gens = []
    for s in range(emb.k):
        i, j = emb.planes[s]
        sign = emb.signs[s]

        def func(x, s=s):
            return bump(emb.core_distance(x))[:, None] * emb.rotation_field(x, s)

        def jac(x, s=s, i=i, j=j, sign=sign):
            d = emb.core_distance(x)
            lam = bump(d)
            dlam = bump.derivative(d)
            K = emb.rotation_field(x, s)
            J = (dlam[:, None, None] * K[:, :, None]) * emb.core_distance_grad(x)[:, None, :]
            J[:, i, j] -= sign * lam
            J[:, j, i] += sign * lam
            return J

        def flow(x, t, s=s):
            return emb.rotate(x, s, bump(emb.core_distance(x)) * t)

        gens.append(MultiVectorField(n, 1, func, jac, support=support, flow=flow, label=f"{label}K{s + 1}"))
    return gens


def tube_flux(emb: TorusEmbedding, bump: BumpProfile) -> float:
    """Flux of the generator wedge through a transverse disk of the tube."""
    return float(np.prod(emb.radii)) * sphere_area(emb.normal_dim) * bump.moment(emb.k, emb.normal_dim - 1)


# ---------------------------------------------------------------------------
# linked pairs


def hopf_cores() -> tuple[TorusEmbedding, TorusEmbedding]:
    """Two unit circles in R^3, each through the other's center."""
    A = TorusEmbedding(3, ((1, 2),), ((0.0, 0.0),), (1.0,), (1,), ((0, 0.0),))
    B = TorusEmbedding(3, ((0, 1),), ((0.0, 1.0),), (1.0,), (1,), ((2, 0.0),))
    return A, B


def _shift_positive(A: TorusEmbedding, B: TorusEmbedding, coord: int, margin: float):
    lo = min(A.extent(coord)[0], B.extent(coord)[0])
    return A.translated(coord, margin - lo), B.translated(coord, margin - lo)


def linked_cores(k: int, l: int) -> tuple[TorusEmbedding, TorusEmbedding]:
    """Linked core tori of dimensions k and l in R^{k+l+1}, before scaling."""
    if k < 1 or l < 1:
        raise DimensionError("torus dimensions must be positive")
    if abs(k - l) > 1:
        raise DimensionError("product-torus construction needs |k - l| <= 1")
    A, B = hopf_cores()
    while A.k < k or B.k < l:
        grow_a = A.k < k and (A.k <= B.k or B.k == l)
        X, Y = (A, B) if grow_a else (B, A)
        coord = min(f for f, _ in X.fixed)
        X, Y = _shift_positive(X, Y, coord, 1.0)
        X, Y = X.revolved(coord), Y.with_extra_fixed()
        A, B = (X, Y) if grow_a else (Y, X)
    return A, B


def _core_gap(A: TorusEmbedding, B: TorusEmbedding, m: int) -> float:
    a, b = A.core_samples(m), B.core_samples(m)
    return float(np.min(cKDTree(b).query(a, k=1)[0]))


def _samples_per_axis(k: int) -> int:
    return {1: 2048, 2: 128, 3: 32}.get(k, 16)


def core_link(A: TorusEmbedding, B: TorusEmbedding, points: int | None = None) -> float:
    pts = points or {1: 64, 2: 24, 3: 10}.get(max(A.k, B.k), 8)
    return link(A.core("A"), B.core("B"), QuadratureConfig(points=pts, max_depth=2)).value


def find_apexes(cores, domain: Domain, count: int = 4, separation: float = 0.25, rng: RNGStream | None = None):
    """Interior points far from every core, mutually separated."""
    rng = rng or RNGStream(0, (99,))
    cand = 0.85 * domain.sample(rng, 6000)
    samples = np.concatenate([c.core_samples(_samples_per_axis(c.k)) for c in cores])
    dist = cKDTree(samples).query(cand, k=1)[0]
    order = np.argsort(-dist, kind="stable")
    chosen = []
    for idx in order:
        if all(np.linalg.norm(cand[idx] - c) >= separation for c in chosen):
            chosen.append(cand[idx])
            if len(chosen) == count:
                break
    return [np.asarray(c) for c in chosen]


@dataclass(frozen=True)
class Scenario:
    """A named configuration: domain, actions or a test manifold, and its targets."""

    name: str
    domain: Domain
    phi: Action
    psi: Action | None = None
    manifold: SingularManifold | None = None
    embeddings: tuple = ()
    bump: BumpProfile | None = None
    core_points: tuple = ()
    apexes: tuple = ()
    targets: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def n(self) -> int:
        return self.domain.n


def _place(A: TorusEmbedding, B: TorusEmbedding, rho: float | None):
    """Center the pair, scale it into the unit ball and choose the tube radius."""
    m = _samples_per_axis(max(A.k, B.k))
    pts = np.concatenate([A.core_samples(m), B.core_samples(m)])
    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    D = float(np.max(np.linalg.norm(pts - center, axis=-1))) * 1.001
    gap = _core_gap(A, B, m)
    if rho is None:
        rho = 0.98 * gap / (2.5 * D + gap)
    c = (0.98 - rho) / D
    if c * gap < 2.5 * rho:
        raise ValueError(f"tube radius {rho:g} too large: tubes would collide (core gap {c * gap:.3g})")
    A = A.affine(c, -c * center)
    B = B.affine(c, -c * center)
    if min(A.radii + B.radii) <= rho:
        raise ValueError("tube radius exceeds a planar radius")
    return A, B, rho, c * gap


@functools.lru_cache(maxsize=None)
def _pinned_pair(k: int, l: int, rho: float | None):
    """Placed core pair with the second torus oriented so the cores link +1."""
    A, B, rho, gap = _place(*linked_cores(k, l), rho)
    lk_core = core_link(A, B)
    if lk_core < 0:
        # reversing one rotation negates the linking integral exactly
        B = B.flipped()
        lk_core = -lk_core
    if abs(lk_core - 1.0) > 0.05:
        raise RuntimeError(f"core tori link {lk_core:.3f} times, expected once")
    return A, B, rho, gap, lk_core


def build_linked_tori(n: int, k: int, l: int, rho: float | None = None, scale: float = 1.0,
                      orientation: int = 1, name: str | None = None) -> Scenario:
    """Disjoint tubes T^k x D^{l+1} and T^l x D^{k+1} in the unit ball linking once.

    ``scale`` multiplies the generators of the first action (so the
    invariants scale by ``scale**k``); ``orientation = -1`` reverses one
    generator of the second action and negates every target.
    """
    if k + l + 1 != n:
        raise DimensionError(f"need k + l + 1 = n, got {k} + {l} + 1 != {n}")
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    A, B, rho, gap, lk_core = _pinned_pair(k, l, rho)
    if orientation == -1:
        B = B.flipped()
        lk_core = -lk_core
    bump = BumpProfile(rho / 3.0, 2.0 * rho / 3.0)
    domain = Domain.unit_ball(n)
    gens_a = tube_generators(A, bump, "A")
    if scale != 1.0:
        gens_a = [scale_field(g, scale) for g in gens_a]
    phi = Action(domain, gens_a, label="phi")
    psi = Action(domain, tube_generators(B, bump, "B"), label="psi")
    flux_a = tube_flux(A, bump) * scale**k
    flux_b = tube_flux(B, bump)
    apexes = find_apexes((A, B), domain)
    return Scenario(
        name=name or f"tori-n{n}-k{k}l{l}",
        domain=domain,
        phi=phi,
        psi=psi,
        embeddings=(A, B),
        bump=bump,
        core_points=(A.base_point(), B.base_point()),
        apexes=((apexes[0], apexes[1]), (apexes[2], apexes[3])),
        targets={
            "core_link": float(np.sign(lk_core)),
            "core_link_computed": lk_core,
            "normalized_core_link": float(np.sign(lk_core)) * TWO_PI ** (-(k + l)),
            "flux_phi": flux_a,
            "flux_psi": flux_b,
            "predicted_I": float(np.sign(lk_core)) * flux_a * flux_b,
        },
        params={"n": n, "k": k, "l": l, "rho": rho, "scale": scale, "orientation": orientation,
                "core_gap": gap, "tube_margin": gap - 4.0 * rho / 3.0},
        notes="generators are bump-scaled rigid rotations; predicted_I = core link * flux product",
    )


def build_action_vs_circle(n: int = 3, k: int = 1, far: bool = False, orientation: int = 1,
                           rho: float | None = None) -> Scenario:
    """Tube action around T^k and a round circle N linking its core once (or far away)."""
    if k != n - 2:
        raise DimensionError("the test manifold is a circle, so k must equal n - 2")
    base = build_linked_tori(n, k, 1, rho=rho, name=f"tube-circle-n{n}")
    A, B = base.embeddings
    if far:
        apex = base.apexes[0][0]
        dist = float(np.min(np.linalg.norm(A.core_samples(_samples_per_axis(A.k)) - apex, axis=-1)))
        r = 0.3 * (dist - base.bump.outer)
        e = np.eye(n)
        N = circle(apex, e[0], e[1], r, "N")
        lk_core = 0.0
    else:
        N = B.core("N")
        lk_core = base.targets["core_link"]
    if orientation == -1:
        N = N.flipped()
        lk_core = -lk_core
    flux = base.targets["flux_phi"]
    return replace(
        base,
        name=f"tube-circle-n{n}" + ("-far" if far else ""),
        psi=None,
        manifold=N,
        targets={"core_link": lk_core, "flux_phi": flux, "predicted_I": lk_core * flux},
        params={**base.params, "far": far, "orientation": orientation},
        notes="predicted_I = core link * flux of the tube action",
    )


def combined_action(s: Scenario) -> Action:
    """The single action whose generators are X_A^i + X_B^i (supports are disjoint)."""
    if s.psi is None or s.phi.k != s.psi.k:
        raise DimensionError("combining needs two actions of equal rank")
    region = RegionUnion((s.phi.support, s.psi.support))
    gens = []
    for ga, gb in zip(s.phi.generators, s.psi.generators):
        in_a = ga.support.contains

        def func(x, ga=ga, gb=gb):
            return ga(x) + gb(x)

        def jac(x, ga=ga, gb=gb):
            return ga.jacobian(x) + gb.jacobian(x)

        def flow(x, t, ga=ga, gb=gb, in_a=in_a):
            mask = in_a(x)
            return np.where(mask[:, None], ga.flow(x, t), gb.flow(x, t))

        gens.append(MultiVectorField(s.n, 1, func, jac, support=region, flow=flow, label="A+B"))
    return Action(s.domain, gens, label="combined")


SCENARIOS = {
    "arnold-n3": lambda: build_linked_tori(3, 1, 1, name="arnold-n3"),
    "tori-n4-k2l1": lambda: build_linked_tori(4, 2, 1, name="tori-n4-k2l1"),
    "tori-n5-k2l2": lambda: build_linked_tori(5, 2, 2, name="tori-n5-k2l2"),
    "tube-circle-n3": lambda: build_action_vs_circle(3, 1),
}

SCENARIO_DIMS = {
    "arnold-n3": (3, 1, 1),
    "tori-n4-k2l1": (4, 2, 1),
    "tori-n5-k2l2": (5, 2, 2),
    "tube-circle-n3": (3, 1, 1),
}


def list_scenarios() -> dict:
    """Registry: name -> {n, k, l, kind}."""
    return {
        name: {"n": n, "k": k, "l": l, "kind": "action-manifold" if name.startswith("tube-circle") else "two-actions"}
        for name, (n, k, l) in SCENARIO_DIMS.items()
    }


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def bs_fixture(s: Scenario, count: int, rng: RNGStream, h: float = 1e-3):
    """(field, domain, test points) for checking rot BS(X) = X on a scenario.

    The field is the wedge X of the first action; the points are drawn from
    its support (where X is non-trivial) and kept 10 h inside the domain.
    """
    X = MultiVectorField(s.n, s.phi.k, s.phi.wedge, support=s.phi.support, label="X")
    pts = []
    attempt = 0
    while sum(len(p) for p in pts) < count:
        x = s.phi.support.sample(rng.spawn(attempt), 4 * count)
        pts.append(x[s.domain.signed_distance(x) < -10.0 * h])
        attempt += 1
    return X, s.domain, np.concatenate(pts)[:count]
