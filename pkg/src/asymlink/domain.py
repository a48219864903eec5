"""Compact convex domains, seeded sampling, sphere quadrature and the constant Gamma."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from .errors import DegenerateDomainError, DimensionError

MIN_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class RNGStream:
    """Reproducible random stream keyed by ``(seed, stream)``.

    ``stream`` is a tuple of non-negative integers so that sub-streams can be
    derived hierarchically with :meth:`spawn` without coordination between
    workers.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if isinstance(self.stream, int):
            object.__setattr__(self, "stream", (self.stream,))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def spawn(self, *key: int) -> "RNGStream":
        return RNGStream(self.seed, self.stream + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(ss))


def sphere_area(n: int) -> float:
    """(n-1)-volume of the unit sphere in R^n."""
    if n < 2:
        raise DimensionError("sphere_area needs n >= 2")
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(n: int, radius: float = 1.0) -> float:
    return sphere_area(n) / n * radius**n if n >= 2 else 2.0 * radius


@dataclass(frozen=True)
class Domain:
    """A ball, an ellipsoid, or an axis box (the box is for sampling only).

    ``size`` holds the radius (ball), the semi-axes (ellipsoid) or the upper
    corner (box, with ``center`` holding the lower corner).
    """

    kind: str
    center: np.ndarray
    size: np.ndarray = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).copy()
        s = np.asarray(self.size, dtype=float).copy()
        if self.kind == "ball":
            s = s.reshape(()) * np.ones(1)
        elif self.kind == "ellipsoid":
            s = np.broadcast_to(s, c.shape).copy()
        elif self.kind == "box":
            s = np.broadcast_to(s, c.shape).copy()
            if np.any(s <= c):
                raise DegenerateDomainError("box needs hi > lo on every axis")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind != "box" and np.any(s <= 0):
            raise DegenerateDomainError("radius / semi-axes must be positive")
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)

    # constructors
    @classmethod
    def ball(cls, n: int, radius: float = 1.0, center=None) -> "Domain":
        return cls("ball", np.zeros(n) if center is None else center, radius)

    @classmethod
    def unit_ball(cls, n: int) -> "Domain":
        return cls.ball(n)

    @classmethod
    def ellipsoid(cls, semi_axes, center=None) -> "Domain":
        a = np.asarray(semi_axes, dtype=float)
        return cls("ellipsoid", np.zeros(len(a)) if center is None else center, a)

    @classmethod
    def box(cls, lo, hi) -> "Domain":
        return cls("box", lo, hi)

    @classmethod
    def from_config(cls, cfg: dict) -> "Domain":
        kind = cfg.get("kind", "unit-ball")
        if kind == "unit-ball":
            return cls.unit_ball(int(cfg["n"]))
        if kind == "ball":
            return cls.ball(len(cfg["center"]), cfg["radius"], cfg["center"])
        if kind == "ellipsoid":
            return cls.ellipsoid(cfg["semi_axes"], cfg.get("center"))
        if kind == "box":
            return cls.box(cfg["lo"], cfg["hi"])
        raise ValueError(f"unknown domain kind {kind!r}")

    # geometry
    @property
    def n(self) -> int:
        return self.center.shape[0]

    @property
    def semi_axes(self) -> np.ndarray:
        if self.kind == "ball":
            return np.full(self.n, self.size[0])
        if self.kind == "ellipsoid":
            return self.size
        raise ValueError("box has no semi-axes")

    @property
    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(self.size - self.center))
        return ball_volume(self.n) * float(np.prod(self.semi_axes))

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "box":
            return self.center.copy(), self.size.copy()
        a = self.semi_axes
        return self.center - a, self.center + a

    @property
    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(self.size - self.center))
        return 2.0 * float(np.max(self.semi_axes))

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        """Center and radius of a ball containing the domain."""
        if self.kind == "box":
            return 0.5 * (self.center + self.size), 0.5 * self.diameter
        return self.center.copy(), float(np.max(self.semi_axes))

    def _level(self, x):
        """Level function F (negative inside) and its gradient for ball/ellipsoid."""
        y = (x - self.center) / self.semi_axes
        F = np.sum(y * y, axis=-1) - 1.0
        grad = 2.0 * y / self.semi_axes
        return F, grad

    def signed_distance(self, x) -> np.ndarray:
        """Signed distance, negative inside.

        Exact for balls and boxes.  For ellipsoids this is F/|grad F| with
        F = |A^{-1}(x - c)|^2 - 1, which has the right zero set and sign and
        agrees with the true distance to first order at the boundary.
        """
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return np.linalg.norm(x - self.center, axis=-1) - self.size[0]
        if self.kind == "box":
            q = np.abs(x - 0.5 * (self.center + self.size)) - 0.5 * (self.size - self.center)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            inside = np.minimum(np.max(q, axis=-1), 0.0)
            return outside + inside
        F, grad = self._level(x)
        return F / np.maximum(np.linalg.norm(grad, axis=-1), 1e-300)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return np.all((x >= self.center) & (x <= self.size), axis=-1)
        if self.kind == "ball":
            d = x - self.center
            return np.einsum("...i,...i->...", d, d) <= self.size[0] ** 2
        return self._level(x)[0] <= 0.0

    def boundary_normal(self, x) -> np.ndarray:
        """Outward unit normal at (or near) boundary points."""
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            d = x - self.center
            return d / np.linalg.norm(d, axis=-1, keepdims=True)
        if self.kind == "ellipsoid":
            g = self._level(x)[1]
            return g / np.linalg.norm(g, axis=-1, keepdims=True)
        mid = 0.5 * (self.center + self.size)
        half = 0.5 * (self.size - self.center)
        q = (x - mid) / half
        axis = np.argmax(np.abs(q), axis=-1)
        out = np.zeros_like(x)
        np.put_along_axis(out, axis[..., None], np.sign(np.take_along_axis(q, axis[..., None], -1)), -1)
        return out

    def project(self, x) -> np.ndarray:
        """Map points outside the domain back onto its boundary; inside points unchanged."""
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return np.clip(x, self.center, self.size)
        y = (x - self.center) / self.semi_axes
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        scale = np.where(r > 1.0, 1.0 / np.maximum(r, 1e-300), 1.0)
        return self.center + y * scale * self.semi_axes

    def ray_exit(self, q, u) -> np.ndarray:
        """Distance from interior points q along unit directions u to the boundary.

        ``q`` (..., n) and ``u`` (..., n) broadcast.
        """
        q = np.asarray(q, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.kind == "box":
            with np.errstate(divide="ignore", invalid="ignore"):
                t_hi = np.where(u > 0, (self.size - q) / u, np.inf)
                t_lo = np.where(u < 0, (self.center - q) / u, np.inf)
            return np.maximum(np.min(np.minimum(t_hi, t_lo), axis=-1), 0.0)
        a = self.semi_axes
        y = (q - self.center) / a
        v = u / a
        A = np.sum(v * v, axis=-1)
        B = np.sum(y * v, axis=-1)
        C = np.sum(y * y, axis=-1) - 1.0
        disc = np.maximum(B * B - A * C, 0.0)
        return np.maximum((-B + np.sqrt(disc)) / A, 0.0)

    def sample(self, rng: RNGStream, count: int) -> np.ndarray:
        return sample_uniform(self, rng, count)


def sample_uniform(d: Domain, rng: RNGStream, count: int) -> np.ndarray:
    """``count`` i.i.d. uniform points of ``d`` by rejection from its bounding box."""
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = rng.generator()
    lo, hi = d.bounding_box
    accept = d.volume / float(np.prod(hi - lo))
    out = []
    have = 0
    first = True
    while have < count:
        batch = max(4096, int(1.3 * (count - have) / max(accept, MIN_ACCEPTANCE)) + 16)
        x = lo + (hi - lo) * gen.random((batch, d.n))
        keep = x[d.contains(x)]
        if first:
            if len(keep) < MIN_ACCEPTANCE * batch:
                raise DegenerateDomainError(
                    f"rejection acceptance {len(keep) / batch:.2e} below {MIN_ACCEPTANCE}"
                )
            first = False
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:count]


# ---------------------------------------------------------------------------
# quadrature on spheres and balls


@functools.lru_cache(maxsize=None)
def sphere_rule(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Product Gauss rule on the unit sphere S^{n-1} in R^n.

    Polar angles use Gauss-Jacobi nodes in cos(angle); the last angle uses
    ``2m`` equispaced nodes.  Exact for polynomials of degree < 2m restricted
    to the sphere.  Weights sum to ``sphere_area(n)``.
    """
    if n < 2:
        raise DimensionError("sphere rule needs n >= 2")
    if n == 2:
        phi = np.pi * np.arange(2 * m) / m
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        w = np.full(2 * m, np.pi / m)
        return _frozen(nodes), _frozen(w)
    t, wt = roots_jacobi(m, (n - 3) / 2, (n - 3) / 2)
    sub, wsub = sphere_rule(n - 1, m)
    s = np.sqrt(1.0 - t * t)
    nodes = np.concatenate(
        [np.repeat(t, len(sub))[:, None], (s[:, None, None] * sub[None]).reshape(-1, n - 1)], axis=1
    )
    w = (wt[:, None] * wsub[None]).ravel()
    return _frozen(nodes), _frozen(w)


@functools.lru_cache(maxsize=None)
def ball_rule(n: int, m_radial: int, m_angular: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule on the unit ball: radial Gauss-Jacobi (weight r^{n-1}) times sphere_rule."""
    s, ws = roots_jacobi(m_radial, 0.0, n - 1.0)
    r = 0.5 * (1.0 + s)
    wr = ws / 2.0**n
    u, wu = sphere_rule(n, m_angular)
    nodes = (r[:, None, None] * u[None]).reshape(-1, n)
    w = (wr[:, None] * wu[None]).ravel()
    return _frozen(nodes), _frozen(w)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def boundary_rule(d: Domain, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes, weights and outward normals for integrating over the boundary of a ball."""
    if d.kind != "ball":
        raise ValueError("boundary quadrature is implemented for balls only")
    u, w = sphere_rule(d.n, m)
    R = d.size[0]
    return d.center + R * u, w * R ** (d.n - 1), u.copy()


def volume_rule(d: Domain, m_radial: int, m_angular: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integrating over a ball."""
    if d.kind != "ball":
        raise ValueError("volume quadrature is implemented for balls only")
    x, w = ball_rule(d.n, m_radial, m_angular)
    R = d.size[0]
    return d.center + R * x, w * R**d.n


# ---------------------------------------------------------------------------
# the constant Gamma


@dataclass(frozen=True)
class GammaConfig:
    grid: int = 9
    angular: int | None = None
    chunk: int = 2_000_000


def _default_angular(n: int) -> int:
    return {2: 64, 3: 24, 4: 16, 5: 10}.get(n, 6)


def potential_integral(d: Domain, q, m: int) -> np.ndarray:
    """int_Omega |p - q|^{1-n} dp for points q in the closed domain.

    In polar coordinates about q the radial factor cancels the kernel, so the
    integral equals the integral over directions of the ray length to the
    boundary.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    u, w = sphere_rule(d.n, m)
    out = np.empty(len(q))
    step = max(1, 2_000_000 // len(u))
    for i in range(0, len(q), step):
        R = d.ray_exit(q[i : i + step, None, :], u[None, :, :])
        out[i : i + step] = R @ w
    return out


def gamma_bound(d: Domain, quad: GammaConfig | None = None) -> float:
    """Upper bound for sup_q int_Omega |p - q|^{1-n} dp.

    The integrand is maximized over a grid (``quad.grid`` points on each of
    the first min(n, 4) axes, remaining coordinates at the center) plus the
    center.  The quadrature margin is the largest difference between the
    angular rule and one at half the resolution.  For centrally symmetric
    convex bodies the function is concave and even about the center, so the
    maximum sits at the center, which is always a grid point.
    """
    quad = quad or GammaConfig()
    n = d.n
    m = quad.angular or _default_angular(n)
    lo, hi = d.bounding_box
    dims = min(n, 4)
    axes = [np.linspace(lo[i], hi[i], quad.grid) for i in range(dims)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dims)
    center = d.bounding_sphere()[0]
    pts = np.tile(center, (len(mesh), 1))
    pts[:, :dims] = mesh
    pts = np.vstack([center[None], pts[d.contains(pts)]])
    fine = potential_integral(d, pts, m)
    coarse = potential_integral(d, pts, max(2, m // 2))
    bound = fine + np.abs(fine - coarse)
    return float(np.max(bound)) * (1.0 + 1e-12)
