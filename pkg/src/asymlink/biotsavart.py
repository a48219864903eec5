"""Generalized Biot-Savart operator

    BS(V)(x) = (-1)^k / a_n  int_Omega  (x - y)/|x - y|^n  x  V(y) dy

for a k-vector field V, and the check rot BS(V) = V.

The default estimators write y = x - r*theta with theta on the unit sphere
and r in [eps, R]; the Jacobian r^{n-1} cancels the kernel so every sample
is bounded.  ``"sobol"`` draws (theta, r) from scrambled Sobol points,
``"polar"`` from plain pseudo-random numbers.  ``"uniform"`` samples y
uniformly in the field's support (or in Omega) and drops samples within eps
of x.  All points passed in one call share the same random numbers, which
is what makes finite differences of the estimator usable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri, roots_legendre
from scipy.stats import qmc

from . import multivector as mv
from .calculus import DEFAULT_FD, FDConfig, MultiVectorField, rot_field
from .domain import Domain, RNGStream, sphere_area, sphere_rule
from .errors import DimensionError
from .multivector import MultiVector


@dataclass(frozen=True)
class BSConfig:
    """``sampling`` is ``"sobol"`` (scrambled Sobol points in the polar
    parametrization; error bar from ``replicates`` independent scramblings,
    sample count rounded up to a power of two per replicate), ``"polar"``
    (plain Monte Carlo in the same parametrization) or ``"uniform"``."""

    samples: int = 100_000
    eps: float | None = None
    rng: RNGStream = field(default_factory=lambda: RNGStream(0))
    sampling: str = "sobol"
    replicates: int = 8
    chunk: int = 1 << 16

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("need at least one sample")
        if self.eps is not None and self.eps < 0:
            raise ValueError("exclusion radius must be non-negative")
        if self.sampling not in ("sobol", "polar", "uniform"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.replicates < 2:
            raise ValueError("need at least two replicates for an error bar")


def _unit_to_polar(u: np.ndarray, n: int, eps: float, R: float) -> tuple[np.ndarray, np.ndarray]:
    theta = ndtri(np.clip(u[:, :n], 1e-16, 1.0 - 1e-16))
    theta /= np.linalg.norm(theta, axis=-1, keepdims=True)
    return theta, eps + (R - eps) * u[:, n]


def _reach(V: MultiVectorField, d: Domain, x: np.ndarray) -> float:
    """Radius R with supp(V) inside B(x_i, R) for every row x_i."""
    if V.support is not None and hasattr(V.support, "bounding_sphere"):
        c, r = V.support.bounding_sphere()
    else:
        c, r = d.bounding_sphere()
    return float(np.max(np.linalg.norm(x - c, axis=-1)) + r) * (1.0 + 1e-12)


def _polar_terms(V, d, x, theta, r, scale):
    y = x[:, None, :] - r[None, :, None] * theta[None]
    vals = V(y) * d.contains(y)[..., None]
    return scale * mv.cross_c(theta[None], 1, vals, V.grade, V.n)


def _chunks(total: int, size: int):
    for s in range(0, total, size):
        yield s, min(total, s + size)


def _batches(V: MultiVectorField, d: Domain, x: np.ndarray, cfg: BSConfig):
    """Yield (replicate, weighted sample terms (N, chunk, C_l)).

    For ``"sobol"`` the replicate is the scrambling index; otherwise it is
    always 0 and every sample counts as an independent replicate.
    """
    n, k = V.n, V.grade
    eps = 1e-3 * d.diameter if cfg.eps is None else cfg.eps
    sign = (-1.0) ** k
    if cfg.sampling in ("sobol", "polar"):
        R = _reach(V, d, x)
        if R <= eps:
            raise ValueError("exclusion radius exceeds the integration reach")
        if cfg.sampling == "sobol":
            m = max(0, math.ceil(math.log2(cfg.samples / cfg.replicates)))
            for b in range(cfg.replicates):
                seed = cfg.rng.spawn(b).generator()
                u = qmc.Sobol(n + 1, scramble=True, seed=seed).random_base2(m)
                for lo, hi in _chunks(len(u), cfg.chunk):
                    theta, r = _unit_to_polar(u[lo:hi], n, eps, R)
                    yield b, _polar_terms(V, d, x, theta, r, sign * (R - eps))
        else:
            gen = cfg.rng.generator()
            for lo, hi in _chunks(cfg.samples, cfg.chunk):
                theta, r = _unit_to_polar(gen.random((hi - lo, n + 1)), n, eps, R)
                yield 0, _polar_terms(V, d, x, theta, r, sign * (R - eps))
    else:
        region = V.support if V.support is not None else d
        w = sign * region.volume / sphere_area(n)
        for stream, (lo, hi) in enumerate(_chunks(cfg.samples, cfg.chunk)):
            y = region.sample(cfg.rng.spawn(stream), hi - lo)
            vals = V(y) * d.contains(y)[:, None]
            u = x[:, None, :] - y[None]
            r = np.linalg.norm(u, axis=-1)
            keep = r > eps
            kern = np.where(keep, 1.0 / np.where(keep, r, 1.0) ** n, 0.0)
            yield 0, w * mv.cross_c(u * kern[..., None], 1, vals[None], k, n)


def bs_estimate(V: MultiVectorField, d: Domain, x, cfg: BSConfig) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of BS(V) at the rows of x (common random numbers)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != V.n or d.n != V.n:
        raise DimensionError("field, domain and points must share the dimension")
    if V.grade > V.n - 1:
        raise DimensionError("Biot-Savart needs grade k <= n - 1")
    if np.any(d.signed_distance(x) >= 0.0):
        raise ValueError("Biot-Savart points must lie in the interior of the domain")
    C = mv.dim(V.n, V.n - V.grade - 1)
    B = cfg.replicates if cfg.sampling == "sobol" else 1
    s1 = np.zeros((B, len(x), C))
    s2 = np.zeros((len(x), C))
    count = np.zeros(B)
    for b, terms in _batches(V, d, x, cfg):
        s1[b] += terms.sum(axis=1)
        s2 += (terms * terms).sum(axis=1)
        count[b] += terms.shape[1]
    if B > 1:
        means = s1 / count[:, None, None]
        return means.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(B)
    M = count[0]
    mean = s1[0] / M
    var = np.maximum(s2 / M - mean * mean, 0.0)
    return mean, np.sqrt(var / max(M - 1, 1))


def bs(V: MultiVectorField, d: Domain, x, cfg: BSConfig | None = None) -> MultiVector:
    """Biot-Savart field of V at a single interior point."""
    cfg = cfg or BSConfig()
    mean, _ = bs_estimate(V, d, np.asarray(x, dtype=float)[None], cfg)
    return MultiVector.from_array(V.n, V.n - V.grade - 1, mean[0])


def bs_field(V: MultiVectorField, d: Domain, cfg: BSConfig) -> MultiVectorField:
    """BS(V) as a field; every call reuses the same random numbers."""
    l = V.n - V.grade - 1
    return MultiVectorField(V.n, l, lambda x: bs_estimate(V, d, x, cfg)[0], label="BS")


def bs_quadrature(V: MultiVectorField, d: Domain, x, m_radial: int = 48, m_angular: int = 24) -> np.ndarray:
    """Deterministic reference: Gauss-Legendre in r times a sphere rule, rows of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, k = V.n, V.grade
    R = _reach(V, d, x)
    s, ws = roots_legendre(m_radial)
    r = 0.5 * R * (s + 1.0)
    wr = 0.5 * R * ws
    theta, wt = sphere_rule(n, m_angular)
    out = np.zeros((len(x), mv.dim(n, n - k - 1)))
    for i in range(m_radial):
        y = x[:, None, :] - r[i] * theta[None]
        vals = V(y) * d.contains(y)[..., None]
        out += wr[i] * np.einsum("m,nmc->nc", wt, mv.cross_c(theta[None], 1, vals, k, n))
    return (-1.0) ** k / sphere_area(n) * out


def verify_rot_bs_report(V: MultiVectorField, d: Domain, test_points, cfg: BSConfig,
                         fd: FDConfig = DEFAULT_FD, floor: float | None = None) -> dict:
    """rot of the Biot-Savart estimator (finite differences, common random numbers) against V."""
    pts = np.atleast_2d(np.asarray(test_points, dtype=float))
    if np.any(d.signed_distance(pts) > -10.0 * fd.h):
        raise ValueError("test points must stay 10 h inside the domain")
    target = V(pts)
    norms = np.linalg.norm(target, axis=-1)
    if floor is None:
        floor = max(0.1 * float(np.max(norms)), 1e-12)
    R = rot_field(bs_field(V, d, cfg), fd)
    rot = np.concatenate([R(p[None]) for p in pts])
    resid = np.linalg.norm(rot - target, axis=-1) / np.maximum(norms, floor)
    return {"max_relative_residual": float(np.max(resid)), "residuals": resid, "rot_bs": rot, "field": target,
            "floor": floor}


def verify_rot_bs(V: MultiVectorField, d: Domain, test_points, cfg: BSConfig,
                  fd: FDConfig = DEFAULT_FD, floor: float | None = None) -> float:
    return verify_rot_bs_report(V, d, test_points, cfg, fd, floor)["max_relative_residual"]
