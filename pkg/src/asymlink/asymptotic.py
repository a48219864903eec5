"""Asymptotic linking of conservative actions and the matching integral invariants.

Two routes compute the same number.  The dynamical route samples pairs
(p, q) and averages the pair kernel

    f(p, q) = (-1)^k / a_n * *((q - p) ^ X(p) ^ Y(q)) / |q - p|^n

over growing orbit rectangles of the product action (t, s) -> (Phi_t p,
Psi_s q).  Because both actions preserve volume, the orbit average of f has
the same expectation as f itself for any rectangle, so every row of the
convergence table is an unbiased estimate; longer orbits only lower the
variance.  The integral route estimates int int f directly, or as
int <BS(X), Y> with the Biot-Savart field of X.

A finite-time geometric cross-check closes each orbit rectangle with cones
to an apex and computes actual linking numbers (``lk_TS``).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import multivector as mv
from .biotsavart import BSConfig, bs_estimate
from .calculus import MultiVectorField
from .domain import RNGStream, sphere_area
from .errors import DimensionError, NearCollisionError
from .flows import Action, Rectangle, closed_orbit_manifold, flow
from .linking import (QuadratureConfig, SingularManifold, kernel_rows, link, manifold_nodes, max_cell,
                      point_distance)
from .stats import Estimate, agree, combined_sigma

__all__ = [
    "Estimate", "ErgodicSchedule", "MCConfig", "AsymptoticResult", "kernel_f", "kernel_f_batch",
    "I_two_actions", "lk_TS", "ergodic_mean", "asymptotic_lk", "theta_estimate", "kernel_g",
    "lk_action_manifold", "I_action_manifold", "energy", "energy_bound_check",
]

MAX_RESAMPLE_FRACTION = 0.01
_PAIR_BUDGET = 4_000_000  # floats held per batch of orbit pairs


@dataclass(frozen=True)
class ErgodicSchedule:
    """Cubes [0, j * tau]^k for j = 1..steps, sampled with ``nodes`` midpoints per tau per axis.

    The sub-grids are nested, so one orbit evaluation on the largest cube
    serves the whole schedule.
    """

    steps: int = 4
    tau: float = 2.0 * math.pi
    nodes: int = 8

    def __post_init__(self):
        if self.steps < 1 or self.nodes < 1 or not self.tau > 0:
            raise ValueError("schedule needs steps >= 1, nodes >= 1 and tau > 0")

    @property
    def sides(self) -> list[float]:
        return [j * self.tau for j in range(1, self.steps + 1)]

    def rectangle(self, j: int, k: int) -> Rectangle:
        return Rectangle.cube(k, j * self.tau)

    def axis(self) -> np.ndarray:
        m = self.steps * self.nodes
        return self.tau / self.nodes * (np.arange(m) + 0.5)

    def grid(self, k: int) -> np.ndarray:
        """Midpoint nodes of the largest cube, shape (M^k, k), axis 0 slowest."""
        if k == 0:
            return np.zeros((1, 0))
        axes = [self.axis()] * k
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)

    def block_means(self, values: np.ndarray, dims: int) -> np.ndarray:
        """Means of ``values (..., M^dims)`` over each nested cube, shape (..., steps)."""
        m = self.steps * self.nodes
        v = values.reshape(values.shape[:-1] + (m,) * dims)
        lead = (slice(None),) * (values.ndim - 1)
        axes = tuple(range(values.ndim - 1, values.ndim - 1 + dims))
        return np.stack([v[lead + (slice(j * self.nodes),) * dims].mean(axis=axes)
                         for j in range(1, self.steps + 1)], axis=-1)


@dataclass(frozen=True)
class MCConfig:
    """Sampling budget shared by the integral estimators.

    ``samples`` outer points (or pairs); the Biot-Savart routes split them
    into ``replicates`` independent groups, each with its own ``inner``
    samples for the Biot-Savart integral.  ``bs_sampling="auto"`` samples
    the source uniformly in its support when no evaluation point lies in
    that support (the kernel is then bounded) and uses the polar Sobol
    estimator otherwise.
    """

    samples: int = 20_000
    inner: int = 4096
    replicates: int = 16
    rng: RNGStream = field(default_factory=lambda: RNGStream(0))
    delta_near: float | None = None
    chunk: int = 1024
    workers: int = 1
    bs_sampling: str = "auto"

    def __post_init__(self):
        if self.samples < 2 or self.inner < 1 or self.replicates < 2 or self.chunk < 1 or self.workers < 1:
            raise ValueError("invalid Monte-Carlo budget")
        if self.bs_sampling not in ("auto", "sobol", "polar", "uniform"):
            raise ValueError(f"unknown Biot-Savart sampling {self.bs_sampling!r}")


@dataclass(frozen=True)
class AsymptoticResult:
    """Estimate at the largest schedule cube plus the per-cube convergence table."""

    estimate: Estimate
    table: tuple
    resampled: int
    sides: tuple

    def rows(self) -> list[dict]:
        return [{"schedule_index": j + 1, "T_sides": self.sides[j], "estimate": e.value, "std_error": e.std_error}
                for j, e in enumerate(self.table)]


def _delta(a: Action, delta_near: float | None) -> float:
    return 1e-3 * a.domain.diameter if delta_near is None else delta_near


def _region(a: Action):
    return a.support if a.support is not None else a.domain


def _map_chunks(fn, count: int, chunk: int, workers: int) -> list:
    """Apply fn(index, size) to consecutive chunks; order (and results) independent of workers."""
    jobs = [(i, min(chunk, count - i * chunk)) for i in range(math.ceil(count / chunk))]
    if workers <= 1:
        return [fn(i, c) for i, c in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda job: fn(*job), jobs))


def _check_dims(phi: Action, psi_k: int):
    if phi.k + psi_k != phi.n - 1:
        raise DimensionError(f"need k + l = n - 1, got {phi.k} + {psi_k} with n = {phi.n}")


# ---------------------------------------------------------------------------
# kernels


def kernel_f_batch(phi: Action, psi: Action, p, q) -> tuple[np.ndarray, np.ndarray]:
    """f(p_i, q_i) for paired rows, and |q_i - p_i|."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    _check_dims(phi, psi.k)
    u = q - p
    r = np.linalg.norm(u, axis=-1)
    trip = mv.triple_c(u, phi.wedge(p), phi.k, psi.wedge(q), psi.k)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (-1) ** phi.k * trip / (sphere_area(phi.n) * r**phi.n)
    return np.where(r > 0, f, 0.0), r


def kernel_f(phi: Action, psi: Action, p, q, delta_near: float | None = None) -> float:
    f, r = kernel_f_batch(phi, psi, p, q)
    if r[0] < _delta(phi, delta_near):
        raise NearCollisionError(f"|q - p| = {r[0]:.2e} below the near-collision cutoff")
    return float(f[0])


def kernel_g(phi: Action, N: SingularManifold, p, quad: QuadratureConfig | None = None,
             delta_near: float | None = None) -> float:
    """(-1)^k / a_n  int_N *((y - p) ^ X(p) ^ U(y)) / |y - p|^n."""
    return float(_g_values(phi, N, np.atleast_2d(p), quad, delta_near)[0])


def _g_values(phi: Action, N: SingularManifold, P: np.ndarray, quad: QuadratureConfig | None,
              delta_near: float | None, nodes=None) -> np.ndarray:
    _check_dims(phi, N.dim)
    y, w = nodes if nodes is not None else manifold_nodes(N, quad)
    delta = _delta(phi, delta_near)
    dist = cKDTree(y).query(P, k=1)[0]
    close = dist < delta + max_cell(N, quad)
    if np.any(close):
        dist[close] = point_distance(N, P[close], quad)
    if np.any(dist < delta):
        raise NearCollisionError("point within the near-collision cutoff of the manifold")
    return kernel_rows(P, phi.wedge(P), phi.k, y, w, N.dim)


# ---------------------------------------------------------------------------
# ergodic means


def ergodic_mean(h, phi: Action, p, schedule: ErgodicSchedule) -> np.ndarray:
    """(1/|T_j|) int_{T_j} h(Phi_t p) dt for each schedule cube (midpoint rule)."""
    t = schedule.grid(phi.k)
    x = flow(phi, t, np.broadcast_to(np.asarray(p, dtype=float), (len(t), phi.n)))
    vals = np.asarray(h(x), dtype=float).reshape(len(t))
    return schedule.block_means(vals, phi.k)


def _orbit_grid(a: Action, points: np.ndarray, schedule: ErgodicSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Orbit nodes (B, M, n) and generator wedges (B, M, C_k) from each start point."""
    t = schedule.grid(a.k)
    B, M = len(points), len(t)
    x = flow(a, np.tile(t, (B, 1)), np.repeat(points, M, axis=0))
    return x.reshape(B, M, a.n), a.wedge(x).reshape(B, M, -1)


def _pair_means(phi: Action, psi: Action, P: np.ndarray, Q: np.ndarray, schedule: ErgodicSchedule,
                delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Orbit-averaged f for each pair: (B, steps) means and a (B,) near-collision flag."""
    n, k, l = phi.n, phi.k, psi.k
    xp, X = _orbit_grid(phi, P, schedule)
    xq, Y = _orbit_grid(psi, Q, schedule)
    T = mv.triple_tensor(n, k, l)
    M = np.einsum("baI,iIJ->baiJ", X, T)
    MY = np.einsum("baiJ,bcJ->baci", M, Y)
    u = xq[:, None, :, :] - xp[:, :, None, :]
    r2 = np.einsum("baci,baci->bac", u, u)
    trip = np.einsum("baci,baci->bac", u, MY)
    close = np.sqrt(r2.min(axis=(1, 2))) < delta
    F = (-1) ** k * trip / (sphere_area(n) * np.where(r2 > 0, r2, 1.0) ** (0.5 * n))
    A, C = F.shape[1:]
    means_q = schedule.block_means(F.reshape(len(P), A, C), l)  # (B, A, steps) over the psi cube
    if k == 0:
        return means_q[:, 0, :], close
    out = np.empty((len(P), schedule.steps))
    for j in range(schedule.steps):
        out[:, j] = schedule.block_means(means_q[:, :, j], k)[:, j]
    return out, close


def _batch_size(phi: Action, psi: Action, schedule: ErgodicSchedule) -> int:
    m = schedule.steps * schedule.nodes
    per_pair = m**phi.k * m**psi.k * (phi.n + 4)
    return max(1, _PAIR_BUDGET // per_pair)


def _sample_pairs(phi, psi, rng: RNGStream, count: int):
    return _region(phi).sample(rng.spawn(0), count), _region(psi).sample(rng.spawn(1), count)


def asymptotic_lk(phi: Action, psi: Action, pairs: int, schedule: ErgodicSchedule | None = None,
                  rng: RNGStream | None = None, delta_near: float | None = None,
                  workers: int = 1, chunk: int = 512) -> AsymptoticResult:
    """Asymptotic linking number of two actions from orbit-averaged pair kernels.

    Pairs are drawn uniformly from the generators' supports (the kernel
    vanishes elsewhere) and weighted by the support volumes.  Pairs whose
    orbits come within ``delta_near`` are redrawn; more than 1% redraws is
    an error.
    """
    _check_dims(phi, psi.k)
    schedule = schedule or ErgodicSchedule()
    rng = rng or RNGStream(0)
    delta = _delta(phi, delta_near)
    weight = _region(phi).volume * _region(psi).volume
    batch = _batch_size(phi, psi, schedule)

    def run(i, count):
        stream = rng.spawn(i)
        P, Q = _sample_pairs(phi, psi, stream, count)
        out = np.empty((count, schedule.steps))
        redraws = 0
        for s in range(0, count, batch):
            means, close = _pair_means(phi, psi, P[s : s + batch], Q[s : s + batch], schedule, delta)
            attempt = 0
            while np.any(close):
                idx = np.flatnonzero(close)
                redraws += len(idx)
                attempt += 1
                if redraws > MAX_RESAMPLE_FRACTION * count + 1 or attempt > 50:
                    raise NearCollisionError(f"{redraws} of {count} pairs hit the near-collision cutoff")
                P2, Q2 = _sample_pairs(phi, psi, stream.spawn(2, s, attempt), len(idx))
                m2, c2 = _pair_means(phi, psi, P2, Q2, schedule, delta)
                means[idx] = m2
                close[idx] = c2
            out[s : s + batch] = means
        return out, redraws

    results = _map_chunks(run, pairs, chunk, workers)
    values = np.concatenate([r[0] for r in results])
    redraws = sum(r[1] for r in results)
    if redraws > MAX_RESAMPLE_FRACTION * pairs:
        raise NearCollisionError(f"{redraws} of {pairs} pairs hit the near-collision cutoff")
    table = tuple(Estimate.from_samples(values[:, j], weight) for j in range(schedule.steps))
    return AsymptoticResult(table[-1], table, redraws, tuple(schedule.sides))


# ---------------------------------------------------------------------------
# finite-time linking of closed-up orbits


def lk_TS(phi: Action, psi: Action, p, q, T: Rectangle, S: Rectangle, apexes,
          quad: QuadratureConfig | None = None, normalize: bool = True) -> float:
    """lk(theta_Phi(p, T), theta_Psi(q, S)), divided by |T| |S| when ``normalize``."""
    _check_dims(phi, psi.k)
    ap, aq = (np.asarray(a, dtype=float) for a in apexes)
    A = SingularManifold(tuple(closed_orbit_manifold(phi, p, T, ap).patches), "theta_phi")
    B = SingularManifold(tuple(closed_orbit_manifold(psi, q, S, aq).patches), "theta_psi")
    value = link(A, B, quad, scale=phi.domain.diameter).value
    return value / (T.measure * S.measure) if normalize else value


def theta_estimate(phi: Action, psi: Action, pairs: int, T: Rectangle, S: Rectangle, apexes,
                   rng: RNGStream | None = None, quad: QuadratureConfig | None = None) -> tuple[Estimate, int]:
    """Volume-weighted mean of lk_TS over random pairs: a finite-time estimate of lk(Phi, Psi).

    Using the same ``rng`` with different apexes evaluates both on identical
    pairs.  Returns the estimate and the number of pairs redrawn after a near
    collision.
    """
    rng = rng or RNGStream(0)
    weight = _region(phi).volume * _region(psi).volume
    P, Q = _sample_pairs(phi, psi, rng, pairs)
    vals, redraws = [], 0
    for i in range(pairs):
        p, q = P[i], Q[i]
        for attempt in range(20):
            try:
                vals.append(lk_TS(phi, psi, p, q, T, S, apexes, quad))
                break
            except NearCollisionError:
                redraws += 1
                p2, q2 = _sample_pairs(phi, psi, rng.spawn(3, i, attempt), 1)
                p, q = p2[0], q2[0]
        else:
            raise NearCollisionError("could not find a collision-free pair")
    return Estimate.from_samples(vals, weight), redraws


# ---------------------------------------------------------------------------
# integral invariants


def I_two_actions(phi: Action, psi: Action, cfg: MCConfig | None = None, method: str = "kernel") -> Estimate:
    """int int f(p, q) dp dq  (``"kernel"``)  or  int <BS(X), Y>  (``"biot-savart"``)."""
    _check_dims(phi, psi.k)
    cfg = cfg or MCConfig()
    weight_p = _region(phi).volume
    weight_q = _region(psi).volume
    if method == "kernel":
        delta = _delta(phi, cfg.delta_near)

        def run(i, count):
            stream = cfg.rng.spawn(i)
            P, Q = _sample_pairs(phi, psi, stream, count)
            f, r = kernel_f_batch(phi, psi, P, Q)
            close = r < delta
            attempt = 0
            while np.any(close):
                attempt += 1
                if close.sum() > MAX_RESAMPLE_FRACTION * count + 1 or attempt > 50:
                    raise NearCollisionError(f"{int(close.sum())} of {count} pairs hit the near-collision cutoff")
                idx = np.flatnonzero(close)
                P2, Q2 = _sample_pairs(phi, psi, stream.spawn(2, attempt), len(idx))
                f[idx], r2 = kernel_f_batch(phi, psi, P2, Q2)
                close = np.zeros_like(close)
                close[idx] = r2 < delta
            return f

        f = np.concatenate(_map_chunks(run, cfg.samples, cfg.chunk, cfg.workers))
        return Estimate.from_samples(f, weight_p * weight_q)
    if method == "biot-savart":
        if phi.domain != psi.domain:
            raise ValueError("both actions must live on the same domain")
        X = _wedge_field(phi)
        per = max(1, cfg.samples // cfg.replicates)

        def run(b, _):
            stream = cfg.rng.spawn(b)
            q = _region(psi).sample(stream.spawn(0), per)
            bs = bs_estimate(X, phi.domain, q, _bs_config(cfg, X, q, stream.spawn(1)))[0]
            return weight_q * float(np.mean(np.sum(bs * psi.wedge(q), axis=-1)))

        vals = _map_chunks(run, cfg.replicates, 1, cfg.workers)
        return Estimate.from_samples(vals)
    raise ValueError(f"unknown method {method!r}")


def _bs_config(cfg: MCConfig, X: MultiVectorField, x: np.ndarray, rng: RNGStream) -> BSConfig:
    sampling = cfg.bs_sampling
    if sampling == "auto":
        inside = X.support is None or np.any(X.support.contains(x))
        sampling = "sobol" if inside else "uniform"
    return BSConfig(samples=cfg.inner, rng=rng, replicates=2, sampling=sampling,
                    chunk=max(1, (1 << 20) // len(x)))


def _wedge_field(a: Action):
    return MultiVectorField(a.n, a.k, a.wedge, support=a.support, label="X")


def lk_action_manifold(phi: Action, N: SingularManifold, points: int, schedule: ErgodicSchedule | None = None,
                       rng: RNGStream | None = None, quad: QuadratureConfig | None = None,
                       delta_near: float | None = None, workers: int = 1, chunk: int = 256) -> AsymptoticResult:
    """Asymptotic linking of an action with a closed manifold via orbit averages of g."""
    _check_dims(phi, N.dim)
    schedule = schedule or ErgodicSchedule()
    rng = rng or RNGStream(0)
    nodes = manifold_nodes(N, quad)
    weight = _region(phi).volume
    t = schedule.grid(phi.k)

    def run(i, count):
        stream = rng.spawn(i)
        P = _region(phi).sample(stream, count)
        out = np.empty((count, schedule.steps))
        for j in range(count):
            p = P[j]
            for attempt in range(20):
                x = flow(phi, t, np.broadcast_to(p, (len(t), phi.n)))
                try:
                    g = _g_values(phi, N, x, quad, delta_near, nodes)
                    break
                except NearCollisionError:
                    p = _region(phi).sample(stream.spawn(1, j, attempt), 1)[0]
            else:
                raise NearCollisionError("could not find a collision-free orbit")
            out[j] = schedule.block_means(g, phi.k)
        return out

    values = np.concatenate(_map_chunks(run, points, chunk, workers))
    table = tuple(Estimate.from_samples(values[:, j], weight) for j in range(schedule.steps))
    return AsymptoticResult(table[-1], table, 0, tuple(schedule.sides))


def I_action_manifold(phi: Action, N: SingularManifold, cfg: MCConfig | None = None, method: str = "kernel",
                      quad: QuadratureConfig | None = None) -> Estimate:
    """int_Omega g(p) dp  (``"kernel"``)  or  int_N <BS(X), U>  (``"biot-savart"``)."""
    _check_dims(phi, N.dim)
    cfg = cfg or MCConfig()
    nodes = manifold_nodes(N, quad)
    if method == "kernel":
        def run(i, count):
            P = _region(phi).sample(cfg.rng.spawn(i), count)
            return _g_values(phi, N, P, quad, cfg.delta_near, nodes)

        g = np.concatenate(_map_chunks(run, cfg.samples, cfg.chunk, cfg.workers))
        return Estimate.from_samples(g, _region(phi).volume)
    if method == "biot-savart":
        X = _wedge_field(phi)
        y, w = nodes

        def run(b, _):
            bs = bs_estimate(X, phi.domain, y, _bs_config(cfg, X, y, cfg.rng.spawn(b)))[0]
            return math.fsum(np.sum(bs * w, axis=-1))

        return Estimate.from_samples(_map_chunks(run, cfg.replicates, 1, cfg.workers))
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# energy


def energy(phi: Action, cfg: MCConfig | None = None) -> Estimate:
    """int |X^1 ^ ... ^ X^k|^2 over the domain."""
    cfg = cfg or MCConfig()
    region = _region(phi)

    def run(i, count):
        x = region.sample(cfg.rng.spawn(i), count)
        return np.sum(phi.wedge(x) ** 2, axis=-1)

    return Estimate.from_samples(np.concatenate(_map_chunks(run, cfg.samples, cfg.chunk, cfg.workers)),
                                 region.volume)


def energy_bound_check(phi: Action, gamma: float, cfg: MCConfig | None = None) -> dict:
    """Compare |I(Phi, Phi)| with gamma * E(Phi); needs n = 2k + 1.

    The self-invariant uses the Biot-Savart route, whose samples stay
    bounded even though the pair kernel is singular on the diagonal.
    """
    if phi.n != 2 * phi.k + 1:
        raise DimensionError("the energy bound applies to n = 2k + 1")
    cfg = cfg or MCConfig()
    I = I_two_actions(phi, phi, cfg, method="biot-savart")
    E = energy(phi, replace(cfg, rng=cfg.rng.spawn(7)))
    margin = gamma * E.value - abs(I.value)
    sigma = math.hypot(gamma * E.std_error, I.std_error)
    return {"gamma": gamma, "energy": E.as_dict(), "I_self": I.as_dict(), "bound": gamma * E.value,
            "margin": margin, "margin_sigma": sigma, "holds": margin >= 0.0}


def compare(a: Estimate, b: Estimate, k: float = 2.0) -> dict:
    """Agreement record of two independent estimates."""
    return {"a": a.value, "sigma_a": a.std_error, "b": b.value, "sigma_b": b.std_error,
            "difference": a.value - b.value, "combined_sigma": combined_sigma(a, b),
            f"agree_{k:g}sigma": agree(a, b, k)}
