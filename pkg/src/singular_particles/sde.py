"""Seeded ensemble simulation of dZ = -b(Z) dt + sqrt(2) dB on R^{Nd}.

Trajectories are advanced in fixed batches of vectorized state. Each
trajectory owns two counter-based streams derived from (seed, index): one for
the base-grid Brownian increments, one for Brownian-bridge refinements when
the step is locally subdivided near a collision. A trajectory's path therefore
depends only on (plan, index), never on batching or worker count.
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import CollisionState
from .kernels import SINGULARITY_GUARD, KernelSpec, MollifiedKernel, mollify
from .lift import LiftedDrift, ParticleConfiguration, pair_distances


class Scheme(str, Enum):
    EULER_MARUYAMA = "EulerMaruyama"
    TAMED_EULER = "TamedEuler"


# -- path functionals ------------------------------------------------------


@dataclass(frozen=True)
class PathFunctional:
    """Accumulates int_0^T e^{-discount s} f(omega_s) ds by left-endpoint quadrature in f.

    ``integrand(blocks, drift)`` maps (M, N, d) positions and drift values to (M,).
    The discount weight is integrated exactly over each step.
    """

    name: str
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray]
    discount: float = 0.0


def _abs_drift(blocks: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(b * b, axis=(-2, -1)))


def _one(blocks: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.ones(blocks.shape[0])


@dataclass(frozen=True)
class PairRadial:
    """f(|x_i - x_j|) as a picklable integrand."""

    func: Callable[[np.ndarray], np.ndarray]
    i: int = 0
    j: int = 1

    def __call__(self, blocks: np.ndarray, b: np.ndarray) -> np.ndarray:
        y = blocks[:, self.i, :] - blocks[:, self.j, :]
        return self.func(np.sqrt(np.sum(y * y, axis=-1)))


def abs_drift_functional(discount: float = 0.0) -> PathFunctional:
    return PathFunctional("abs_drift", _abs_drift, discount)


def occupation_functional(discount: float) -> PathFunctional:
    return PathFunctional("occupation", _one, discount)


# -- plan, outcomes, results ----------------------------------------------


@dataclass(frozen=True)
class SimPlan:
    drift: LiftedDrift
    x0: ParticleConfiguration
    dt: float
    horizon: float
    scheme: Scheme = Scheme.EULER_MARUYAMA
    epsilon_schedule: tuple = ()
    collision_radius: float = 1e-3
    max_substeps: int = 100_000
    seed: int = 0
    ensemble: int = 1000
    # locally refined steps start below this pair distance (default 10 r_coll)
    refine_radius: float | None = None
    drift_fraction: float = 0.1
    # optional diffusive control: sqrt(2 h) <= diffusion_fraction * rho
    diffusion_fraction: float | None = None
    stop_on_collision: bool = True
    # detect collisions between grid points via the Brownian-bridge crossing law
    bridge_crossing: bool = True
    functionals: tuple = ()
    snapshot_times: tuple = ()
    dump_stride: int = 0
    batch_size: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "epsilon_schedule", tuple(float(e) for e in self.epsilon_schedule))
        object.__setattr__(self, "functionals", tuple(self.functionals))
        object.__setattr__(self, "snapshot_times", tuple(float(s) for s in self.snapshot_times))
        if not self.dt > 0 or not self.horizon > 0:
            raise ValueError("dt and horizon must be positive")
        if self.dt > self.horizon:
            raise ValueError("dt must not exceed the horizon")
        if not self.collision_radius > SINGULARITY_GUARD:
            raise ValueError("collision radius must exceed the singularity guard")
        if self.ensemble < 1:
            raise ValueError("ensemble must be >= 1")
        if self.max_substeps < 1 or self.batch_size < 1:
            raise ValueError("max_substeps and batch_size must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if (self.x0.n_particles, self.x0.dim) != (self.drift.n_particles, self.drift.dim):
            raise ValueError("x0 does not match the drift shape")
        if any(e <= 0 for e in self.epsilon_schedule):
            raise ValueError("mollification radii must be positive")
        if any(not 0 < s <= self.horizon for s in self.snapshot_times):
            raise ValueError("snapshot times must lie in (0, horizon]")
        names = [f.name for f in self.functionals]
        if len(set(names)) != len(names):
            raise ValueError("functional names must be unique")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def refine_at(self) -> float:
        return 10.0 * self.collision_radius if self.refine_radius is None else self.refine_radius

    def snapshot_steps(self) -> list[int]:
        return [int(round(s / self.dt)) for s in self.snapshot_times]


@dataclass
class TrajectoryOutcome:
    index: int
    collided: bool
    collision_time: float | None
    terminal: ParticleConfiguration
    path_functionals: dict
    min_pair_distance_seen: float
    budget_exhausted: bool = False
    error: str | None = None
    snapshots: np.ndarray | None = None
    path: np.ndarray | None = None

    def summary(self) -> dict:
        return {
            "index": self.index,
            "collided": self.collided,
            "collision_time": self.collision_time,
            "min_pair_distance_seen": self.min_pair_distance_seen,
            "budget_exhausted": self.budget_exhausted,
            "error": self.error,
            "path_functionals": dict(self.path_functionals),
            "terminal": self.terminal.positions.tolist(),
        }


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return float(values.mean()), se


@dataclass
class EnsembleResult:
    outcomes: list
    collision_probability: tuple = field(init=False)
    functional_means: dict = field(init=False)

    def __post_init__(self):
        self.outcomes = sorted(self.outcomes, key=lambda o: o.index)
        m = len(self.outcomes)
        p = float(np.mean([o.collided for o in self.outcomes])) if m else float("nan")
        se = math.sqrt(p * (1 - p) / m) if m else float("nan")
        self.collision_probability = (p, se)
        done = [o for o in self.outcomes if not o.collided and o.error is None]
        names = list(self.outcomes[0].path_functionals) if m else []
        self.functional_means = {k: _mean_se([o.path_functionals[k] for o in done]) for k in names}

    def __len__(self) -> int:
        return len(self.outcomes)

    @property
    def collided(self) -> np.ndarray:
        return np.array([o.collided for o in self.outcomes])

    @property
    def collision_times(self) -> np.ndarray:
        return np.array([np.nan if o.collision_time is None else o.collision_time for o in self.outcomes])

    def terminal_positions(self) -> np.ndarray:
        return np.stack([o.terminal.positions for o in self.outcomes])

    def snapshot_positions(self) -> np.ndarray:
        """(M, n_snapshots, N*d); NaN rows for trajectories stopped before the snapshot."""
        return np.stack([o.snapshots for o in self.outcomes])

    def functional_values(self, name: str) -> np.ndarray:
        return np.array([o.path_functionals[name] for o in self.outcomes])

    def summary(self) -> dict:
        p, se = self.collision_probability
        return {
            "ensemble": len(self.outcomes),
            "collision_probability": p,
            "collision_stderr": se,
            "functional_means": {k: {"mean": v[0], "stderr": v[1]} for k, v in self.functional_means.items()},
            "n_errors": sum(o.error is not None for o in self.outcomes),
            "n_budget_exhausted": sum(o.budget_exhausted for o in self.outcomes),
        }

    def to_json(self, include_outcomes: bool = False) -> str:
        rec = self.summary()
        if include_outcomes:
            rec["outcomes"] = [o.summary() for o in self.outcomes]
        return json.dumps(rec, sort_keys=True, allow_nan=True)


# -- random streams --------------------------------------------------------


def trajectory_streams(seed: int, index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (base, refinement) Philox streams for one trajectory."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    base, refine = ss.spawn(2)
    return np.random.Generator(np.random.Philox(base)), np.random.Generator(np.random.Philox(refine))


class _Buffered:
    """Per-trajectory blocks of standard normals consumed one row at a time."""

    def __init__(self, gens: list, width: int, rows: int):
        self.gens = gens
        self.rows = rows
        self.width = width
        self.buf = np.empty((len(gens) * rows, width))
        self.ptr = np.full(len(gens), rows)

    def take(self, idx: np.ndarray) -> np.ndarray:
        ptr = self.ptr[idx]
        full = ptr >= self.rows
        if full.any():
            for k in idx[full]:
                lo = k * self.rows
                self.buf[lo:lo + self.rows] = self.gens[k].standard_normal((self.rows, self.width))
            ptr = np.where(full, 0, ptr)
        self.ptr[idx] = ptr + 1
        return self.buf.take(idx * self.rows + ptr, axis=0)


# -- one step --------------------------------------------------------------


def _increment(b: np.ndarray, h, scheme: Scheme) -> np.ndarray:
    """Drift displacement b h (tamed: b h / (1 + h|b|)) for (M, N, d) arrays."""
    h = np.asarray(h, dtype=float).reshape(-1, 1, 1)
    if scheme is Scheme.TAMED_EULER:
        norm = np.sqrt(np.sum(b * b, axis=(-2, -1)))[:, None, None]
        return b * h / (1.0 + h * norm)
    return b * h


def step(drift: LiftedDrift, x: ParticleConfiguration, dt: float, gaussian_increment,
         scheme: Scheme | str = Scheme.EULER_MARUYAMA) -> ParticleConfiguration:
    """x' = x - b(x) dt + sqrt(2 dt) xi with xi standard normal in R^{Nd}."""
    scheme = Scheme(scheme)
    blocks = x.blocks[None]
    b = drift.eval_blocks(blocks)
    xi = np.asarray(gaussian_increment, dtype=float).reshape(blocks.shape)
    new = blocks - _increment(b, dt, scheme) + math.sqrt(2.0 * dt) * xi
    return ParticleConfiguration.from_blocks(new[0])


# -- batch engine ----------------------------------------------------------


def _simulate_batch(plan: SimPlan, indices: Sequence[int]) -> list[TrajectoryOutcome]:
    n, d = plan.drift.n_particles, plan.drift.dim
    m = len(indices)
    nd = n * d
    streams = [trajectory_streams(plan.seed, int(k)) for k in indices]
    base = _Buffered([s[0] for s in streams], nd, min(512, plan.n_steps))
    refine = _Buffered([s[1] for s in streams], nd, 256)

    x = np.broadcast_to(plan.x0.blocks, (m, n, d)).copy()
    step_idx = np.zeros(m, dtype=np.int64)      # completed base steps
    tau = np.zeros(m)                           # time left in the current base step
    w_rem = np.zeros((m, n, d))                 # bridge increment left in the current base step
    sub = np.zeros(m, dtype=np.int64)           # substeps spent in the current base step
    alive = np.ones(m, dtype=bool)
    collided = np.zeros(m, dtype=bool)
    exhausted = np.zeros(m, dtype=bool)
    t_coll = np.full(m, np.nan)
    dist = pair_distances(x)                   # pair distances of the current state
    rho_seen = dist.min(axis=-1)
    acc = np.zeros((len(plan.functionals), m))
    snap_steps = plan.snapshot_steps()
    snaps = np.full((m, len(snap_steps), nd), np.nan)
    stride = plan.dump_stride
    paths: list[list] = [[] for _ in range(m)] if stride else []

    n_steps, dt, r_coll = plan.n_steps, plan.dt, plan.collision_radius
    refine_at, frac, dfrac = plan.refine_at, plan.drift_fraction, plan.diffusion_fraction
    cross = plan.bridge_crossing and plan.stop_on_collision
    if stride:
        for k in range(m):
            paths[k].append((0.0, x[k].reshape(-1).copy()))
    if plan.stop_on_collision:
        hit = rho_seen < r_coll
        collided |= hit
        t_coll[hit] = 0.0
        alive &= ~hit

    while True:
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        xa = x[act]
        fresh = tau[act] <= 0.0
        if np.any(fresh):
            fi = act[fresh]
            w_rem[fi] = math.sqrt(dt) * base.take(fi).reshape(-1, n, d)
            tau[fi] = dt
            sub[fi] = 0
        b = plan.drift.eval_blocks(xa)
        d_old = dist[act]
        rho = d_old.min(axis=-1)
        ta = tau[act]
        h = ta.copy()
        near = rho < refine_at
        if np.any(near):
            bn = np.sqrt(np.sum(b[near] ** 2, axis=(-2, -1)))
            cap = np.where(bn > 0, frac * rho[near] / np.where(bn > 0, bn, 1.0), np.inf)
            if dfrac is not None:
                cap = np.minimum(cap, 0.5 * (dfrac * rho[near]) ** 2)
            h[near] = np.minimum(ta[near], cap)
        full = h >= ta
        h[full] = ta[full]
        dw = w_rem[act].copy()
        part = ~full
        if np.any(part):
            pi = act[part]
            tp, hp = ta[part], h[part]
            eta = refine.take(pi).reshape(-1, n, d)
            mean = (hp / tp)[:, None, None] * w_rem[pi]
            dw[part] = mean + np.sqrt(hp * (tp - hp) / tp)[:, None, None] * eta
        t_left = step_idx[act] * dt + (dt - ta)
        for q, f in enumerate(plan.functionals):
            lam = f.discount
            if lam > 0:
                wgt = np.exp(-lam * t_left) * (-np.expm1(-lam * h)) / lam
            else:
                wgt = h
            acc[q, act] += wgt * f.integrand(xa, b)
        xa = xa - _increment(b, h, plan.scheme) + math.sqrt(2.0) * dw
        x[act] = xa
        w_rem[act] -= dw
        tau[act] = np.where(full, 0.0, ta - h)
        sub[act] += 1
        done_step = act[full]
        step_idx[done_step] += 1
        t_now = step_idx[act] * dt + np.where(full, 0.0, dt - tau[act])

        d_new = pair_distances(xa)
        dist[act] = d_new
        rho_new = d_new.min(axis=-1)
        rho_seen[act] = np.minimum(rho_seen[act], rho_new)
        bad = ~np.all(np.isfinite(xa), axis=(-2, -1))
        hit = (rho_new < r_coll) & plan.stop_on_collision & ~bad
        if cross and np.any(near):
            # pair distance near r_coll diffuses with variance rate 4 per coordinate
            ni = np.flatnonzero(near & ~hit & ~bad)
            if ni.size:
                ga = d_old[ni] - r_coll
                gb = d_new[ni] - r_coll
                p_pair = np.exp(-ga * gb / (2.0 * h[ni, None]))
                p_any = 1.0 - np.prod(1.0 - p_pair, axis=-1)
                u = special.ndtr(refine.take(act[ni])[:, 0])
                hit[ni] = u < p_any
        over = (sub[act] >= plan.max_substeps) & ~full & ~hit & ~bad
        flagged = hit | over
        if np.any(flagged):
            stop = act[flagged]
            collided[stop] = True
            t_coll[stop] = t_now[flagged]
            exhausted[act[over]] = True
        alive[act[flagged | bad]] = False
        if snap_steps and done_step.size:
            for s, target in enumerate(snap_steps):
                sel = done_step[step_idx[done_step] == target]
                ok = sel[alive[sel]]
                snaps[ok, s] = x[ok].reshape(len(ok), nd)
        if stride and done_step.size:
            for k in done_step[(step_idx[done_step] % stride == 0) & alive[done_step]]:
                paths[k].append((step_idx[k] * dt, x[k].reshape(-1).copy()))
        alive[step_idx >= n_steps] = False

    outcomes = []
    names = [f.name for f in plan.functionals]
    for k, idx in enumerate(indices):
        err = None if np.all(np.isfinite(x[k])) else "non-finite state"
        outcomes.append(TrajectoryOutcome(
            index=int(idx),
            collided=bool(collided[k]),
            collision_time=None if not collided[k] else float(t_coll[k]),
            terminal=ParticleConfiguration(n, d, np.where(np.isfinite(x[k]), x[k], np.nan).reshape(-1)),
            path_functionals={nm: float(acc[q, k]) for q, nm in enumerate(names)},
            min_pair_distance_seen=float(rho_seen[k]),
            budget_exhausted=bool(exhausted[k]),
            error=err,
            snapshots=snaps[k] if snap_steps else None,
            path=(np.array([np.concatenate([[t], p]) for t, p in paths[k]]) if stride else None),
        ))
    return outcomes


def _failed_outcome(plan: SimPlan, index: int, exc: Exception) -> TrajectoryOutcome:
    nan = np.full(plan.x0.positions.size, np.nan)
    return TrajectoryOutcome(
        index=index, collided=False, collision_time=None,
        terminal=ParticleConfiguration(plan.x0.n_particles, plan.x0.dim, nan),
        path_functionals={f.name: float("nan") for f in plan.functionals},
        min_pair_distance_seen=float("nan"), error=f"{type(exc).__name__}: {exc}",
        snapshots=np.full((len(plan.snapshot_times), nan.size), np.nan) if plan.snapshot_times else None,
    )


def _run_batch_safe(plan: SimPlan, indices: Sequence[int]) -> list[TrajectoryOutcome]:
    try:
        return _simulate_batch(plan, indices)
    except (CollisionState, FloatingPointError, ValueError) as exc:
        if len(indices) == 1:
            return [_failed_outcome(plan, int(indices[0]), exc)]
        # isolate the offending trajectories; each path is batch-independent
        out = []
        for k in indices:
            out.extend(_run_batch_safe(plan, [k]))
        return out


def simulate(plan: SimPlan, trajectory_index: int) -> TrajectoryOutcome:
    """Integrate one trajectory; identical to its entry in run_ensemble(plan)."""
    return _run_batch_safe(plan, [trajectory_index])[0]


_WORKER_PLAN: SimPlan | None = None


def _worker_batch(bounds: tuple[int, int]) -> list[TrajectoryOutcome]:
    return _run_batch_safe(_WORKER_PLAN, range(*bounds))


def _batches(plan: SimPlan) -> list[tuple[int, int]]:
    b = plan.batch_size
    return [(s, min(s + b, plan.ensemble)) for s in range(0, plan.ensemble, b)]


def run_ensemble(plan: SimPlan, workers: int = 1) -> EnsembleResult:
    """Run trajectories 0..M-1; the result does not depend on ``workers``."""
    global _WORKER_PLAN
    batches = _batches(plan)
    outcomes: list[TrajectoryOutcome] = []
    if workers <= 1 or len(batches) == 1:
        for lo, hi in batches:
            outcomes.extend(_run_batch_safe(plan, range(lo, hi)))
        return EnsembleResult(outcomes)
    # fork inherits the plan, so integrands need not be picklable
    _WORKER_PLAN = plan
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            for chunk in pool.map(_worker_batch, batches):
                outcomes.extend(chunk)
    finally:
        _WORKER_PLAN = None
    return EnsembleResult(outcomes)


def default_workers() -> int:
    return os.cpu_count() or 1


# -- mollification schedule ------------------------------------------------


def _mollify_entry(kernel, eps: float, quadrature: int):
    if kernel is None or isinstance(kernel, MollifiedKernel):
        return kernel
    return mollify(kernel, eps, quadrature) if kernel.is_singular else kernel


def mollified_drift(drift: LiftedDrift, epsilon: float, quadrature: int = 8) -> LiftedDrift:
    """Replace every singular pair kernel by its Friedrichs mollification."""
    km = tuple(tuple(_mollify_entry(k, epsilon, quadrature) for k in row) for row in drift.kernel_matrix)
    pd = drift.particle_drifts
    if pd is not None:
        pd = tuple(_mollify_entry(k, epsilon, quadrature) for k in pd)
    return LiftedDrift(km, drift.n_particles, drift.dim, pd)


def run_epsilon_schedule(plan: SimPlan, workers: int = 1, quadrature: int = 8) -> list[tuple[float, EnsembleResult]]:
    """One ensemble per mollification radius in plan.epsilon_schedule (common seeds)."""
    out = []
    for eps in plan.epsilon_schedule:
        sub = replace(plan, drift=mollified_drift(plan.drift, eps, quadrature), epsilon_schedule=())
        out.append((eps, run_ensemble(sub, workers)))
    return out


# -- output ------------------------------------------------------------------


def write_trajectory_csv(result: EnsembleResult, path: str) -> None:
    """Stream (trajectory, t, x_1..x_{Nd}) rows for outcomes recorded with a dump stride."""
    with open(path, "w", newline="") as fh:
        writer = None
        for o in result.outcomes:
            if o.path is None:
                continue
            if writer is None:
                writer = csv.writer(fh)
                writer.writerow(["trajectory", "t"] + [f"x{k}" for k in range(o.path.shape[1] - 1)])
            for row in o.path:
                writer.writerow([o.index] + [repr(float(v)) for v in row])


def hardy_pair_plan(kappa: float, dim: int = 3, n_particles: int = 2, pair_distance: float = 1.0,
                    attracting: bool = True, **kw) -> SimPlan:
    """Uniform Hardy interaction from a configuration with all particles on a line."""
    kernel = KernelSpec.hardy(kappa, dim, attracting=attracting)
    blocks = np.zeros((n_particles, dim))
    blocks[:, 0] = pair_distance * (np.arange(n_particles) - (n_particles - 1) / 2.0)
    return SimPlan(drift=LiftedDrift.uniform(kernel, n_particles),
                   x0=ParticleConfiguration.from_blocks(blocks), **kw)
