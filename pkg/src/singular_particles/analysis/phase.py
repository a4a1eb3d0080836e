"""Collision probability as a function of the attraction strength."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

from ..kernels import KernelSpec
from ..lift import LiftedDrift
from ..sde import SimPlan, hardy_pair_plan, run_ensemble
from .bessel import BesselOracle


@dataclass
class PhaseRow:
    kappa: float
    p: float
    stderr: float
    oracle_p: float | None = None
    oracle_err: float = 0.0
    ensemble: int = 0
    n_budget_exhausted: int = 0
    n_errors: int = 0

    @property
    def combined_stderr(self) -> float | None:
        """Binomial SE under the oracle value combined with the oracle's grid error."""
        if self.oracle_p is None:
            return None
        q = self.oracle_p
        return math.sqrt(q * (1.0 - q) / max(self.ensemble, 1) + self.oracle_err**2)

    @property
    def z_score(self) -> float | None:
        if self.oracle_p is None:
            return None
        return (self.p - self.oracle_p) / max(self.combined_stderr, 1e-300)

    def to_record(self) -> dict:
        return {"kappa": self.kappa, "p": self.p, "stderr": self.stderr, "oracle_p": self.oracle_p,
                "oracle_err": self.oracle_err, "combined_stderr": self.combined_stderr, "z": self.z_score,
                "n_budget_exhausted": self.n_budget_exhausted, "n_errors": self.n_errors}


@dataclass
class PhaseScan:
    rows: list
    meta: dict = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        return [r.to_record() for r in self.rows]

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kappa", "p", "stderr", "oracle_p"])
            for r in self.rows:
                w.writerow([repr(r.kappa), repr(r.p), repr(r.stderr), "" if r.oracle_p is None else repr(r.oracle_p)])


def phase_plan_template(dim: int = 3, n_particles: int = 2, **kw) -> SimPlan:
    """Default scan plan: unit pair distance, dt = 1e-4, r_coll = 1e-3, T = 1.

    Steps are refined below pair distance 0.3 so that sqrt(2h) <= 0.05 rho.
    """
    kw.setdefault("dt", 1e-4)
    kw.setdefault("horizon", 1.0)
    kw.setdefault("collision_radius", 1e-3)
    kw.setdefault("ensemble", 10_000)
    kw.setdefault("refine_radius", 0.3)
    kw.setdefault("diffusion_fraction", 0.05)
    kw.setdefault("batch_size", 5000)
    return hardy_pair_plan(0.0, dim, n_particles, **kw)


def _with_kappa(plan: SimPlan, kappa: float) -> SimPlan:
    n, d = plan.drift.n_particles, plan.drift.dim
    drift = LiftedDrift.uniform(KernelSpec.hardy(kappa, d), n)
    return replace(plan, drift=drift)


def collision_phase_scan(kappa_grid, plan_template: SimPlan | None = None, workers: int = 1,
                         with_oracle: bool | None = None) -> PhaseScan:
    """One ensemble per kappa, with the Bessel oracle alongside for two particles."""
    grid = [float(k) for k in kappa_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("kappa grid must be sorted")
    plan = plan_template or phase_plan_template()
    n, d = plan.drift.n_particles, plan.drift.dim
    if with_oracle is None:
        with_oracle = n == 2
    if with_oracle and n != 2:
        raise ValueError("the Bessel oracle covers two particles only")
    pair0 = float(plan.x0.pair_distances()[0])
    rows = []
    for kappa in grid:
        res = run_ensemble(_with_kappa(plan, kappa), workers)
        p, se = res.collision_probability
        s = res.summary()
        oracle, oerr = None, 0.0
        if with_oracle:
            oracle, oerr = BesselOracle(kappa, d).collision_probability(
                pair0, plan.collision_radius, plan.horizon, return_error=True)
        rows.append(PhaseRow(kappa, p, se, oracle, oerr, len(res), s["n_budget_exhausted"], s["n_errors"]))
    meta = {"dim": d, "n_particles": n, "ensemble": plan.ensemble, "dt": plan.dt, "horizon": plan.horizon,
            "collision_radius": plan.collision_radius, "seed": plan.seed, "pair_distance": pair0}
    return PhaseScan(rows, meta)
