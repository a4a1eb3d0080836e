"""Krylov-type functional of the two-particle system in the pair coordinate.

lhs = E int_0^inf e^{-lambda s} |g f|(X_1(s) - X_2(s)) ds, by Monte Carlo;
rhs = || g |f|^{q/2} ||_2^{2/q} on R^d, by radial quadrature with an angular rule.
Both are positively homogeneous of degree one in f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import TailBoundTooLarge
from ..sde import PathFunctional, SimPlan, run_ensemble
from ..trials import radial_integral
from .rayleigh import _raw_eval, _singular_radii, angular_rule


@dataclass(frozen=True)
class _PairGF:
    kernel: object
    profile: object
    i: int = 0
    j: int = 1

    def __call__(self, blocks: np.ndarray, b: np.ndarray) -> np.ndarray:
        y = blocks[:, self.i, :] - blocks[:, self.j, :]
        r = np.sqrt(np.sum(y * y, axis=-1))
        gv = _raw_eval(self.kernel, y)
        return np.sqrt(np.sum(gv * gv, axis=-1)) * np.abs(self.profile(r))


@dataclass
class KrylovReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    lam: float
    q: float
    tail_bound: float
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("nan")

    def to_record(self) -> dict:
        return {"inputs": {"lambda": self.lam, "q": self.q, **self.meta},
                "estimates": {"lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio},
                "errors": {"lhs_stderr": self.lhs_stderr, "tail_bound": self.tail_bound},
                "verdicts": {"finite": bool(np.isfinite(self.lhs) and np.isfinite(self.rhs))}}


def krylov_rhs(g, f_profile, q: float, dim: int, support: tuple = (0.0, np.inf)) -> float:
    """(int_{R^d} |g(z)|^2 |f(|z|)|^q dz)^{1/q}."""
    pts, wts = angular_rule(g, dim)

    def shell(r):
        gv = _raw_eval(g, max(r, 1e-12) * pts)
        return float(np.sum(wts * np.sum(gv * gv, axis=-1))) * float(np.abs(f_profile(np.array(r)))) ** q

    breaks = [b for b in (*_singular_radii(g), *support) if 0 < b < np.inf]
    val = radial_integral(shell, dim, breaks)
    return val ** (1.0 / q)


def lifted_q_threshold(dim: int, n_particles: int = 2) -> float:
    return max(dim * n_particles - 2.0, 2.0)


def krylov_functional(plan: SimPlan, g, f_profile, lam: float, q: float | None = None,
                      f_sup: float | None = None, support: tuple = (0.0, np.inf),
                      workers: int = 1, tail_tol: float | None = None) -> KrylovReport:
    """(lhs, rhs) for the pair (0, 1) of ``plan``; the plan's horizon truncates the lhs.

    q defaults to just above the lifted-space threshold (dN - 2) v 2.
    """
    d, n = plan.drift.dim, plan.drift.n_particles
    q = lifted_q_threshold(d, n) + 0.1 if q is None else q
    if q <= lifted_q_threshold(d, n):
        raise ValueError("q must exceed (dN - 2) v 2")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    rhs = krylov_rhs(g, f_profile, q, d, support)
    if rhs == 0.0:
        return KrylovReport(0.0, 0.0, 0.0, lam, q, 0.0, {"ensemble": 0})
    run = replace(plan, functionals=(PathFunctional("krylov", _PairGF(g, f_profile), lam),))
    res = run_ensemble(run, workers)
    vals = np.array([o.path_functionals["krylov"] for o in res.outcomes if o.error is None])
    lhs = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    tail = float("nan")
    if f_sup is not None:
        # |g f| is bounded by sup|g| on the support of f times sup|f|
        lo = max(support[0], 1e-6)
        hi = support[1] if np.isfinite(support[1]) else 1e3 * max(lo, 1.0)
        pts, _ = angular_rule(g, d)
        radii = np.geomspace(lo, hi, 64)
        gsup = float(np.max(np.linalg.norm(_raw_eval(g, radii[:, None, None] * pts[None]), axis=-1)))
        tail = gsup * f_sup * math.exp(-lam * plan.horizon) / lam
        if tail_tol is not None and tail > tail_tol * max(lhs, 1e-300):
            raise TailBoundTooLarge(f"tail bound {tail:.3e} exceeds {tail_tol} of the estimate")
    return KrylovReport(lhs, se, rhs, lam, q, tail, {"ensemble": len(res), "horizon": plan.horizon,
                                                      "dt": plan.dt, "seed": plan.seed})
