"""Interacting particles with singular (Hardy-type) pair interactions.

Kernels and form bounds, the N-particle lift, a reproducible SDE ensemble
engine, analytic oracles and Monte Carlo estimators, and a config-driven CLI.
"""

from .errors import SingularParticlesError
from .kernels import Flavor, KernelKind, KernelSpec, eval_kernel, mollify, nominal_form_bounds
from .lift import LiftedDrift, ParticleConfiguration, lifted_div_bound, lifted_form_bound
from .sde import Scheme, SimPlan, hardy_pair_plan, run_ensemble, simulate

__version__ = "0.1.0"

__all__ = [
    "SingularParticlesError", "Flavor", "KernelKind", "KernelSpec", "eval_kernel", "mollify",
    "nominal_form_bounds", "LiftedDrift", "ParticleConfiguration", "lifted_div_bound", "lifted_form_bound",
    "Scheme", "SimPlan", "hardy_pair_plan", "run_ensemble", "simulate",
]
