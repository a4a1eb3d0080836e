"""Estimators built on the kernel, lift and SDE layers."""

from .bessel import BesselOracle, bessel_dimension, bessel_hit_probability, origin_hit_probability
from .feynman_kac import (FeynmanKacReport, feynman_kac_check, free_resolvent_3d, gaussian_profile,
                          radial_resolvent, shell_bump)
from .heat_kernel import HeatKernelReport, heat_kernel_envelope_check, heat_kernel_plan
from .integrability import IntegrabilityReport, integrability_threshold, psi_integrability
from .krylov import KrylovReport, krylov_functional, krylov_rhs, lifted_q_threshold
from .lyapunov import LyapunovAudit, lyapunov_audit, random_configurations
from .phase import PhaseRow, PhaseScan, collision_phase_scan, phase_plan_template
from .rayleigh import (RayleighEstimate, estimate_form_bound, estimate_multiparticle_hardy,
                       lifted_rayleigh_check, random_gaussian_trials)

__all__ = [
    "BesselOracle", "bessel_dimension", "bessel_hit_probability", "origin_hit_probability",
    "FeynmanKacReport", "feynman_kac_check", "free_resolvent_3d", "gaussian_profile", "radial_resolvent",
    "shell_bump", "HeatKernelReport", "heat_kernel_envelope_check", "heat_kernel_plan",
    "IntegrabilityReport", "integrability_threshold", "psi_integrability", "KrylovReport",
    "krylov_functional", "krylov_rhs", "lifted_q_threshold", "LyapunovAudit", "lyapunov_audit",
    "random_configurations", "PhaseRow", "PhaseScan", "collision_phase_scan", "phase_plan_template",
    "RayleighEstimate", "estimate_form_bound", "estimate_multiparticle_hardy", "lifted_rayleigh_check",
    "random_gaussian_trials",
]
