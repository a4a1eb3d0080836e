import math

import pytest
from hypothesis import given, settings, strategies as st

from singular_particles.analysis.rayleigh import (LOWER_BOUND_OF_SUP, RayleighEstimate, estimate_form_bound,
                                                  estimate_multiparticle_hardy, lifted_rayleigh_check,
                                                  random_gaussian_trials)
from singular_particles.kernels import Flavor, KernelSpec
from singular_particles.lift import paper_hardy_constant


@pytest.mark.parametrize("d,kappa", [(3, 4.0), (4, 9.0)])
def test_hardy_estimates_close_below_analytic(d, kappa):
    k = KernelSpec.hardy(kappa, d)
    f = estimate_form_bound(k, Flavor.F).value
    dp = estimate_form_bound(k, Flavor.DIV_PLUS).value
    assert 0.98 * kappa <= f <= kappa * (1 + 1e-12)
    assert 0.98 * 2 * math.sqrt(kappa) <= dp <= 2 * math.sqrt(kappa) * (1 + 1e-12)


@settings(max_examples=6, deadline=None)
@given(st.integers(3, 6), st.floats(0.5, 60.0))
def test_form_estimate_never_exceeds_analytic(d, kappa):
    est = estimate_form_bound(KernelSpec.hardy(kappa, d), Flavor.F, schedule=(0.2, 0.1))
    assert est.direction == LOWER_BOUND_OF_SUP
    assert est.value <= kappa * (1 + 1e-9)


def test_gaussian_trials_approach_hardy_constant_from_below():
    est = estimate_form_bound(KernelSpec.hardy(4.0, 3), Flavor.F, "gaussian")
    seq = [s["quotient"] for s in est.trial_meta["sequence"]]
    # homogeneous kernel: Gaussian trials give a width-independent fraction of kappa
    assert max(seq) <= 4.0
    assert max(seq) - min(seq) < 1e-6 * 4.0


def test_bounded_kernel_form_constant_vanishes():
    est = estimate_form_bound(KernelSpec.constant((1.0, 0.0, 0.0)), Flavor.F, "gaussian")
    seq = [s["quotient"] for s in est.trial_meta["sequence"]]
    assert seq[-1] < 1e-6
    assert all(b < a for a, b in zip(seq, seq[1:]))


@pytest.mark.parametrize("n", [2, 3])
def test_lifted_rayleigh_excess(n):
    trials = random_gaussian_trials(n, 3, 3, seed=4)
    for row in lifted_rayleigh_check(KernelSpec.hardy(4.0, 3), n, trials):
        assert row["excess"] <= 1e-6


def test_multiparticle_constant_respects_floor():
    est = estimate_multiparticle_hardy(3, 2, budget=400)
    assert 1.0 / est.value >= paper_hardy_constant(3, 2) == pytest.approx(0.5)
    assert est.trial_meta["known_lower_bound"] == pytest.approx(0.5)


def test_estimate_direction_validated():
    with pytest.raises(ValueError):
        RayleighEstimate(1.0, "sideways")


def test_unknown_trial_family():
    with pytest.raises(ValueError):
        estimate_form_bound(KernelSpec.hardy(4.0, 3), Flavor.F, "wavelet")
