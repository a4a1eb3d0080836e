import math

import numpy as np
import pytest
from scipy import special

from singular_particles.analysis.feynman_kac import (feynman_kac_check, free_resolvent_3d, gaussian_profile,
                                                     radial_resolvent, shell_bump)
from singular_particles.errors import TailBoundTooLarge


@pytest.mark.parametrize("lam", [1.0, 3.0])
@pytest.mark.parametrize("r0", [0.5, 1.0, 2.0])
def test_bvp_matches_green_function(lam, r0):
    f = gaussian_profile(1.0)
    assert radial_resolvent(0.0, 3, f, lam, r0) == pytest.approx(free_resolvent_3d(f, lam, 3, r0), rel=1e-6)


def test_constant_source_gives_inverse_lambda():
    one = lambda r: np.ones_like(np.asarray(r, dtype=float))
    assert radial_resolvent(4.0, 3, one, 2.0, 1.0) == pytest.approx(0.5, rel=1e-6)


def test_zero_source():
    zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    assert radial_resolvent(4.0, 3, zero, 1.0, 1.0) == 0.0
    rep = feynman_kac_check(4.0, 3, zero, ensemble=8, dt=1e-2)
    assert rep.mc == 0.0 and rep.bvp == 0.0 and rep.passed


def test_shell_bump_support_and_peak():
    f = shell_bump(1.0, 2.0)
    r = np.array([0.5, 1.0, 1.5, 2.0, 2.5])
    assert f(r) == pytest.approx([0.0, 0.0, 1.0, 0.0, 0.0])


@pytest.mark.parametrize("kappa,lam", [(25.0, 1.0), (36.0, 1.0), (36.0, 4.0)])
def test_killed_constant_source_matches_laplace_transform(kappa, lam):
    # u = (1 - E e^{-lam tau}) / lam; R = |Z|/2 is Bessel with index mu = nu/2 - 1 and
    # E_r e^{-lam tau_a} = r^{-mu} K_mu(r sqrt(2 lam)) / (a^{-mu} K_mu(a sqrt(2 lam)))
    nu = 3 - math.sqrt(kappa) / 4
    mu, s = nu / 2 - 1, math.sqrt(2 * lam)
    r, a = 0.5, 5e-4
    laplace = (r ** -mu * special.kv(mu, r * s)) / (a ** -mu * special.kv(mu, a * s))
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))
    assert radial_resolvent(kappa, 3, one, lam, 1.0, 1e-3) == pytest.approx((1 - laplace) / lam, rel=1e-5)


def test_small_monte_carlo_agrees():
    rep = feynman_kac_check(0.0, 3, gaussian_profile(1.0), ensemble=400, dt=1e-2, seed=3)
    assert abs(rep.mc - rep.bvp) <= 4 * rep.mc_stderr + rep.tail_bound


def test_short_horizon_rejected():
    with pytest.raises(TailBoundTooLarge):
        feynman_kac_check(0.0, 3, gaussian_profile(1.0), horizon=0.5, ensemble=8)


def test_lambda_below_one_rejected():
    with pytest.raises(ValueError):
        feynman_kac_check(0.0, 3, gaussian_profile(1.0), lam=0.5)
