import math

import numpy as np
import pytest

from singular_particles.analysis.feynman_kac import gaussian_profile
from singular_particles.analysis.krylov import krylov_functional, krylov_rhs, lifted_q_threshold
from singular_particles.kernels import KernelSpec
from singular_particles.sde import hardy_pair_plan


def small_plan(**kw):
    kw.setdefault("ensemble", 200)
    return hardy_pair_plan(1.0, 3, 2, 1.0, dt=1e-2, horizon=3.0, seed=9, stop_on_collision=False, **kw)


def test_q_threshold():
    assert lifted_q_threshold(3, 2) == 4.0
    assert lifted_q_threshold(1, 2) == 2.0
    with pytest.raises(ValueError):
        krylov_functional(small_plan(), KernelSpec.hardy(1.0, 3), gaussian_profile(), 5.0, q=4.0)


def test_rhs_closed_form():
    # |g|^2 = c^2 / r^2 with c = sqrt(kappa)(d-2)/2, so the integral is 4 pi c^2 sqrt(pi / (2q))
    q, c = 4.1, 0.5
    exact = (4 * math.pi * c * c * math.sqrt(math.pi / (2 * q))) ** (1 / q)
    assert krylov_rhs(KernelSpec.hardy(1.0, 3), gaussian_profile(1.0), q, 3) == pytest.approx(exact, rel=1e-8)


def test_zero_profile_gives_zero_pair():
    zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    rep = krylov_functional(small_plan(), KernelSpec.hardy(1.0, 3), zero, 5.0)
    assert (rep.lhs, rep.rhs) == (0.0, 0.0)


def test_degree_one_homogeneity():
    g, f = KernelSpec.hardy(1.0, 3), gaussian_profile(1.0)
    a = krylov_functional(small_plan(), g, f, 5.0)
    b = krylov_functional(small_plan(), g, lambda r: 3.0 * f(r), 5.0)
    assert b.lhs == pytest.approx(3.0 * a.lhs, rel=1e-12)
    assert b.rhs == pytest.approx(3.0 * a.rhs, rel=1e-12)


def test_lhs_bounded_and_non_increasing_in_lambda():
    g, f = KernelSpec.hardy(1.0, 3), gaussian_profile(1.0)
    reps = [krylov_functional(small_plan(), g, f, lam, f_sup=1.0) for lam in (5.0, 10.0, 20.0)]
    lhs = [r.lhs for r in reps]
    assert all(np.isfinite(lhs)) and lhs[0] >= lhs[1] >= lhs[2] > 0
    assert all(r.ratio < 1.0 for r in reps)
