import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singular_particles.errors import CollisionState, DegenerateTrial
from singular_particles.kernels import KernelSpec
from singular_particles.lift import (EtaProfile, LiftedDrift, ParticleConfiguration, density_laplacian, eta_value,
                                     eval_drift, heat_kernel_envelope, invariant_density, lifted_div_bound,
                                     lifted_form_bound, lifted_mf_bound, lyapunov_residual, multiparticle_hardy_ratio,
                                     paper_hardy_constant)
from singular_particles.trials import GaussianBump, PairEnvelope, TensorProduct


def config(*blocks):
    return ParticleConfiguration.from_blocks(np.array(blocks, dtype=float))


def fd_laplacian(f, x: np.ndarray, h: float = 1e-4) -> float:
    out = 0.0
    flat = x.reshape(-1)
    for k in range(flat.size):
        e = np.zeros_like(flat)
        e[k] = h
        out += f((flat + e).reshape(x.shape)) - 2 * f(x) + f((flat - e).reshape(x.shape))
    return out / h**2


def test_configuration_basics():
    x = config([0, 0, 0], [3, 4, 0])
    assert x.min_pair_distance() == 5.0
    assert ParticleConfiguration.from_json(x.to_json()).positions.tolist() == x.positions.tolist()
    with pytest.raises(ValueError):
        ParticleConfiguration(2, 3, np.zeros(5))
    assert config([1, 2, 3], [1, 2, 3]).min_pair_distance() == 0.0


def test_eval_drift_two_particles():
    drift = LiftedDrift.uniform(KernelSpec.hardy(4, 3), 2)
    b = eval_drift(drift, config([1, 0, 0], [-1, 0, 0]))
    np.testing.assert_allclose(b, [0.25, 0, 0, -0.25, 0, 0])


def test_eval_drift_zero_field():
    drift = LiftedDrift.uniform(KernelSpec.zero(3), 4)
    x = np.random.default_rng(1).normal(size=(4, 3))
    np.testing.assert_array_equal(eval_drift(drift, ParticleConfiguration.from_blocks(x)), np.zeros(12))


def test_eval_drift_equilateral_points_to_centroid():
    # b_i = (1/N) sum_j K(x_i - x_j): by hand, with K(y) = c y / |y|^2 and unit sides,
    # b_i = (c/3) sum_j (x_i - x_j) = c (x_i - centroid)
    c = math.sqrt(4.0) / 2
    pts = np.array([[1, 0, 0], [-0.5, math.sqrt(3) / 2, 0], [-0.5, -math.sqrt(3) / 2, 0]]) / math.sqrt(3)
    b = eval_drift(LiftedDrift.uniform(KernelSpec.hardy(4, 3), 3), ParticleConfiguration.from_blocks(pts))
    np.testing.assert_allclose(b.reshape(3, 3), c * pts, atol=1e-14)
    # the SDE moves along -b: toward the centroid
    assert np.all(np.sum(-b.reshape(3, 3) * pts, axis=1) < 0)


def test_eval_drift_collision_guard():
    drift = LiftedDrift.uniform(KernelSpec.hardy(4, 3), 2)
    with pytest.raises(CollisionState):
        eval_drift(drift, config([1, 0, 0], [1, 0, 0]))


def test_particle_drifts_added():
    m = KernelSpec.constant([0, 0, 1.0])
    drift = LiftedDrift.uniform(KernelSpec.zero(3), 2, particle_drifts=[m, None])
    np.testing.assert_allclose(eval_drift(drift, config([0, 0, 0], [1, 1, 1])), [0, 0, 1, 0, 0, 0])


def test_lifted_bounds():
    assert lifted_form_bound(4, 0, 2) == (1.0, 0.0)
    # ((N-1)/N)^2 kappa at N = 1000 is 0.998001 * 4
    assert lifted_form_bound(4, 0, 1000)[0] == pytest.approx(3.992004, abs=1e-12)
    d, c = lifted_form_bound(0, 5, 3)
    assert d == 0 and c == pytest.approx(20 / 3)
    assert lifted_div_bound(4, 0, 2) == (2.0, 0.0)
    assert lifted_div_bound(2 * math.sqrt(16), 0, 2)[0] == 4.0
    assert lifted_div_bound(0, 0, 7) == (0.0, 0.0)
    assert lifted_mf_bound(4, 0, 4)[0] == pytest.approx(3 / 2 * 4)


@given(st.floats(0.01, 100), st.floats(0, 10), st.integers(2, 200))
def test_lifted_form_bound_below_kappa_and_monotone(kappa, c, n):
    d1, c1 = lifted_form_bound(kappa, c, n)
    d2, _ = lifted_form_bound(kappa, c, n + 1)
    assert d1 < kappa
    assert d2 > d1
    assert d1 == pytest.approx(((n - 1) / n) ** 2 * kappa, rel=1e-14)
    assert c1 == pytest.approx((n - 1) ** 2 / n * c, rel=1e-14)


def test_invariant_density_examples():
    assert invariant_density(4, config([0, 0, 0], [1, 0, 0])) == 1.0
    # exponent sqrt(kappa)(d-2)/(2N) = 2 * 1 / 4 = 0.5 at N = 2
    assert invariant_density(4, config([0, 0, 0], [math.e, 0, 0])) == pytest.approx(math.exp(-0.5))
    x = config([0, 0, 0], [2, 0, 0], [0, 3, 0])
    g = math.sqrt(9) / 6
    expected = (2 * 3 * math.sqrt(13)) ** (-g)
    assert invariant_density(9, x) == pytest.approx(expected, rel=1e-13)
    with pytest.raises(CollisionState):
        invariant_density(4, config([0, 0, 0], [0, 0, 0]))


@pytest.mark.parametrize("kappa,n,d", [(4, 2, 3), (4, 3, 3), (1, 3, 4), (10, 4, 3)])
def test_density_laplacian_matches_finite_differences(kappa, n, d):
    x = np.random.default_rng(n * d).normal(size=(n, d)) * 2
    fd = fd_laplacian(lambda b: invariant_density(kappa, b), x)
    assert density_laplacian(kappa, x) == pytest.approx(fd, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(3, 5), st.floats(0.0, 40.0), st.integers(0, 2**32 - 1))
def test_lyapunov_identity(n, d, kappa, seed):
    x = np.random.default_rng(seed).normal(size=(50, n, d))
    from singular_particles.lift import pair_distances
    x = x[pair_distances(x).min(axis=-1) > 1e-3]
    assert np.all(np.abs(lyapunov_residual(kappa, x)) <= 1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_drift_translation_invariant_and_swap_equivariant(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    drift = LiftedDrift.uniform(KernelSpec.hardy(5.0, 3), n)
    b = drift.eval_blocks(x)
    np.testing.assert_allclose(drift.eval_blocks(x + rng.normal(size=3)), b, rtol=1e-9, atol=1e-9)
    sw = x.copy()
    sw[[0, 1]] = sw[[1, 0]]
    bs = drift.eval_blocks(sw)
    np.testing.assert_allclose(bs[[1, 0]], b[[0, 1]], rtol=1e-12, atol=1e-12)


def test_eta_examples():
    eta = EtaProfile(4, 3, 2)
    assert eta_value(eta, 3.0) == 2.0
    assert eta_value(eta, 0.5) == pytest.approx(math.sqrt(2))
    z = config([0, 0, 0], [3, 0, 0], [0, 3, 0])
    assert heat_kernel_envelope(EtaProfile(4, 3, 3), 1.0, z) == pytest.approx(8.0)


@pytest.mark.parametrize("kappa,d,n", [(0, 3, 2), (4, 3, 2), (9, 4, 3), (15, 3, 2)])
def test_eta_blend_is_c2(kappa, d, n):
    eta = EtaProfile(kappa, d, n)
    for r0 in (1.0, 2.0):
        for order in (0, 1, 2):
            left = eta.derivative(np.array([r0 - 1e-13]), order)[0]
            right = eta.derivative(np.array([r0 + 1e-13]), order)[0]
            assert left == pytest.approx(right, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 15.9), st.integers(3, 6), st.integers(2, 5))
def test_eta_bounds(kappa, d, n):
    eta = EtaProfile(kappa, d, n)
    outside = np.concatenate([np.geomspace(1e-6, 1.0, 50), np.linspace(2.0, 50, 50)])
    assert np.all(eta(outside) >= 1.0)
    blend = np.linspace(1.0, 2.0, 4001)
    assert np.min(eta(blend)) >= eta.min_value - 1e-12
    assert 0.0 < eta.min_value <= 1.0


def test_known_hardy_constant():
    assert paper_hardy_constant(3, 2) == 0.5
    assert paper_hardy_constant(4, 2) == 2.0
    n = 10
    root = math.sqrt(1 + 3 / (2 * 4) * 9 * 8)
    assert paper_hardy_constant(3, n) == pytest.approx(1 / (1 + root))
    assert 1 / (1 + root) > 1 / n


def test_hardy_ratio_dilation_invariance():
    phi = TensorProduct((GaussianBump((0.3, 0, 0), 0.8), GaussianBump((-0.2, 0.4, 0), 1.1)))
    r1 = multiparticle_hardy_ratio(phi, 2, 3)
    r2 = multiparticle_hardy_ratio(phi.dilated(2.0), 2, 3)
    assert r1 == pytest.approx(r2, rel=1e-10)
    pe = PairEnvelope(2, 3, 0.4, 0.2, 1.0)
    assert multiparticle_hardy_ratio(pe, 2, 3) == pytest.approx(multiparticle_hardy_ratio(pe.dilated(2.0), 2, 3),
                                                                rel=1e-8)


def test_hardy_ratio_below_inverse_constant():
    rng = np.random.default_rng(3)
    for n in (2, 3):
        floor = paper_hardy_constant(3, n)
        for _ in range(5):
            bumps = tuple(GaussianBump(tuple(rng.normal(size=3)), float(rng.uniform(0.3, 2))) for _ in range(n))
            assert multiparticle_hardy_ratio(TensorProduct(bumps), n, 3) <= 1 / floor


def test_hardy_ratio_two_body_oracle():
    # N = 2, relative coordinate z = x1 - x2: int |grad phi|^2 = 2 int |grad_z u|^2 for phi = u(z) v(com);
    # sup ratio is 1 / (2 * (d-2)^2 / 4) = 2 / (d-2)^2, approached by pair envelopes as a -> (d-2)/2
    for d in (3, 4):
        vals = [multiparticle_hardy_ratio(PairEnvelope(2, d, a * (d - 2), c, 1.0), 2, d)
                for a, c in ((0.25, 0.3), (0.45, 1e-2), (0.49, 1e-4))]
        assert vals[0] < vals[1] < vals[2] < 2 / (d - 2) ** 2


def test_hardy_ratio_degenerate():
    with pytest.raises((DegenerateTrial, ValueError)):
        multiparticle_hardy_ratio(PairEnvelope(2, 3, 0.0, 1.0, np.inf), 2, 3)
