import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singular_particles.errors import NoAnalyticBound, NoAnalyticDivergence, SingularPoint, UnsupportedDim
from singular_particles.kernels import (Flavor, KernelKind, KernelSpec, divergence, eval_kernel, fd_divergence,
                                        mollify, nominal_form_bounds)

# gamma_eps * K at (1,0,0) for Hardy kappa=4, d=3, eps=0.1, by adaptive 2D quadrature
# in spherical coordinates around the evaluation point (independent of the tensor rule)
MOLLIFIED_HARDY_AT_E1 = 0.9988820689411743

unit = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: 0.1 < np.linalg.norm(v))


def test_hardy_values():
    k = KernelSpec.hardy(4, 3)
    np.testing.assert_allclose(eval_kernel(k, [1.0, 0, 0]), [1, 0, 0])
    np.testing.assert_allclose(eval_kernel(k, [2.0, 0, 0]), [0.5, 0, 0])
    np.testing.assert_allclose(eval_kernel(KernelSpec.hardy(4, 3, attracting=False), [2.0, 0, 0]), [-0.5, 0, 0])


def test_hypersurface_magnitude():
    k = KernelSpec(KernelKind.HYPERSURFACE, dim=3, beta=2.0)
    v = eval_kernel(k, [1.25, 0, 0])
    assert np.sum(v * v) == pytest.approx(1.0 / (0.25 * math.log(0.25) ** 2), rel=1e-12)


def test_divergence_examples():
    assert divergence(KernelSpec.hardy(1, 3), [1.0, 0, 0]) == pytest.approx(0.5)
    assert divergence(KernelSpec.hardy(1, 3, attracting=False), [0, 1.0, 0]) == pytest.approx(-0.5)
    k = KernelSpec.hardy(4, 4)
    y = np.array([2.0, 0, 0, 0])
    assert divergence(k, y) == pytest.approx(1.0)
    assert fd_divergence(k, y) == pytest.approx(1.0, rel=1e-6)


def test_errors():
    with pytest.raises(SingularPoint):
        eval_kernel(KernelSpec.hardy(4, 3), [0.0, 0, 0])
    with pytest.raises(UnsupportedDim):
        KernelSpec.hardy(4, 2)
    with pytest.raises(ValueError):
        KernelSpec(KernelKind.HYPERSURFACE, dim=3, beta=1.0)
    with pytest.raises(NoAnalyticDivergence):
        divergence(KernelSpec(KernelKind.HYPERSURFACE, dim=3), [1.2, 0, 0])
    with pytest.raises(NoAnalyticBound):
        nominal_form_bounds(KernelSpec(KernelKind.WEIGHTED_HARDY, kappa=1, dim=3, cap_fraction=0.5))


def test_nominal_bounds():
    recs = {r.flavor: (r.kappa, r.c_kappa) for r in nominal_form_bounds(KernelSpec.hardy(4, 3))}
    assert recs == {Flavor.F: (4, 0), Flavor.DIV_PLUS: (4, 0)}
    recs = {r.flavor: (r.kappa, r.c_kappa) for r in nominal_form_bounds(KernelSpec.hardy(9, 3, False))}
    assert recs == {Flavor.F: (9, 0), Flavor.DIV_PLUS: (0, 0)}
    s = KernelSpec.sum(KernelSpec.hardy(1, 3), KernelSpec.hardy(1, 3))
    f = [r for r in nominal_form_bounds(s) if r.flavor is Flavor.F][0]
    assert f.kappa == pytest.approx(4.0)


def test_record_round_trip():
    spec = KernelSpec.sum(KernelSpec.hardy(4, 3), KernelSpec.scaled(0.5, KernelSpec.constant([1, 0, 0])))
    assert KernelSpec.from_record(spec.to_record()) == spec
    with pytest.raises(ValueError):
        KernelSpec.from_record({"kind": "HardyAttracting", "kappa": 1, "dim": 3, "colour": 1})


def test_mollify_constant_field():
    m = mollify(KernelSpec.constant([1.0, -2.0, 0.5]), 0.3)
    np.testing.assert_allclose(m.eval(np.array([[0.1, 0.2, 0.3], [5, 5, 5]])), [[1, -2, 0.5]] * 2, atol=1e-12)


def test_mollify_hardy_against_quadrature():
    m = mollify(KernelSpec.hardy(4, 3), 0.1)
    v = m.eval(np.array([1.0, 0, 0]))
    # the exact convolution sits 1.12e-3 below K(e1) = 1; the tensor rule must reproduce it
    assert v[0] == pytest.approx(MOLLIFIED_HARDY_AT_E1, abs=2e-5)


def test_mollified_sup_grows_like_inverse_epsilon():
    base = KernelSpec.hardy(4, 3)
    sups = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        r = np.geomspace(eps * 1e-3, 4 * eps, 200)
        pts = np.stack([r, 0 * r, 0 * r], axis=-1)
        sups.append(np.max(np.linalg.norm(mollify(base, eps).eval(pts), axis=-1)))
    sups = np.array(sups)
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    assert np.all(np.isfinite(sups))
    assert np.max(sups * eps) / np.min(sups * eps) < 1.5


def test_mollifier_convergence_order():
    base = KernelSpec.hardy(4, 3)
    y = np.array([0.6, 0.5, -0.2])
    exact = eval_kernel(base, y)
    errs = [np.linalg.norm(mollify(base, e).eval(y) - exact) for e in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 50.0), st.integers(3, 6), st.floats(1e-6, 1.0))
def test_hardy_radial_profile_is_exact(kappa, dim, r):
    k = KernelSpec.hardy(kappa, dim)
    y = np.zeros(dim)
    y[-1] = r
    assert np.linalg.norm(eval_kernel(k, y)) * r == pytest.approx(math.sqrt(kappa) * (dim - 2) / 2, rel=1e-12, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 30.0), st.integers(3, 5), st.floats(0.5, 2.0), st.integers(0, 10**6))
def test_divergence_matches_finite_differences(kappa, dim, r, seed):
    u = np.random.default_rng(seed).normal(size=dim)
    y = r * u / np.linalg.norm(u)
    for spec in (KernelSpec.hardy(kappa, dim), KernelSpec.hardy(kappa, dim, attracting=False),
                 KernelSpec.scaled(0.3, KernelSpec.hardy(kappa, dim))):
        assert fd_divergence(spec, y) == pytest.approx(divergence(spec, y), rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(unit)
def test_hardy_kernel_is_odd(v):
    k = KernelSpec.hardy(7.0, 3)
    y = np.asarray(v)
    np.testing.assert_allclose(eval_kernel(k, -y), -eval_kernel(k, y))
