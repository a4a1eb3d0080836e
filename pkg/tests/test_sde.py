import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from singular_particles.kernels import KernelSpec
from singular_particles.lift import LiftedDrift, ParticleConfiguration
from singular_particles.sde import (PathFunctional, Scheme, SimPlan, abs_drift_functional, hardy_pair_plan,
                                    occupation_functional, run_ensemble, run_epsilon_schedule, simulate, step,
                                    trajectory_streams)


def free_plan(n=2, d=3, **kw):
    blocks = np.zeros((n, d))
    blocks[:, 0] = np.arange(n)
    drift = LiftedDrift.uniform(KernelSpec.zero(d), n)
    return SimPlan(drift=drift, x0=ParticleConfiguration.from_blocks(blocks), **kw)


def brownian_ball_hit(a: float, r0: float, horizon: float) -> float:
    """P(standard 3D Brownian motion from |x| = r0 enters the ball of radius a before horizon)."""
    return a / r0 * special.erfc((r0 - a) / math.sqrt(2 * horizon))


def test_step_zero_drift_zero_noise():
    plan = free_plan(dt=0.1, horizon=1.0)
    x = step(plan.drift, plan.x0, 0.1, np.zeros(6))
    np.testing.assert_array_equal(x.positions, plan.x0.positions)


def test_step_increment_covariance():
    rng = np.random.default_rng(0)
    plan = free_plan(dt=0.01, horizon=1.0)
    dt = 0.01
    xi = rng.standard_normal((10_000, 6))
    disp = np.array([step(plan.drift, plan.x0, dt, z).positions - plan.x0.positions for z in xi[:2000]])
    # chi-square test of the variance of each coordinate against 2 dt
    m = disp.shape[0]
    for k in range(6):
        s2 = np.sum(disp[:, k] ** 2) / (2 * dt)
        p = stats.chi2.sf(s2, m)
        assert 0.005 < p < 0.995


def test_step_repulsion_increases_distance():
    drift = LiftedDrift.uniform(KernelSpec.hardy(4, 3, attracting=False), 2)
    x0 = ParticleConfiguration.from_blocks([[0.5, 0, 0], [-0.5, 0, 0]])
    x1 = step(drift, x0, 1e-3, np.zeros(6))
    assert x1.min_pair_distance() > 1.0
    tamed = step(drift, x0, 1e-3, np.zeros(6), Scheme.TAMED_EULER)
    assert 1.0 < tamed.min_pair_distance() < x1.min_pair_distance()


def test_plan_validation():
    with pytest.raises(ValueError):
        free_plan(dt=2.0, horizon=1.0)
    with pytest.raises(ValueError):
        free_plan(dt=0.1, horizon=1.0, collision_radius=1e-13)
    with pytest.raises(ValueError):
        free_plan(dt=0.1, horizon=1.0, ensemble=0)
    with pytest.raises(ValueError):
        free_plan(dt=0.1, horizon=1.0, seed=2**64)


def test_streams_are_distinct_and_reproducible():
    a0, a1 = trajectory_streams(7, 3)
    b0, _ = trajectory_streams(7, 3)
    c0, _ = trajectory_streams(7, 4)
    x = a0.standard_normal(5)
    assert np.array_equal(x, b0.standard_normal(5))
    assert not np.array_equal(x, c0.standard_normal(5))
    assert not np.array_equal(x, a1.standard_normal(5))


def test_results_independent_of_workers_and_batching():
    plan = hardy_pair_plan(25, 3, 2, 0.3, dt=1e-3, horizon=0.2, ensemble=60, batch_size=16,
                           functionals=(abs_drift_functional(1.0),), refine_radius=0.3, diffusion_fraction=0.1)
    r1 = run_ensemble(plan, workers=1)
    r2 = run_ensemble(plan, workers=2)
    r3 = run_ensemble(replace(plan, batch_size=60), workers=1)
    assert r1.to_json(True) == r2.to_json(True) == r3.to_json(True)
    one = simulate(plan, 17)
    assert one.summary() == r1.outcomes[17].summary()


def test_discounted_occupation_is_exact():
    plan = free_plan(dt=0.01, horizon=20.0, ensemble=20, functionals=(occupation_functional(1.0),))
    res = run_ensemble(plan)
    mean, se = res.functional_means["occupation"]
    assert mean == pytest.approx(1 - math.exp(-20), abs=1e-3)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_collision_standard_error_scaling():
    plan = free_plan(dt=0.01, horizon=0.5, collision_radius=0.6)
    small = run_ensemble(replace(plan, ensemble=1000))
    large = run_ensemble(replace(plan, ensemble=10_000, batch_size=5000))
    (p1, s1), (p2, s2) = small.collision_probability, large.collision_probability
    assert s1 == pytest.approx(math.sqrt(p1 * (1 - p1) / 1000))
    assert s1 / s2 == pytest.approx(math.sqrt(10), rel=0.2)


def test_free_pair_hits_ball_like_brownian_motion():
    # zero drift: |X1 - X2| / 2 is a 3D Brownian modulus (Bessel nu = 3), closed-form hitting law
    plan = free_plan(dt=1e-3, horizon=1.0, ensemble=4000, collision_radius=0.2, batch_size=4000)
    p, _ = run_ensemble(plan).collision_probability
    oracle = brownian_ball_hit(0.1, 0.5, 1.0)
    se = math.sqrt(oracle * (1 - oracle) / 4000)
    assert abs(p - oracle) < 3 * se


def test_repulsion_never_collides():
    plan = hardy_pair_plan(9, 3, 2, 1.0, attracting=False, dt=1e-3, horizon=1.0, ensemble=500,
                           collision_radius=1e-2)
    assert run_ensemble(plan).collision_probability[0] == 0.0


def test_strong_attraction_collides_and_records_time():
    plan = hardy_pair_plan(100, 3, 2, 0.2, dt=1e-4, horizon=0.2, ensemble=100, refine_radius=0.1,
                           diffusion_fraction=0.1)
    res = run_ensemble(plan)
    assert res.collision_probability[0] > 0.5
    t = res.collision_times[res.collided]
    assert np.all((t > 0) & (t <= plan.horizon))


def test_abs_drift_functional_finite_on_survivors():
    plan = hardy_pair_plan(9, 3, 2, 1.0, dt=1e-3, horizon=0.5, ensemble=200,
                           functionals=(abs_drift_functional(),), refine_radius=0.3, diffusion_fraction=0.1)
    res = run_ensemble(plan)
    vals = np.array([o.path_functionals["abs_drift"] for o in res.outcomes if not o.collided])
    assert vals.size > 0 and np.all(np.isfinite(vals)) and np.all(vals > 0)


def test_budget_exhaustion_counts_as_collision():
    plan = hardy_pair_plan(9, 3, 2, 0.05, dt=1e-2, horizon=0.1, ensemble=20, refine_radius=1.0,
                           diffusion_fraction=0.01, max_substeps=3, bridge_crossing=False)
    res = run_ensemble(plan)
    assert res.summary()["n_budget_exhausted"] > 0
    flagged = [o for o in res.outcomes if o.budget_exhausted]
    assert all(o.collided for o in flagged)


def test_epsilon_schedule_approaches_unmollified():
    plan = hardy_pair_plan(9, 3, 2, 1.0, dt=1e-3, horizon=1.0, ensemble=400, collision_radius=0.04,
                           epsilon_schedule=(0.16, 0.01), refine_radius=0.3, diffusion_fraction=0.1,
                           batch_size=400)
    runs = run_epsilon_schedule(plan)
    raw = run_ensemble(replace(plan, epsilon_schedule=()))
    (p_big, s_big), (p_small, s_small) = [r.collision_probability for _, r in runs]
    p_raw, s_raw = raw.collision_probability
    # mollification weakens the pull inside the eps ball, so fewer r_coll hits at large eps
    assert p_big <= p_small + 3 * s_small
    assert abs(p_small - p_raw) <= 3 * max(s_raw, 1e-3)


def test_snapshots_and_dump():
    plan = free_plan(dt=0.01, horizon=1.0, ensemble=5, snapshot_times=(0.5, 1.0), dump_stride=10)
    res = run_ensemble(plan)
    assert res.summary()["n_errors"] == 0
    snaps = res.snapshot_positions()
    assert snaps.shape == (5, 2, 6)
    np.testing.assert_array_equal(snaps[:, 1], res.terminal_positions())
    assert res.outcomes[0].path.shape == (11, 7)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**63), st.integers(1, 40))
def test_any_trajectory_reproducible_alone(seed, index):
    plan = hardy_pair_plan(4, 3, 2, 1.0, dt=1e-2, horizon=0.1, ensemble=41, seed=seed)
    a = simulate(plan, index)
    b = run_ensemble(plan).outcomes[index]
    assert a.summary() == b.summary()


def test_custom_functional():
    f = PathFunctional("x_first", lambda blocks, b: blocks[:, 0, 0], 0.0)
    plan = free_plan(dt=0.5, horizon=1.0, ensemble=3, functionals=(f,))
    res = run_ensemble(plan)
    # left endpoint: first step sees x_1 = 0 exactly
    assert all(np.isfinite(res.functional_values("x_first")))
