import textwrap

import pytest
from hypothesis import given, settings, strategies as st

from singular_particles.config import EXPERIMENTS, check_config, kappa_threshold_info, load_config, parse_config
from singular_particles.errors import ConfigError

BASE = """\
experiment: phase_scan
seed: 3
sim:
  dt: 1e-4
  horizon: 1.0
  ensemble: 100
analysis:
  kappa_grid: [4, 9]
"""


def levels(cfg, level):
    return [d for d in cfg.diagnostics if d.level == level]


def test_minimal_config_resolves_defaults():
    cfg = parse_config(BASE)
    assert cfg.sim["dt"] == 1e-4 and isinstance(cfg.sim["dt"], float)
    assert cfg.sim["collision_radius"] == 1e-3
    assert cfg.sim["n_particles"] == 2 and cfg.sim["dim"] == 3
    assert cfg.analysis["with_oracle"] is None or isinstance(cfg.analysis["with_oracle"], bool)
    assert not levels(cfg, "error")


def test_unknown_field_reports_line():
    text = BASE.replace("  horizon: 1.0\n", "  horizon: 1.0\n  horizon_typo: 2\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == 6
    assert "sim.horizon_typo" in str(exc.value)


def test_missing_required_field():
    text = BASE.replace("  ensemble: 100\n", "")
    errs = levels(check_config(text), "error")
    assert any(e.field == "sim.ensemble" for e in errs)


def test_low_dimension_rejected():
    cfg = check_config(BASE.replace("  dt: 1e-4\n", "  dt: 1e-4\n  dim: 2\n"))
    (err,) = [e for e in levels(cfg, "error") if e.field == "sim.dim"]
    assert err.line == 5


def test_epsilon_warnings():
    big = check_config(BASE.replace("  ensemble: 100\n", "  ensemble: 100\n  epsilon_schedule: [2e-3]\n"))
    mid = check_config(BASE.replace("  ensemble: 100\n", "  ensemble: 100\n  epsilon_schedule: [5e-4]\n"))
    small = check_config(BASE.replace("  ensemble: 100\n", "  ensemble: 100\n  epsilon_schedule: [1e-4]\n"))
    assert "exceeds the collision radius" in levels(big, "warning")[0].message
    assert "r_coll/4" in levels(mid, "warning")[0].message
    assert not levels(small, "warning")


@pytest.mark.parametrize("kappa,hit", [(16.5, True), (140, True), (4, False), (30, False)])
def test_threshold_info(kappa, hit):
    cfg = check_config(BASE.replace("[4, 9]", f"[{kappa}]"))
    info = levels(cfg, "info")
    assert bool(info) == hit
    if hit:
        assert info[0].line == 8


def test_unsorted_grid_and_unknown_experiment():
    assert levels(check_config(BASE.replace("[4, 9]", "[9, 4]")), "error")
    assert levels(check_config(BASE.replace("phase_scan", "nonsense")), "error")


def test_yaml_syntax_error_has_line():
    cfg = check_config("experiment: phase_scan\nsim: [1, 2\n")
    assert levels(cfg, "error")[0].line is not None


def test_content_hash_tracks_resolved_config():
    a, b = parse_config(BASE), parse_config(BASE.replace("seed: 3", "seed: 4"))
    assert a.content_hash() == parse_config(BASE + "\n").content_hash()
    assert a.content_hash() != b.content_hash()
    assert len(a.content_hash()) == 40


def test_sim_plan_places_pair_on_a_line():
    from singular_particles.kernels import KernelSpec
    from singular_particles.lift import LiftedDrift
    cfg = parse_config(BASE)
    plan = cfg.sim_plan(LiftedDrift.uniform(KernelSpec.hardy(4.0, 3), 2))
    assert plan.x0.pair_distances()[0] == pytest.approx(1.0)
    assert plan.seed == 3


def test_shipped_configs_validate():
    import glob
    import os
    paths = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "..", "configs", "*.yaml")))
    seen = {load_config(p).experiment for p in paths}
    assert seen == set(EXPERIMENTS)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 500.0), st.integers(3, 8))
def test_kappa_threshold_info_consistent(kappa, d):
    info = kappa_threshold_info(kappa, d)
    assert info["collides"] == (kappa > 16)
    assert info["summable"] == (kappa < 16 * (d / (d - 2)) ** 2)
