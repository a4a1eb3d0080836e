import csv

import pytest

from singular_particles.analysis.phase import PhaseRow, collision_phase_scan, phase_plan_template


def test_small_scan(tmp_path):
    plan = phase_plan_template(dt=1e-3, ensemble=300, seed=4)
    scan = collision_phase_scan([4.0, 36.0], plan)
    assert [r.kappa for r in scan.rows] == [4.0, 36.0]
    lo, hi = scan.rows
    assert hi.p > lo.p
    assert lo.oracle_p == pytest.approx(0.0116685, abs=1e-6)
    assert all(r.n_errors == 0 and r.ensemble == 300 for r in scan.rows)
    path = tmp_path / "scan.csv"
    scan.write_csv(str(path))
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["kappa", "p", "stderr", "oracle_p"]
    assert float(rows[1]["p"]) == hi.p


def test_combined_stderr_uses_oracle():
    row = PhaseRow(9.0, 0.05, 0.002, oracle_p=0.04, oracle_err=1e-3, ensemble=10_000)
    assert row.combined_stderr == pytest.approx((0.04 * 0.96 / 10_000 + 1e-6) ** 0.5)
    assert row.z_score == pytest.approx(0.01 / row.combined_stderr)
    assert PhaseRow(9.0, 0.05, 0.002).z_score is None


def test_grid_must_be_sorted():
    with pytest.raises(ValueError):
        collision_phase_scan([9.0, 4.0])


def test_oracle_needs_two_particles():
    with pytest.raises(ValueError):
        collision_phase_scan([4.0], phase_plan_template(n_particles=3, ensemble=2), with_oracle=True)
