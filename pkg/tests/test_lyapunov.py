import numpy as np
import pytest

from singular_particles.analysis.lyapunov import lyapunov_audit, random_configurations
from singular_particles.lift import pair_distances


@pytest.mark.parametrize("kappa,d,n", [(4.0, 3, 2), (4.0, 3, 3), (1.0, 4, 3)])
def test_audit_residual_small(kappa, d, n):
    audit = lyapunov_audit(kappa, d, n, n_points=200, seed=1)
    assert audit.residuals.shape == (200,)
    assert audit.max_residual <= 1e-8
    assert audit.to_record()["verdicts"]["below_1e-8"]


def test_configurations_separated_and_reproducible():
    x = random_configurations(3, 4, 500, seed=2, min_separation=0.05)
    assert x.shape == (500, 4, 3)
    assert pair_distances(x).min() >= 0.05
    np.testing.assert_array_equal(x, random_configurations(3, 4, 500, seed=2, min_separation=0.05))
