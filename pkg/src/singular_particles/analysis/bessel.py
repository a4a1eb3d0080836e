"""Two-body reduction: the pair distance of the N=2 Hardy system is a Bessel process.

With Z = X_1 - X_2 one has dZ = -K(Z) dt + 2 dW, and R = |Z|/2 satisfies
dR = (nu - 1)/(2R) dt + dbeta with nu = d - sqrt(kappa)(d-2)/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import interpolate, linalg, special

from ..errors import GridUnderresolved, UnsupportedDim


def bessel_dimension(kappa: float, dim: int) -> float:
    if dim < 3:
        raise UnsupportedDim("dimension must be >= 3")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    return dim - math.sqrt(kappa) * (dim - 2) / 4.0


def origin_hit_probability(nu: float, r0: float, horizon: float) -> float:
    """Closed form P(Bessel(nu) from r0 reaches 0 before horizon), for nu < 2."""
    if nu >= 2:
        return 0.0
    return float(special.gammaincc(1.0 - nu / 2.0, r0 * r0 / (2.0 * horizon)))


def _tridiag_rows(a: np.ndarray, b: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Central-difference stencil of a u'' + b u' on a uniform grid: (lower, diag, upper)."""
    lo = a / h**2 - b / (2 * h)
    di = -2 * a / h**2
    up = a / h**2 + b / (2 * h)
    return lo, di, up


def _solve_backward(x: np.ndarray, a: np.ndarray, b: np.ndarray, horizon: float,
                    n_time: int, rannacher: int = 4) -> np.ndarray:
    """u_t = a u_xx + b u_x, u(0)=0 inside, u=1 at x[0], u=0 at x[-1]; CN with BE start-up.

    Time levels are graded quadratically so the initial boundary layer is resolved.
    """
    h = x[1] - x[0]
    lo, di, up = _tridiag_rows(a[1:-1], b[1:-1], h)
    m = len(x) - 2
    u = np.zeros(m)
    times = horizon * (np.arange(n_time + 1) / n_time) ** 2
    for k in range(n_time):
        tau = times[k + 1] - times[k]
        theta = 1.0 if k < rannacher else 0.5
        ab = np.zeros((3, m))
        ab[0, 1:] = -theta * tau * up[:-1]
        ab[1] = 1.0 - theta * tau * di
        ab[2, :-1] = -theta * tau * lo[1:]
        rhs = u.copy()
        if theta < 1.0:
            lu = di * u
            lu[1:] += lo[1:] * u[:-1]
            lu[:-1] += up[:-1] * u[1:]
            lu[0] += lo[0] * 1.0
            rhs += (1.0 - theta) * tau * lu
        # left Dirichlet value 1 enters through the first row at both levels
        rhs[0] += theta * tau * lo[0] * 1.0
        u = linalg.solve_banded((1, 1), ab, rhs)
    return np.concatenate([[1.0], u, [0.0]])


def _log_grid_solve(nu: float, r0: float, threshold: float, horizon: float, n_nodes: int,
                    r_max: float) -> float:
    x = np.linspace(math.log(threshold), math.log(r_max), n_nodes)
    e2 = np.exp(-2.0 * x)
    u = _solve_backward(x, 0.5 * e2, 0.5 * (nu - 2.0) * e2, horizon, n_nodes)
    return float(interpolate.CubicSpline(x, u)(math.log(r0)))


def _scale_grid_solve(nu: float, r0: float, horizon: float, n_nodes: int, r_max: float) -> float:
    # natural scale y = r^{2-nu} removes the drift; the origin is a regular absorbing point
    p = 2.0 - nu
    y = np.linspace(0.0, r_max**p, n_nodes)
    yy = np.maximum(y, y[1] * 1e-3)
    a = 0.5 * p * p * yy ** ((2.0 - 2.0 * nu) / p)
    u = _solve_backward(y, a, np.zeros_like(y), horizon, n_nodes)
    return float(interpolate.CubicSpline(y, u)(r0**p))


def bessel_hit_probability(nu: float, r0: float, threshold: float, horizon: float,
                           n_nodes: int = 2000, tol: float = 1e-3, return_error: bool = False):
    """P(Bessel(nu) from r0 reaches ``threshold`` before ``horizon``.

    Backward Kolmogorov problem solved by Crank-Nicolson on a log-spaced grid
    (natural-scale grid when threshold = 0 and nu < 2), at two resolutions;
    returns the Richardson extrapolation of the pair, and with ``return_error``
    also the coarse/fine discrepancy as an error estimate.
    """
    if not r0 > threshold >= 0:
        raise ValueError("need r0 > threshold >= 0")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if threshold == 0 and nu >= 2:
        return (0.0, 0.0) if return_error else 0.0
    r_max = r0 + 12.0 * math.sqrt(horizon) + 1.0
    if threshold == 0:
        solve = lambda n: _scale_grid_solve(nu, r0, horizon, n, r_max)
    else:
        solve = lambda n: _log_grid_solve(nu, r0, threshold, horizon, n, r_max)
    coarse, fine = solve(n_nodes), solve(2 * n_nodes)
    if abs(fine - coarse) > tol:
        raise GridUnderresolved(f"grid pair disagrees by {abs(fine - coarse):.2e}", value=fine)
    val = float(min(1.0, max(0.0, (4.0 * fine - coarse) / 3.0)))
    return (val, abs(fine - coarse)) if return_error else val


@dataclass(frozen=True)
class BesselOracle:
    """Pair-distance law of the two-particle Hardy system (kappa, d)."""

    kappa: float
    dim: int

    @property
    def nu(self) -> float:
        return bessel_dimension(self.kappa, self.dim)

    @property
    def hits_zero(self) -> bool:
        return self.nu < 2.0

    def collision_probability(self, pair_distance: float, collision_radius: float, horizon: float,
                              **kw) -> float:
        """P(|X_1 - X_2| < collision_radius before horizon) from the given initial distance."""
        return bessel_hit_probability(self.nu, pair_distance / 2.0, collision_radius / 2.0, horizon, **kw)

    def radial_density(self, r: np.ndarray, r0: float, t: float) -> np.ndarray:
        """Transition density of R at time t from r0, for nu >= 2."""
        r = np.asarray(r, dtype=float)
        mu = self.nu / 2.0 - 1.0
        z = r * r0 / t
        # ive keeps the exponential scaling finite for large z
        log_pref = np.log(r / t) + mu * np.log(r / r0) - (r - r0) ** 2 / (2 * t)
        return np.exp(log_pref) * special.ive(mu, z)
