"""Trial functions for Rayleigh quotients, with the integrals they need.

Radial integrals use adaptive quadrature in t = log r. Gaussian expectations
of the Hardy-type moments 1/|Y|^2 and Y1.Y2/(|Y1|^2 |Y2|^2) use the identity
1/|y|^2 = int_0^inf exp(-s|y|^2) ds, which turns them into one- or
two-dimensional integrals of closed-form Gaussian transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DegenerateTrial, UnsupportedDim


def sphere_area(dim: int) -> float:
    """|S^{dim-1}|."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def radial_integral(g, dim: int, breaks=(), rel: float = 1e-11, span: float = 60.0) -> float:
    """int_{R^d} g(|y|) dy for a scalar radial profile g.

    Integrates in t = log r from ``span`` e-folds below the smallest breakpoint to
    ``span`` past the largest, then closes the outer power-law tail analytically
    from the local decay rate. The inner remainder is below double precision for
    any integrand that is integrable at the origin with margin.
    """
    f = lambda t: float(g(math.exp(t))) * math.exp(dim * t)
    pts = sorted(math.log(b) for b in breaks if b > 0) or [0.0]
    top = pts[-1] + span
    edges = [pts[0] - span] + list(np.arange(pts[0] - span + 10.0, pts[0], 10.0)) + pts + list(np.arange(pts[-1] + 10.0, top, 10.0)) + [top]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=rel, limit=500)
        total += val
    f1, f2 = f(top - 1.0), f(top)
    if f2 > 0 and f1 > f2:
        total += f2 / math.log(f1 / f2)
    return sphere_area(dim) * total


# -- trial families -----------------------------------------------------------


@dataclass(frozen=True)
class RadialPower:
    """phi(y) = (R^2 + |y|^2)^{-p/2}, p = exponent + eps_reg, R = cutoff_radius.

    Below R the power law is cut off to a smooth core. Dirichlet energy is
    finite iff 2p > d - 2; the L^2 norm is finite only for 2p > d, so these
    trials are meant for kernels with no additive constant.
    """

    eps_reg: float
    exponent: float
    cutoff_radius: float = 1.0
    domain_dim: int = 3

    def __post_init__(self):
        if self.domain_dim < 3:
            raise UnsupportedDim("dimension must be >= 3")
        if not self.cutoff_radius > 0:
            raise DegenerateTrial("cutoff radius must be positive")
        if not 2 * self.power > self.domain_dim - 2:
            raise DegenerateTrial("power too small: Dirichlet energy diverges at infinity")

    @classmethod
    def critical(cls, dim: int, eps_reg: float, cutoff_radius: float = 1.0) -> "RadialPower":
        return cls(eps_reg, (dim - 2) / 2.0, cutoff_radius, dim)

    @property
    def power(self) -> float:
        return self.exponent + self.eps_reg

    def profile(self, r):
        return (self.cutoff_radius**2 + np.asarray(r) ** 2) ** (-self.power / 2)

    def dprofile(self, r):
        r = np.asarray(r)
        return -self.power * r * (self.cutoff_radius**2 + r * r) ** (-self.power / 2 - 1)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.profile(np.sqrt(np.sum(x * x, axis=-1)))

    def dilated(self, s: float) -> "RadialPower":
        """Trial proportional to phi(s x)."""
        return RadialPower(self.eps_reg, self.exponent, self.cutoff_radius / s, self.domain_dim)

    def energy(self) -> float:
        return radial_integral(lambda r: self.dprofile(r) ** 2, self.domain_dim, (self.cutoff_radius,))


@dataclass(frozen=True)
class GaussianBump:
    """phi(x) = exp(-|x - center|^2 / (2 width^2))."""

    center: tuple
    width: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.width > 0:
            raise DegenerateTrial("width must be positive")

    @classmethod
    def centered(cls, dim: int, width: float) -> "GaussianBump":
        return cls((0.0,) * dim, width)

    @property
    def domain_dim(self) -> int:
        return len(self.center)

    def profile(self, r):
        return np.exp(-np.asarray(r) ** 2 / (2 * self.width**2))

    def dprofile(self, r):
        r = np.asarray(r)
        return -r / self.width**2 * self.profile(r)

    def value(self, x) -> np.ndarray:
        y = np.asarray(x, dtype=float) - np.asarray(self.center)
        return np.exp(-np.sum(y * y, axis=-1) / (2 * self.width**2))

    def norm2(self) -> float:
        return (math.pi * self.width**2) ** (self.domain_dim / 2)

    def energy(self) -> float:
        return self.norm2() * self.domain_dim / (2 * self.width**2)

    @property
    def variance(self) -> float:
        """Per-coordinate variance of the probability density phi^2 / ||phi||^2."""
        return self.width**2 / 2

    def dilated(self, s: float) -> "GaussianBump":
        return GaussianBump(tuple(c / s for c in self.center), self.width / s)


@dataclass(frozen=True)
class TensorProduct:
    """phi(x_1, ..., x_N) = prod_k phi_k(x_k) over consecutive coordinate blocks."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise DegenerateTrial("empty tensor product")

    @property
    def domain_dim(self) -> int:
        return sum(f.domain_dim for f in self.factors)

    @property
    def block_dims(self) -> list[int]:
        return [f.domain_dim for f in self.factors]

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        s = 0
        for f in self.factors:
            out = out * f.value(x[..., s:s + f.domain_dim])
            s += f.domain_dim
        return out

    def norm2(self) -> float:
        return float(np.prod([f.norm2() for f in self.factors]))

    def energy(self) -> float:
        n2 = self.norm2()
        return n2 * sum(f.energy() / f.norm2() for f in self.factors)

    def dilated(self, s: float) -> "TensorProduct":
        return TensorProduct(tuple(f.dilated(s) for f in self.factors))


@dataclass(frozen=True)
class PairEnvelope:
    """phi(x) = prod_{i<j} (|x_i - x_j|^2 + core^2)^{-a/2} exp(-|x|^2 / (2 sigma^2)) on R^{Nd}."""

    n_particles: int
    dim: int
    pair_exponent: float
    core: float
    envelope_width: float

    def __post_init__(self):
        if self.dim < 3:
            raise UnsupportedDim("dimension must be >= 3")
        if self.n_particles < 2:
            raise DegenerateTrial("need at least two particles")
        if self.pair_exponent < 0 or not self.core > 0 or not self.envelope_width > 0:
            raise DegenerateTrial("need a >= 0, core > 0, envelope width > 0")

    @property
    def domain_dim(self) -> int:
        return self.n_particles * self.dim

    def dilated(self, s: float) -> "PairEnvelope":
        return PairEnvelope(self.n_particles, self.dim, self.pair_exponent, self.core / s,
                            self.envelope_width / s)

    def value(self, x) -> np.ndarray:
        blocks = np.asarray(x, dtype=float).reshape(np.shape(x)[:-1] + (self.n_particles, self.dim))
        i, j = np.triu_indices(self.n_particles, 1)
        y = blocks[..., i, :] - blocks[..., j, :]
        r2 = np.sum(y * y, axis=-1)
        pair = np.prod((r2 + self.core**2) ** (-self.pair_exponent / 2), axis=-1)
        return pair * np.exp(-np.sum(blocks * blocks, axis=(-2, -1)) / (2 * self.envelope_width**2))


# -- Gaussian Hardy moments ----------------------------------------------------


def inverse_square_moment(mean, var: float, dim: int) -> float:
    """E 1/|Y|^2 for Y ~ N(mean, var I_d)."""
    m2 = float(np.sum(np.asarray(mean, dtype=float) ** 2))
    if m2 == 0.0:
        return 1.0 / (var * (dim - 2))
    f = lambda s: (1 + 2 * s * var) ** (-dim / 2) * math.exp(-s * m2 / (1 + 2 * s * var))
    scale = 1.0 / max(var, m2 / dim)
    a, _ = integrate.quad(f, 0.0, scale, epsabs=0.0, epsrel=1e-12, limit=200)
    b, _ = integrate.quad(f, scale, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return a + b


def cross_moment(mean1, mean2, cov: np.ndarray, dim: int) -> float:
    """E[Y1.Y2 / (|Y1|^2 |Y2|^2)] for (Y1, Y2) jointly Gaussian with covariance cov (x) I_d."""
    m = np.stack([np.asarray(mean1, dtype=float), np.asarray(mean2, dtype=float)])  # (2, d)
    c = np.asarray(cov, dtype=float)
    cinv = np.linalg.inv(c)
    base = float(np.einsum("ak,ab,bk->", m, cinv, m))
    det_c = float(np.linalg.det(c))
    cm = cinv @ m

    def integrand(t2, t1):
        s1, s2 = math.exp(t1), math.exp(t2)
        p = cinv + 2 * np.diag([s1, s2])
        det_p = p[0, 0] * p[1, 1] - p[0, 1] * p[1, 0]
        pinv = np.array([[p[1, 1], -p[0, 1]], [-p[1, 0], p[0, 0]]]) / det_p
        mp = pinv @ cm
        quad_form = float(np.einsum("ak,ab,bk->", mp, p, mp))
        z = (det_c * det_p) ** (-dim / 2) * math.exp(-0.5 * (base - quad_form))
        return z * (dim * pinv[0, 1] + float(mp[0] @ mp[1])) * s1 * s2

    lo = math.log(1e-14 / max(np.max(np.diag(c)), 1e-300))
    hi = math.log(1e14 / min(np.min(np.diag(c)), 1e300))
    val, _ = integrate.dblquad(integrand, lo, hi, lo, hi, epsabs=1e-13, epsrel=1e-9)
    return val


# -- Monte-Carlo estimators for pair-envelope trials ----------------------------


@dataclass
class HardyRatioSample:
    ratio: float
    stderr: float
    evaluations: int
    numerator: float = field(default=float("nan"))
    denominator: float = field(default=float("nan"))


def _pair_log_factor_grad(blocks: np.ndarray, a: float, core: float):
    """(log P, grad log P) of P = prod_{i<j} (r_ij^2 + core^2)^{-a/2}."""
    n = blocks.shape[-2]
    logp = np.zeros(blocks.shape[:-2])
    grad = np.zeros_like(blocks)
    for i in range(n):
        for j in range(i + 1, n):
            y = blocks[..., i, :] - blocks[..., j, :]
            q = np.sum(y * y, axis=-1) + core**2
            logp += -0.5 * a * np.log(q)
            g = -a * y / q[..., None]
            grad[..., i, :] += g
            grad[..., j, :] -= g
    return logp, grad


def pair_envelope_ratio_mc(phi: PairEnvelope, n_samples: int, seed: int) -> HardyRatioSample:
    """Sum_{i<j} int phi^2/r_ij^2 / int |grad phi|^2 by importance sampling.

    Each numerator term samples from phi_G^2 / r_ij^2 (phi_G the Gaussian
    envelope), which is exact to sample and removes the 1/r^2 singularity from
    the weights; the denominator samples from phi_G^2.
    """
    n, d = phi.n_particles, phi.dim
    v = phi.envelope_width**2 / 2  # per-coordinate variance under phi_G^2
    a, core = phi.pair_exponent, phi.core
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    # denominator: E |grad log P - x / sigma^2|^2 P^2 under N(0, v)
    x = math.sqrt(v) * rng.standard_normal((n_samples, n, d))
    logp, glog = _pair_log_factor_grad(x, a, core)
    w = np.exp(2 * logp)
    g = glog - x / phi.envelope_width**2
    den_vals = w * np.sum(g * g, axis=(-2, -1))
    # numerator: per pair, y^2 ~ Gamma((d-2)/2, 4v) with uniform direction, midpoint ~ N(0, v/2)
    num_vals = np.zeros(n_samples)
    for i in range(n):
        for j in range(i + 1, n):
            xs = math.sqrt(v) * rng.standard_normal((n_samples, n, d))
            r = np.sqrt(rng.gamma((d - 2) / 2, 4 * v, n_samples))
            u = rng.standard_normal((n_samples, d))
            y = r[:, None] * u / np.linalg.norm(u, axis=1, keepdims=True)
            mid = math.sqrt(v / 2) * rng.standard_normal((n_samples, d))
            xs[:, i] = mid + y / 2
            xs[:, j] = mid - y / 2
            lp, _ = _pair_log_factor_grad(xs, a, core)
            # Z_ij / ||phi_G||^2 = E_{phi_G^2} 1/|y|^2 = 1 / (2 v (d - 2))
            num_vals += np.exp(2 * lp) / (2 * v * (d - 2))
    num, den = num_vals.mean(), den_vals.mean()
    ratio = num / den
    # delta-method error of a ratio of independent means
    var = (num_vals.var(ddof=1) / num**2 + den_vals.var(ddof=1) / den**2) / n_samples
    evals = n_samples * (1 + n * (n - 1) // 2)
    return HardyRatioSample(float(ratio), float(abs(ratio) * math.sqrt(var)), evals, float(num), float(den))


def pair_envelope_ratio_exact(phi: PairEnvelope) -> HardyRatioSample:
    """N=2 ratio by the centre-of-mass / relative split: a radial quadrature in R^d."""
    if phi.n_particles != 2:
        raise ValueError("exact reduction needs two particles")
    d, a, core, sig = phi.dim, phi.pair_exponent, phi.core, phi.envelope_width
    # phi = A(u) B(y), u = (x1+x2)/2, y = x1-x2, A = exp(-|u|^2/sig^2), B radial in y
    B = lambda r: (r * r + core**2) ** (-a / 2) * math.exp(-r * r / (4 * sig**2))
    dB = lambda r: B(r) * (-a * r / (r * r + core**2) - r / (2 * sig**2))
    num = radial_integral(lambda r: B(r) ** 2 / (r * r), d, (core, sig))
    nb = radial_integral(lambda r: B(r) ** 2, d, (core, sig))
    eb = radial_integral(lambda r: dB(r) ** 2, d, (core, sig))
    # |grad_x phi|^2 = |grad_u phi|^2 / 2 + 2 |grad_y phi|^2 and ||grad A||^2 / ||A||^2 = d / sig^2
    den = 0.5 * (d / sig**2) * nb + 2.0 * eb
    return HardyRatioSample(num / den, 0.0, 1, num, den)
