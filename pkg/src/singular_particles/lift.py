"""Lifting pair kernels to a drift on R^{Nd}, and the explicit objects built on it.

The particle system is dZ = -b(Z) dt + sqrt(2) dB on R^{Nd} with
b_i(x) = (1/N) sum_{j != i} K_ij(x_i - x_j) + M_i(x_i).
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CollisionState, DegenerateTrial, UnsupportedDim
from .kernels import SINGULARITY_GUARD, KernelKind, KernelSpec, MollifiedKernel, divergence, eval_kernel


@dataclass(frozen=True)
class ParticleConfiguration:
    n_particles: int
    dim: int
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1)
        if self.n_particles < 2:
            raise ValueError("need at least two particles")
        if self.dim < 3:
            raise UnsupportedDim("dimension must be >= 3")
        if pos.size != self.n_particles * self.dim:
            raise ValueError(f"expected {self.n_particles * self.dim} coordinates, got {pos.size}")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_blocks(cls, blocks) -> "ParticleConfiguration":
        blocks = np.asarray(blocks, dtype=float)
        return cls(blocks.shape[0], blocks.shape[1], blocks.reshape(-1))

    @property
    def blocks(self) -> np.ndarray:
        return self.positions.reshape(self.n_particles, self.dim)

    def pair_distances(self) -> np.ndarray:
        """Condensed vector of |x_i - x_j| for i < j."""
        return pair_distances(self.blocks)

    def min_pair_distance(self) -> float:
        return float(self.pair_distances().min())

    def translated(self, shift) -> "ParticleConfiguration":
        return ParticleConfiguration.from_blocks(self.blocks + np.asarray(shift, dtype=float))

    def to_json(self) -> str:
        return json.dumps({"n_particles": self.n_particles, "dim": self.dim,
                           "positions": self.positions.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ParticleConfiguration":
        rec = json.loads(text)
        return cls(int(rec["n_particles"]), int(rec["dim"]), np.asarray(rec["positions"], dtype=float))


@functools.lru_cache(maxsize=64)
def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(n, k=1)
    i.flags.writeable = False
    j.flags.writeable = False
    return i, j


def pair_distances(blocks: np.ndarray) -> np.ndarray:
    """Pair distances for configurations of shape (..., N, d) -> (..., N(N-1)/2)."""
    i, j = pair_indices(blocks.shape[-2])
    diff = blocks[..., i, :] - blocks[..., j, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _as_blocks(x, n: int, d: int) -> tuple[np.ndarray, bool]:
    if isinstance(x, ParticleConfiguration):
        if (x.n_particles, x.dim) != (n, d):
            raise ValueError("configuration shape does not match the drift")
        return x.blocks, True
    arr = np.asarray(x, dtype=float)
    if arr.shape[-2:] != (n, d):
        arr = arr.reshape(arr.shape[:-1] + (n, d))
    return arr, False


def _is_odd(kernel) -> bool:
    if isinstance(kernel, MollifiedKernel):
        return _is_odd(kernel.base)
    kind = kernel.kind
    if kind in (KernelKind.HARDY_ATTRACTING, KernelKind.HARDY_REPULSING, KernelKind.HYPERSURFACE):
        return True
    if kind is KernelKind.BOUNDED_SMOOTH:
        return not any(kernel.vector)
    if kind in (KernelKind.SUM, KernelKind.SCALED):
        return all(_is_odd(c) for c in kernel.components)
    return False


@dataclass(frozen=True)
class LiftedDrift:
    """b on R^{Nd} from an N x N table of pair kernels (diagonal ignored)."""

    kernel_matrix: tuple
    n_particles: int
    dim: int
    particle_drifts: tuple | None = None
    _odd_pairs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_particles
        km = tuple(tuple(row) for row in self.kernel_matrix)
        if len(km) != n or any(len(row) != n for row in km):
            raise ValueError("kernel_matrix must be N x N")
        for i in range(n):
            for j in range(n):
                if i != j and km[i][j].dim != self.dim:
                    raise UnsupportedDim("kernel dimension mismatch")
        object.__setattr__(self, "kernel_matrix", km)
        if self.particle_drifts is not None:
            pd = tuple(self.particle_drifts)
            if len(pd) != n:
                raise ValueError("need one per-particle drift per particle")
            object.__setattr__(self, "particle_drifts", pd)
        odd = tuple((i, j) for i in range(n) for j in range(i + 1, n)
                    if km[i][j] == km[j][i] and _is_odd(km[i][j]))
        object.__setattr__(self, "_odd_pairs", odd)

    @classmethod
    def uniform(cls, kernel, n_particles: int, particle_drifts: Sequence | None = None) -> "LiftedDrift":
        km = tuple(tuple(None if i == j else kernel for j in range(n_particles)) for i in range(n_particles))
        return cls(km, n_particles, kernel.dim, None if particle_drifts is None else tuple(particle_drifts))

    def eval_blocks(self, blocks: np.ndarray) -> np.ndarray:
        """Vectorized b for configurations of shape (..., N, d)."""
        n, d = self.n_particles, self.dim
        blocks = np.asarray(blocks, dtype=float)
        out = np.zeros_like(blocks)
        odd = set(self._odd_pairs)
        for i in range(n):
            for j in range(i + 1, n):
                y = blocks[..., i, :] - blocks[..., j, :]
                kij, kji = self.kernel_matrix[i][j], self.kernel_matrix[j][i]
                _guard_pair(kij, y)
                vij = kij.eval(y)
                if (i, j) in odd:
                    vji = -vij
                else:
                    _guard_pair(kji, -y)
                    vji = kji.eval(-y)
                out[..., i, :] += vij
                out[..., j, :] += vji
        out /= n
        if self.particle_drifts is not None:
            for i, m in enumerate(self.particle_drifts):
                if m is not None:
                    out[..., i, :] += m.eval(blocks[..., i, :])
        return out


def _guard_pair(kernel, y: np.ndarray) -> None:
    if getattr(kernel, "is_singular", False):
        if np.any(kernel.singular_distance(y) < SINGULARITY_GUARD):
            raise CollisionState("pair within the singularity guard of its kernel")


def eval_drift(drift: LiftedDrift, x):
    """b(x); returns a flat R^{Nd} vector for a ParticleConfiguration, else block array."""
    blocks, is_config = _as_blocks(x, drift.n_particles, drift.dim)
    out = drift.eval_blocks(blocks)
    return out.reshape(-1) if is_config else out


# -- lifted form-bounds ---------------------------------------------------


def lifted_form_bound(kappa: float, c_kappa: float, n_particles: int) -> tuple[float, float]:
    n = n_particles
    return (n - 1) ** 2 / n**2 * kappa, (n - 1) ** 2 / n * c_kappa


def lifted_div_bound(kappa_plus: float, c_kappa_plus: float, n_particles: int) -> tuple[float, float]:
    n = n_particles
    return (n - 1) / n * kappa_plus, (n - 1) * c_kappa_plus


def lifted_mf_bound(kappa: float, c_kappa: float, n_particles: int) -> tuple[float, float]:
    n = n_particles
    return (n - 1) / math.sqrt(n) * kappa, (n - 1) * c_kappa


def lifted_power_bound(sigma: float, c_sigma: float, n_particles: int, alpha: float) -> tuple[float, float]:
    """Bound for |b|^{(1+alpha)/2} given |K|^{(1+alpha)/2} in F_sigma, alpha in [0, 1]."""
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    n = n_particles
    return (n - 1) ** (1 + alpha) / n ** (1 + alpha) * sigma, (n - 1) ** (1 + alpha) / n**alpha * c_sigma


def particle_drift_bound(mu: float, c_mu: float, n_particles: int) -> tuple[float, float]:
    """Form-bound of b^M_i(x) = M_i(x_i) on R^{Nd} when every M_i is in F_mu."""
    return mu, n_particles * c_mu


def combined_bound(kappa: float, c_kappa: float, mu: float, c_mu: float, n_particles: int) -> tuple[float, float]:
    """Form-bound of b^K + b^M: sqrt(delta) adds; constants combine by Minkowski."""
    dk, ck = lifted_form_bound(kappa, c_kappa, n_particles)
    dm, cm = particle_drift_bound(mu, c_mu, n_particles)
    return (math.sqrt(dk) + math.sqrt(dm)) ** 2, (math.sqrt(ck) + math.sqrt(cm)) ** 2


# -- invariant density and its Lyapunov identity ----------------------------


def density_exponent(kappa: float, dim: int, n_particles: int) -> float:
    """Per-pair exponent sqrt(kappa) (d-2) / (2N)."""
    return math.sqrt(kappa) * (dim - 2) / (2.0 * n_particles)


def _checked_blocks(x) -> np.ndarray:
    blocks = x.blocks if isinstance(x, ParticleConfiguration) else np.asarray(x, dtype=float)
    if np.any(pair_distances(blocks) < SINGULARITY_GUARD):
        raise CollisionState("coincident particles")
    return blocks


def invariant_density(kappa: float, x) -> np.ndarray | float:
    """psi(x) = prod_{i<j} |x_i - x_j|^{-sqrt(kappa)(d-2)/(2N)}."""
    val = _psi(kappa, _checked_blocks(x))
    return float(val) if np.ndim(val) == 0 else val


def _psi(kappa: float, blocks: np.ndarray) -> np.ndarray:
    n, d = blocks.shape[-2:]
    g = density_exponent(kappa, d, n)
    return np.exp(-g * np.sum(np.log(pair_distances(blocks)), axis=-1))


def log_density_gradient(kappa: float, blocks: np.ndarray) -> np.ndarray:
    """grad log psi, shape (..., N, d)."""
    n, d = blocks.shape[-2:]
    g = density_exponent(kappa, d, n)
    grad = np.zeros_like(blocks)
    for i in range(n):
        for j in range(i + 1, n):
            y = blocks[..., i, :] - blocks[..., j, :]
            v = y / np.sum(y * y, axis=-1, keepdims=True)
            grad[..., i, :] -= g * v
            grad[..., j, :] += g * v
    return grad


def density_laplacian(kappa: float, x) -> np.ndarray | float:
    """Delta psi = psi (|grad log psi|^2 + Delta log psi)."""
    blocks = _checked_blocks(x)
    n, d = blocks.shape[-2:]
    g = density_exponent(kappa, d, n)
    psi = _psi(kappa, blocks)
    grad = log_density_gradient(kappa, blocks)
    r = pair_distances(blocks)
    # each unordered pair contributes twice: Delta_{x_i} and Delta_{x_j} of -g log r
    lap_log = -2.0 * g * (d - 2) * np.sum(1.0 / r**2, axis=-1)
    return psi * (np.sum(grad * grad, axis=(-2, -1)) + lap_log)


def lyapunov_terms(kappa: float, x) -> dict[str, np.ndarray]:
    """Constituents of Delta psi + sum_i div_{x_i}((1/N) sum_{j!=i} K(x_i-x_j) psi).

    K is the attracting Hardy kernel, so (1/N) K(y) = g y/|y|^2 with g the
    density exponent. The sum vanishes identically: psi is the stationary
    density of dX_i = -(1/N) sum_j K(X_i - X_j) dt + sqrt(2) dB_i.
    """
    blocks = _checked_blocks(x)
    n, d = blocks.shape[-2:]
    kernel = KernelSpec.hardy(kappa, d, attracting=True)
    psi = _psi(kappa, blocks)
    lap = density_laplacian(kappa, blocks)
    grad_psi = psi[..., None, None] * log_density_gradient(kappa, blocks)
    flux_div = np.zeros(psi.shape)
    flux_adv = np.zeros(psi.shape)
    for i in range(n):
        field_i = np.zeros(blocks.shape[:-2] + (d,))
        div_i = np.zeros(blocks.shape[:-2])
        for j in range(n):
            if j == i:
                continue
            y = blocks[..., i, :] - blocks[..., j, :]
            field_i += eval_kernel(kernel, y) / n
            div_i += divergence(kernel, y) / n
        flux_div = flux_div + psi * div_i
        flux_adv = flux_adv + np.sum(field_i * grad_psi[..., i, :], axis=-1)
    return {"laplacian": lap, "transport_divergence": flux_div, "transport_advection": flux_adv}


def lyapunov_residual(kappa: float, x) -> np.ndarray | float:
    """Signed residual of the stationarity identity, scaled by its largest term."""
    t = lyapunov_terms(kappa, x)
    total = t["laplacian"] + t["transport_divergence"] + t["transport_advection"]
    scale = np.maximum.reduce([np.abs(v) for v in t.values()])
    scale = np.where(scale > 0, scale, 1.0)
    res = total / scale
    return float(res) if np.ndim(res) == 0 else res


# -- heat-kernel envelope --------------------------------------------------


@dataclass(frozen=True)
class EtaProfile:
    """eta(r) = r^{-a} on (0,1), 2 on (2, inf), quintic C^2 blend on [1, 2].

    With a > 0 the blend leaves r = 1 with slope -a, so it dips slightly
    below 1 just right of r = 1; ``min_value`` reports the dip.
    """

    kappa: float
    dim: int
    n_particles: int
    blend: np.ndarray = field(init=False, repr=False, compare=False)
    min_value: float = field(init=False, compare=False)

    def __post_init__(self):
        a = self.exponent
        # p(s), s = r - 1: p(0)=1, p'(0)=-a, p''(0)=a(a+1), p(1)=2, p'(1)=0, p''(1)=0
        rows = [
            [1, 0, 0, 0, 0, 0],
            [0, 1, 0, 0, 0, 0],
            [0, 0, 2, 0, 0, 0],
            [1, 1, 1, 1, 1, 1],
            [0, 1, 2, 3, 4, 5],
            [0, 0, 2, 6, 12, 20],
        ]
        rhs = [1.0, -a, a * (a + 1.0), 2.0, 0.0, 0.0]
        coef = np.linalg.solve(np.asarray(rows, dtype=float), np.asarray(rhs))
        object.__setattr__(self, "blend", coef)
        poly = np.polynomial.Polynomial(coef)
        crit = [z.real for z in poly.deriv().roots() if abs(z.imag) < 1e-12 and 0.0 <= z.real <= 1.0]
        object.__setattr__(self, "min_value", float(min([1.0, *poly(np.asarray(crit + [0.0, 1.0]))])))

    @property
    def exponent(self) -> float:
        return density_exponent(self.kappa, self.dim, self.n_particles)

    def derivative(self, r, order: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        a = self.exponent
        out = np.empty_like(r)
        low, high = r < 1.0, r > 2.0
        mid = ~(low | high)
        fall = [1.0, -a, a * (a + 1.0)][order]
        out[low] = fall * r[low] ** (-a - order)
        out[high] = 2.0 if order == 0 else 0.0
        poly = np.polynomial.Polynomial(self.blend).deriv(order) if order else np.polynomial.Polynomial(self.blend)
        out[mid] = poly(r[mid] - 1.0)
        return out

    def __call__(self, r) -> np.ndarray:
        return self.derivative(r, 0)


def eta_value(profile: EtaProfile, r) -> np.ndarray | float:
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("eta is defined for r > 0")
    val = profile(r_arr)
    return float(val) if val.ndim == 0 else val


def heat_kernel_envelope(profile: EtaProfile, t: float, z) -> np.ndarray | float:
    """t^{-Nd/2} prod_{i<j} eta(|z_i - z_j| / sqrt t), the bound's shape without C_T."""
    if t <= 0:
        raise ValueError("t must be positive")
    blocks = _checked_blocks(z)
    n, d = blocks.shape[-2:]
    r = pair_distances(blocks) / math.sqrt(t)
    val = t ** (-n * d / 2.0) * np.prod(profile(r), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def paper_hardy_constant(dim: int, n_particles: int) -> float:
    """Known lower bound C_{d,N} for the many-particle Hardy inequality."""
    if dim < 3:
        raise UnsupportedDim("dimension must be >= 3")
    if n_particles < 2:
        raise ValueError("need at least two particles")
    d, n = dim, n_particles
    root = math.sqrt(1.0 + 3.0 * (d - 2) ** 2 / (2.0 * (d - 1) ** 2) * (n - 1) * (n - 2))
    return (d - 2) ** 2 * max(1.0 / n, 1.0 / (1.0 + root))


# -- many-particle Hardy functional -----------------------------------------


def multiparticle_hardy_ratio(phi, n_particles: int, dim: int, n_samples: int = 20000, seed: int = 0,
                              return_sample: bool = False):
    """[sum_{i<j} int phi^2/|x_i - x_j|^2] / int |grad phi|^2 on R^{Nd}.

    Products of Gaussian bumps use exact one-dimensional moment integrals;
    pair-envelope trials use exact radial quadrature for N = 2 and importance
    sampling otherwise.
    """
    from .trials import (HardyRatioSample, PairEnvelope, TensorProduct, inverse_square_moment,
                         pair_envelope_ratio_exact, pair_envelope_ratio_mc)

    if phi.domain_dim != n_particles * dim:
        raise ValueError("trial lives on the wrong space")
    if isinstance(phi, TensorProduct):
        f = phi.factors
        if len(f) != n_particles or any(g.domain_dim != dim for g in f):
            raise ValueError("tensor trial must have one factor per particle")
        energy = phi.energy()
        if not energy > 0:
            raise DegenerateTrial("trial has zero Dirichlet energy")
        num = sum(inverse_square_moment(np.subtract(f[i].center, f[j].center), f[i].variance + f[j].variance, dim)
                  for i in range(n_particles) for j in range(i + 1, n_particles))
        sample = HardyRatioSample(phi.norm2() * num / energy, 0.0, 1)
    elif isinstance(phi, PairEnvelope):
        if n_particles == 2:
            sample = pair_envelope_ratio_exact(phi)
        else:
            sample = pair_envelope_ratio_mc(phi, n_samples, seed)
        if not sample.denominator > 0:
            raise DegenerateTrial("trial has zero Dirichlet energy")
    else:
        raise TypeError(f"unsupported trial {type(phi).__name__}")
    return sample if return_sample else sample.ratio
