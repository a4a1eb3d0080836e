"""Recompute the frozen collision-probability oracle values by Talbot inversion.

For the Bessel process R (index mu = nu/2 - 1) started at r0 > a,
E exp(-s tau_a) = r0^{-mu} K_mu(r0 sqrt(2s)) / (a^{-mu} K_mu(a sqrt(2s))),
so P(tau_a <= T) is the inverse Laplace transform of that ratio over s at T.
Needs mpmath (pip install mpmath); the package itself does not.
"""

import argparse

import mpmath as mp

from singular_particles.analysis.bessel import BesselOracle, bessel_dimension


def hit_probability(nu: float, r0: float, a: float, horizon: float) -> float:
    mu = mp.mpf(nu) / 2 - 1

    def transform(s):
        k = mp.sqrt(2 * s)
        return (r0 ** -mu * mp.besselk(mu, r0 * k)) / (a ** -mu * mp.besselk(mu, a * k)) / s

    return float(mp.invertlaplace(transform, horizon, method="talbot"))


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--kappa", type=float, nargs="+", default=[4, 9, 16, 25, 36])
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--pair-distance", type=float, default=1.0)
    p.add_argument("--collision-radius", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--digits", type=int, default=30)
    args = p.parse_args()
    mp.mp.dps = args.digits
    print("kappa  talbot               grid")
    for kappa in args.kappa:
        nu = bessel_dimension(kappa, args.dim)
        talbot = hit_probability(nu, args.pair_distance / 2, args.collision_radius / 2, args.horizon)
        grid = BesselOracle(kappa, args.dim).collision_probability(args.pair_distance, args.collision_radius,
                                                                   args.horizon)
        print(f"{kappa:5g}  {talbot!r:20}  {grid!r}")


if __name__ == "__main__":
    main()
