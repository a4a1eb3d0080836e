"""Collision probability against kappa for two particles, with the Bessel oracle alongside."""

import argparse
import time

from singular_particles.analysis.phase import collision_phase_scan, phase_plan_template
from singular_particles.sde import default_workers


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--kappa", type=float, nargs="+", default=[4, 9, 16, 25, 36])
    p.add_argument("--ensemble", type=int, default=10_000)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=default_workers())
    p.add_argument("--csv", default=None, help="also write the table here")
    args = p.parse_args()
    plan = phase_plan_template(ensemble=args.ensemble, dt=args.dt, seed=args.seed)
    t0 = time.perf_counter()
    scan = collision_phase_scan(sorted(args.kappa), plan, args.workers)
    print(f"{'kappa':>6} {'p':>8} {'stderr':>8} {'oracle':>8} {'z':>6}")
    for r in scan.rows:
        print(f"{r.kappa:6g} {r.p:8.4f} {r.stderr:8.4f} {r.oracle_p:8.4f} {r.z_score:+6.2f}")
    print(f"elapsed {time.perf_counter() - t0:.0f}s")
    if args.csv:
        scan.write_csv(args.csv)


if __name__ == "__main__":
    main()
