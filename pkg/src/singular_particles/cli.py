"""Command-line runner: ``singular-particles run|validate <config.yaml>``."""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
import traceback

import numpy as np

from . import __version__
from .analysis.feynman_kac import feynman_kac_check, gaussian_profile, shell_bump
from .analysis.heat_kernel import heat_kernel_envelope_check
from .analysis.integrability import default_probe, psi_integrability
from .analysis.krylov import krylov_functional
from .analysis.lyapunov import lyapunov_audit
from .analysis.phase import collision_phase_scan
from .analysis.rayleigh import estimate_form_bound, estimate_multiparticle_hardy
from .config import ExperimentConfig, check_config
from .errors import ConfigError, Inconclusive, NoAnalyticBound, SingularParticlesError
from .kernels import KernelSpec, nominal_form_bounds
from .lift import LiftedDrift
from .sde import default_workers, run_ensemble, run_epsilon_schedule, write_trajectory_csv

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class Emitter:
    """Accumulates results and CSV tables so a failing run can still write what it has."""

    def __init__(self):
        self.results: dict = {}
        self.tables: dict[str, tuple[list, list, dict]] = {}
        self.extra_files: dict[str, dict] = {}

    def table(self, name: str, columns: list[tuple[str, str]]):
        rows: list = []
        self.tables[name] = ([c for c, _ in columns], rows, dict(columns))
        return rows


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _profile(rec: dict):
    if rec["kind"] == "gaussian":
        return gaussian_profile(rec["width"]), (0.0, np.inf)
    return shell_bump(rec["inner"], rec["outer"]), (rec["inner"], rec["outer"])


def _hardy_plan(cfg: ExperimentConfig, kappa: float, **overrides):
    n, d = cfg.sim["n_particles"], cfg.sim["dim"]
    return cfg.sim_plan(LiftedDrift.uniform(KernelSpec.hardy(kappa, d), n), **overrides)


# -- runners -------------------------------------------------------------------


def run_phase_scan(cfg, em, workers):
    a = cfg.analysis
    rows = em.table("phase_scan", [("kappa", "dimensionless"), ("p", "probability"),
                                   ("stderr", "probability"), ("oracle_p", "probability")])
    plan = _hardy_plan(cfg, 0.0)
    em.results["rows"] = []
    for kappa in a["kappa_grid"]:
        scan = collision_phase_scan([kappa], plan, workers, a["with_oracle"])
        r = scan.rows[0]
        rows.append([r.kappa, r.p, r.stderr, r.oracle_p])
        em.results["rows"].append(r.to_record())
        em.results["meta"] = scan.meta


def run_hardy_estimate(cfg, em, workers):
    a = cfg.analysis
    kernel = cfg.kernel_spec()
    est = estimate_form_bound(kernel, a["flavor"], a["trial_family"], tuple(a["schedule"]))
    try:
        analytic = {r.flavor.value: r.kappa for r in nominal_form_bounds(kernel)}
    except NoAnalyticBound:
        analytic = {}
    em.results.update(est.to_record())
    em.results["analytic"] = analytic.get(a["flavor"])
    key = "eps_reg" if a["trial_family"] == "radial_power" else "width"
    rows = em.table("hardy_sequence", [(key, "length" if key == "width" else "dimensionless"),
                                       ("quotient", "dimensionless")])
    for s in est.trial_meta["sequence"]:
        rows.append([s[key], s["quotient"]])


def run_multiparticle_hardy(cfg, em, workers):
    a = cfg.analysis
    est = estimate_multiparticle_hardy(a["dim"], a["n_particles"], a["budget"], cfg.seed, a["n_samples"])
    em.results.update(est.to_record())
    rows = em.table("multiparticle_hardy", [("n_particles", "count"), ("ratio", "dimensionless"),
                                            ("constant_candidate", "dimensionless"),
                                            ("known_lower_bound", "dimensionless")])
    rows.append([a["n_particles"], est.value, 1.0 / est.value, est.trial_meta["known_lower_bound"]])


def run_psi_test(cfg, em, workers):
    a = cfg.analysis
    probe = default_probe(a["probe_count"], a["probe_ratio"])
    rows = em.table("psi_test", [("kappa", "dimensionless"), ("variant", "label"), ("verdict", "label"),
                                 ("fitted_rate", "dimensionless"), ("analytic_rate", "dimensionless")])
    em.results["reports"] = []
    for variant in a["variants"]:
        for kappa in a["kappa_grid"]:
            try:
                rep = psi_integrability(kappa, a["dim"], a["n_particles"], probe, variant)
                rows.append([kappa, variant, rep.verdict, rep.fitted_rate, rep.analytic_rate])
                em.results["reports"].append(rep.to_record())
            except Inconclusive as exc:
                rows.append([kappa, variant, "inconclusive", None, None])
                em.results["reports"].append({"inputs": {"kappa": kappa, "variant": variant},
                                              "verdicts": {"verdict": "inconclusive"}, "errors": {"reason": str(exc)}})


def run_lyapunov_audit(cfg, em, workers):
    a = cfg.analysis
    audit = lyapunov_audit(a["kappa"], a["dim"], a["n_particles"], a["n_points"], cfg.seed, a["spread"])
    em.results.update(audit.to_record())
    rows = em.table("lyapunov_residuals", [("point", "index"), ("relative_residual", "dimensionless")])
    rows.extend([k, float(r)] for k, r in enumerate(audit.residuals))


def run_heat_kernel_check(cfg, em, workers):
    a = cfg.analysis
    t_grid = tuple(float(t) for t in a["t_grid"])
    plan = _hardy_plan(cfg, a["kappa"], snapshot_times=t_grid, horizon=max(t_grid), stop_on_collision=False)
    rep = heat_kernel_envelope_check(a["kappa"], plan.drift.dim, plan.drift.n_particles, t_grid, plan, workers,
                                     tuple(a["support"]))
    em.results.update(rep.to_record())
    rows = em.table("heat_kernel", [("t", "time"), ("slope", "dimensionless"),
                                    ("slope_halved_bandwidth", "dimensionless"),
                                    ("envelope_constant", "dimensionless"), ("bandwidth", "log length")])
    for row in zip(rep.times, rep.slopes, rep.slopes_halved, rep.envelope_constants, rep.bandwidths):
        rows.append(list(row))


def _plan_kw(sim: dict) -> dict:
    keep = ("collision_radius", "max_substeps", "refine_radius", "drift_fraction", "diffusion_fraction",
            "bridge_crossing", "batch_size", "scheme")
    return {k: sim[k] for k in keep}


def run_feynman_kac(cfg, em, workers):
    a, s = cfg.analysis, cfg.sim
    if s["n_particles"] != 2:
        raise ConfigError("the radial boundary-value problem covers two particles", field="sim.n_particles")
    f, support = _profile(a["profile"])
    rep = feynman_kac_check(a["kappa"], s["dim"], f, a["lambda"], s["pair_distance"],
                            support=max(5.0, support[1] if np.isfinite(support[1]) else 5.0),
                            ensemble=s["ensemble"], dt=s["dt"], horizon=s["horizon"], tolerance=a["tolerance"],
                            seed=cfg.seed, workers=workers, **_plan_kw(s))
    em.results.update(rep.to_record())
    rows = em.table("feynman_kac", [("kappa", "dimensionless"), ("lambda", "1/time"), ("mc", "time"),
                                    ("mc_stderr", "time"), ("bvp", "time"), ("rel_error", "dimensionless")])
    rows.append([rep.kappa, rep.lam, rep.mc, rep.mc_stderr, rep.bvp, rep.rel_error])
    if not rep.passed:
        raise SingularParticlesError(f"relative error {rep.rel_error:.3g} exceeds {rep.tolerance}")


def run_krylov(cfg, em, workers):
    a = cfg.analysis
    g = cfg.kernel_spec()
    f, support = _profile(a["profile"])
    plan = _hardy_plan(cfg, a["kappa"], stop_on_collision=a["kappa"] > 16)
    rows = em.table("krylov", [("lambda", "1/time"), ("scale", "dimensionless"), ("lhs", "time"),
                               ("lhs_stderr", "time"), ("rhs", "norm"), ("ratio", "dimensionless")])
    em.results["reports"] = []
    for lam in a["lambda_grid"]:
        for scale in a["scales"]:
            fs = (lambda r, c=float(scale): c * f(r))
            rep = krylov_functional(plan, g, fs, lam, a["q"], f_sup=float(scale), support=support,
                                    workers=workers)
            rows.append([lam, scale, rep.lhs, rep.lhs_stderr, rep.rhs, rep.ratio])
            em.results["reports"].append(rep.to_record())


def run_raw_ensemble(cfg, em, workers, out_dir):
    a = cfg.analysis
    kernel = cfg.kernel_spec()
    plan = cfg.sim_plan(LiftedDrift.uniform(kernel, cfg.sim["n_particles"]))
    if plan.epsilon_schedule:
        runs = run_epsilon_schedule(plan, workers)
    else:
        runs = [(None, run_ensemble(plan, workers))]
    rows = em.table("ensemble", [("epsilon", "length"), ("trajectory", "index"), ("collided", "bool"),
                                 ("collision_time", "time"), ("min_pair_distance_seen", "length"),
                                 ("budget_exhausted", "bool"), ("error", "label")])
    em.results["summaries"] = []
    for eps, res in runs:
        em.results["summaries"].append({"epsilon": eps, **res.summary()})
        for o in res.outcomes:
            rows.append([eps, o.index, int(o.collided), o.collision_time, o.min_pair_distance_seen,
                         int(o.budget_exhausted), o.error])
        if a["trajectory_csv"] and plan.dump_stride > 0:
            tag = "" if eps is None else f"_eps{eps:g}"
            name = f"trajectories{tag}.csv"
            write_trajectory_csv(res, os.path.join(out_dir, name))
            em.extra_files[name] = {"trajectory": "index", "t": "time", "x*": "length"}


RUNNERS = {
    "phase_scan": run_phase_scan, "hardy_estimate": run_hardy_estimate,
    "multiparticle_hardy": run_multiparticle_hardy, "psi_test": run_psi_test,
    "lyapunov_audit": run_lyapunov_audit, "heat_kernel_check": run_heat_kernel_check,
    "feynman_kac": run_feynman_kac, "krylov": run_krylov, "raw_ensemble": run_raw_ensemble,
}


# -- plot scripts ----------------------------------------------------------------

_PLOT_AXES = {
    "phase_scan": ("kappa", ["p", "oracle_p"], "collision probability", "linear"),
    "hardy_estimate": (None, ["quotient"], "Rayleigh quotient", "linear"),
    "multiparticle_hardy": ("n_particles", ["constant_candidate", "known_lower_bound"], "constant", "linear"),
    "psi_test": ("kappa", ["fitted_rate"], "shell exponent", "linear"),
    "lyapunov_audit": ("point", ["relative_residual"], "relative residual", "symlog"),
    "heat_kernel_check": ("t", ["envelope_constant"], "envelope constant C", "linear"),
    "feynman_kac": ("kappa", ["mc", "bvp"], "resolvent u(x0)", "linear"),
    "krylov": ("lambda", ["ratio"], "lhs / rhs", "log"),
    "raw_ensemble": ("trajectory", ["min_pair_distance_seen"], "min pair distance", "log"),
}

_PLOT_TEMPLATE = '''"""Standard figure for the {exp} experiment; reads {csv_name} next to this file."""
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{csv_name}")) as fh:
    rows = list(csv.DictReader(fh))
x_col = {x_col!r} or next(iter(rows[0]))


def num(v):
    try:
        return float(v)
    except ValueError:
        return float("nan")


fig, ax = plt.subplots(figsize=(5, 3.5))
for col in {y_cols!r}:
    ax.plot([num(r[x_col]) for r in rows], [num(r[col]) for r in rows], "o-", label=col)
ax.set_xlabel(x_col)
ax.set_ylabel({y_label!r})
ax.set_yscale({y_scale!r})
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "{exp}.png"), dpi=150)
'''


def plot_script(exp: str, csv_name: str) -> str:
    x_col, y_cols, label, scale = _PLOT_AXES[exp]
    return _PLOT_TEMPLATE.format(exp=exp, csv_name=csv_name, x_col=x_col, y_cols=y_cols, y_label=label,
                                 y_scale=scale)


# -- driver ----------------------------------------------------------------------


def _write_outputs(cfg: ExperimentConfig, em: Emitter, out_dir: str, status: dict, workers: int) -> None:
    os.makedirs(out_dir, exist_ok=True)
    units = {}
    for name, (header, rows, cols) in em.tables.items():
        fname = f"{name}.csv"
        with open(os.path.join(out_dir, fname), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        units[fname] = cols
    units.update(em.extra_files)
    results = {"experiment": cfg.experiment, "seed": cfg.seed, "config_hash": cfg.content_hash(),
               "status": status, "results": em.results}
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(_clean(results), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if em.tables:
        first = next(iter(em.tables))
        with open(os.path.join(out_dir, f"plot_{cfg.experiment}.script"), "w") as fh:
            fh.write(plot_script(cfg.experiment, f"{first}.csv"))
    manifest = {"config": cfg.resolved(), "config_hash": cfg.content_hash(), "seed": cfg.seed,
                "csv_columns": units, "package_version": __version__, "workers": workers,
                "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(_clean(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(path: str, seed: int | None, output: str | None) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    cfg = check_config(text, path)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="--seed")
        cfg.seed = seed
    if output is not None:
        cfg.output_dir = output
    return cfg


def _print_diagnostics(cfg: ExperimentConfig, stream) -> int:
    n_err = 0
    for d in cfg.diagnostics:
        print(f"{cfg.source}: {d}", file=stream)
        n_err += d.level == "error"
    return n_err


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config, args.seed, args.output)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    n_err = _print_diagnostics(cfg, sys.stdout)
    if n_err:
        return EXIT_CONFIG
    print(f"{args.config}: ok ({cfg.experiment})")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config, args.seed, args.output)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if _print_diagnostics(cfg, sys.stderr):
        return EXIT_CONFIG
    workers = args.workers or default_workers()
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    em = Emitter()
    runner = RUNNERS[cfg.experiment]
    status = {"ok": True, "error": None}
    code = EXIT_OK
    try:
        if cfg.experiment == "raw_ensemble":
            runner(cfg, em, workers, out_dir)
        else:
            runner(cfg, em, workers)
    except ConfigError as exc:
        print(f"{cfg.source}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # estimator failure: keep partial results, exit 1
        status = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        traceback.print_exc(file=sys.stderr)
        code = EXIT_RUNTIME
    _write_outputs(cfg, em, out_dir, status, workers)
    print(f"{cfg.experiment}: wrote {out_dir} ({'ok' if code == EXIT_OK else 'FAILED, partial results'})")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singular-particles", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, text in (("run", cmd_run, "run an experiment config"),
                           ("validate", cmd_validate, "check a config and print diagnostics")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config")
        s.add_argument("--workers", type=int, default=None, help="worker processes (default: logical cores)")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--output", default=None, help="override output_dir")
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
