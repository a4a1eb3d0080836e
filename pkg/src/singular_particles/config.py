"""Experiment configuration files: strict YAML schema with line-numbered diagnostics."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .analysis.bessel import bessel_dimension
from .errors import ConfigError
from .kernels import KernelKind, KernelSpec
from .lift import LiftedDrift, ParticleConfiguration
from .sde import Scheme, SimPlan

EXPERIMENTS = ("phase_scan", "hardy_estimate", "multiparticle_hardy", "psi_test", "lyapunov_audit",
               "heat_kernel_check", "feynman_kac", "krylov", "raw_ensemble")

REQUIRED = object()


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads 1e-4 style floats (YAML 1.1 wants a dot and a signed exponent)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))

TOP_FIELDS = {"experiment": REQUIRED, "seed": 0, "output_dir": "results", "kernel": None, "sim": None,
              "analysis": None}

SIM_FIELDS = {
    "n_particles": 2, "dim": 3, "pair_distance": 1.0, "x0": None, "dt": REQUIRED, "horizon": REQUIRED,
    "ensemble": REQUIRED, "scheme": "EulerMaruyama", "epsilon_schedule": [], "collision_radius": 1e-3,
    "max_substeps": 100_000, "refine_radius": 0.3, "drift_fraction": 0.1, "diffusion_fraction": 0.1,
    "stop_on_collision": True, "bridge_crossing": True, "snapshot_times": [], "dump_stride": 0,
    "batch_size": 2048,
}

KERNEL_FIELDS = {"kind": REQUIRED, "kappa": 0.0, "dim": 3, "params": None}

# which blocks each experiment reads, and the analysis parameters it names
EXPERIMENT_SCHEMA: dict[str, dict[str, Any]] = {
    "phase_scan": {"blocks": ("sim",), "analysis": {"kappa_grid": REQUIRED, "with_oracle": None}},
    "hardy_estimate": {"blocks": ("kernel",), "analysis": {
        "flavor": "F", "trial_family": "radial_power", "schedule": [0.2, 0.1, 0.05, 0.02]}},
    "multiparticle_hardy": {"blocks": (), "analysis": {
        "dim": 3, "n_particles": REQUIRED, "budget": 100_000, "n_samples": 2000}},
    "psi_test": {"blocks": (), "analysis": {
        "kappa_grid": REQUIRED, "dim": 3, "n_particles": 2, "variants": ["L1", "W21"],
        "probe_count": 40, "probe_ratio": 0.5}},
    "lyapunov_audit": {"blocks": (), "analysis": {
        "kappa": REQUIRED, "dim": 3, "n_particles": REQUIRED, "n_points": 1000, "spread": 1.0}},
    "heat_kernel_check": {"blocks": ("sim",), "analysis": {
        "kappa": REQUIRED, "t_grid": [0.25, 0.5, 1.0], "support": [0.01, 0.99]}},
    "feynman_kac": {"blocks": ("sim",), "analysis": {
        "kappa": REQUIRED, "profile": REQUIRED, "lambda": 1.0, "tolerance": 0.05}},
    "krylov": {"blocks": ("kernel", "sim"), "analysis": {
        "kappa": REQUIRED, "profile": REQUIRED, "lambda_grid": [5.0, 10.0, 20.0], "q": None,
        "scales": [1.0, 2.0]}},
    "raw_ensemble": {"blocks": ("kernel", "sim"), "analysis": {"trajectory_csv": False}},
}

PROFILE_FIELDS = {"gaussian": {"width": 1.0}, "shell": {"inner": 1.0, "outer": 2.0}}


@dataclass
class Diagnostic:
    level: str  # "error" | "warning" | "info"
    field: str
    line: int | None
    message: str

    def __str__(self) -> str:
        loc = f"line {self.line}" if self.line is not None else "line ?"
        return f"{self.level}: {loc}: {self.field}: {self.message}"


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    output_dir: str
    kernel: dict | None
    sim: dict | None
    analysis: dict
    source: str = ""
    diagnostics: list = field(default_factory=list)

    def resolved(self) -> dict:
        rec = {"experiment": self.experiment, "seed": self.seed, "output_dir": self.output_dir,
               "analysis": self.analysis}
        if self.kernel is not None:
            rec["kernel"] = self.kernel
        if self.sim is not None:
            rec["sim"] = self.sim
        return rec

    def content_hash(self) -> str:
        """git blob hash of the canonical resolved config, output_dir excluded."""
        rec = {k: v for k, v in self.resolved().items() if k != "output_dir"}
        body = json.dumps(rec, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec.from_record(self.kernel)

    def sim_plan(self, drift: LiftedDrift, **overrides) -> SimPlan:
        s = dict(self.sim)
        s.update(overrides)
        n, d = s.pop("n_particles"), s.pop("dim")
        x0 = s.pop("x0")
        dist = s.pop("pair_distance")
        if x0 is None:
            blocks = np.zeros((n, d))
            blocks[:, 0] = dist * (np.arange(n) - (n - 1) / 2.0)
            x0 = ParticleConfiguration.from_blocks(blocks)
        else:
            x0 = ParticleConfiguration.from_blocks(np.asarray(x0, dtype=float))
        s["epsilon_schedule"] = tuple(s["epsilon_schedule"])
        s["snapshot_times"] = tuple(s["snapshot_times"])
        return SimPlan(drift=drift, x0=x0, seed=self.seed, **s)


# -- parsing -------------------------------------------------------------------


def _line(node) -> int | None:
    return None if node is None else node.start_mark.line + 1


def _mapping_lines(node, prefix: str, out: dict) -> None:
    """Map dotted field paths to 1-based source lines."""
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = _line(k)
            _mapping_lines(v, path, out)


def _fill(section: dict, schema: dict, prefix: str, lines: dict, diags: list) -> dict:
    out = {}
    for key in section:
        if key not in schema:
            diags.append(Diagnostic("error", f"{prefix}{key}", lines.get(f"{prefix}{key}"),
                                    "unknown field"))
    for key, default in schema.items():
        if key in section:
            out[key] = section[key]
        elif default is REQUIRED:
            diags.append(Diagnostic("error", f"{prefix}{key}", lines.get(prefix.rstrip(".")),
                                    "required field missing"))
        else:
            out[key] = default
    return out


def _number(value, name, line, diags, positive=False, integer=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if ok and integer:
        ok = float(value).is_integer()
    if ok and positive:
        ok = value > 0
    if not ok:
        kind = "positive " if positive else ""
        kind += "integer" if integer else "number"
        diags.append(Diagnostic("error", name, line, f"expected a {kind}, got {value!r}"))
    return ok


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate; raises ConfigError on the first hard error (all are in .diagnostics)."""
    cfg = check_config(text, source)
    errors = [d for d in cfg.diagnostics if d.level == "error"]
    if errors:
        e = errors[0]
        raise ConfigError(str(e), field=e.field, line=e.line)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), path)


def check_config(text: str, source: str = "<string>") -> ExperimentConfig:
    diags: list[Diagnostic] = []
    try:
        node = yaml.compose(text, Loader=_Loader)
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = None if mark is None else mark.line + 1
        diags.append(Diagnostic("error", "<document>", line, f"YAML syntax: {getattr(exc, 'problem', exc)}"))
        return ExperimentConfig("", 0, "", None, None, {}, source, diags)
    if not isinstance(raw, dict):
        diags.append(Diagnostic("error", "<document>", 1, "top level must be a mapping"))
        return ExperimentConfig("", 0, "", None, None, {}, source, diags)
    lines: dict = {}
    _mapping_lines(node, "", lines)
    top = _fill(raw, TOP_FIELDS, "", lines, diags)
    exp = top.get("experiment")
    if exp not in EXPERIMENTS:
        diags.append(Diagnostic("error", "experiment", lines.get("experiment"),
                                f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}"))
        return ExperimentConfig(str(exp), 0, "", None, None, {}, source, diags)
    schema = EXPERIMENT_SCHEMA[exp]
    seed = top["seed"]
    if not (_number(seed, "seed", lines.get("seed"), diags, integer=True) and 0 <= seed < 2**64):
        diags.append(Diagnostic("error", "seed", lines.get("seed"), "seed must be an unsigned 64-bit integer"))
    for block in ("kernel", "sim"):
        if block in schema["blocks"] and top[block] is None:
            diags.append(Diagnostic("error", block, None, f"experiment {exp} requires a {block} block"))
        if block not in schema["blocks"] and top[block] is not None:
            diags.append(Diagnostic("error", block, lines.get(block), f"experiment {exp} does not use a {block} block"))
    kernel = sim = None
    if top["kernel"] is not None and "kernel" in schema["blocks"]:
        kernel = _check_kernel(top["kernel"], lines, diags)
    if top["sim"] is not None and "sim" in schema["blocks"]:
        sim = _check_sim(top["sim"], lines, diags)
    analysis = _fill(top["analysis"] or {}, schema["analysis"], "analysis.", lines, diags)
    _check_analysis(exp, analysis, sim, lines, diags)
    return ExperimentConfig(exp, int(seed) if isinstance(seed, int) else 0, str(top["output_dir"]),
                            kernel, sim, analysis, source, diags)


def _check_kernel(block, lines, diags) -> dict | None:
    if not isinstance(block, dict):
        diags.append(Diagnostic("error", "kernel", lines.get("kernel"), "kernel must be a mapping"))
        return None
    rec = _fill(block, KERNEL_FIELDS, "kernel.", lines, diags)
    if rec.get("params") is None:
        rec.pop("params", None)
    try:
        spec = KernelSpec.from_record(rec)
    except (ValueError, TypeError, KeyError) as exc:
        diags.append(Diagnostic("error", "kernel", lines.get("kernel"), str(exc)))
        return None
    if spec.dim < 3:
        diags.append(Diagnostic("error", "kernel.dim", lines.get("kernel.dim"),
                                "dimension must be at least 3"))
    return spec.to_record()


def _check_sim(block, lines, diags) -> dict | None:
    if not isinstance(block, dict):
        diags.append(Diagnostic("error", "sim", lines.get("sim"), "sim must be a mapping"))
        return None
    s = _fill(block, SIM_FIELDS, "sim.", lines, diags)
    ln = lambda k: lines.get(f"sim.{k}")
    for k in ("dt", "horizon", "collision_radius", "pair_distance", "drift_fraction"):
        if k in s:
            _number(s[k], f"sim.{k}", ln(k), diags, positive=True)
    for k in ("ensemble", "max_substeps", "batch_size", "n_particles"):
        if k in s:
            _number(s[k], f"sim.{k}", ln(k), diags, positive=True, integer=True)
    if isinstance(s.get("dim"), int) and s["dim"] < 3:
        diags.append(Diagnostic("error", "sim.dim", ln("dim"), "dimension must be at least 3"))
    if s.get("scheme") not in [sc.value for sc in Scheme]:
        diags.append(Diagnostic("error", "sim.scheme", ln("scheme"), f"unknown scheme {s.get('scheme')!r}"))
    rc = s.get("collision_radius")
    for eps in s.get("epsilon_schedule") or []:
        if isinstance(rc, (int, float)) and isinstance(eps, (int, float)):
            if eps > rc:
                diags.append(Diagnostic("warning", "sim.epsilon_schedule", ln("epsilon_schedule"),
                                        f"mollification radius {eps} exceeds the collision radius {rc}"))
            elif eps > rc / 4:
                diags.append(Diagnostic("warning", "sim.epsilon_schedule", ln("epsilon_schedule"),
                                        f"mollification radius {eps} exceeds r_coll/4"))
    return s


def _near(kappa: float, threshold: float, rel: float = 0.05) -> bool:
    return abs(kappa - threshold) <= rel * threshold


def _check_analysis(exp, a, sim, lines, diags) -> None:
    ln = lambda k: lines.get(f"analysis.{k}")
    kappas = []
    if "kappa_grid" in a and a["kappa_grid"] is not REQUIRED:
        grid = a["kappa_grid"]
        if not isinstance(grid, list) or not grid or not all(isinstance(k, (int, float)) and k >= 0 for k in grid):
            diags.append(Diagnostic("error", "analysis.kappa_grid", ln("kappa_grid"),
                                    "expected a non-empty list of nonnegative numbers"))
        else:
            if sorted(grid) != grid:
                diags.append(Diagnostic("error", "analysis.kappa_grid", ln("kappa_grid"), "must be sorted"))
            kappas = [(k, ln("kappa_grid")) for k in grid]
    if "kappa" in a and isinstance(a["kappa"], (int, float)):
        kappas.append((a["kappa"], ln("kappa")))
        if a["kappa"] < 0:
            diags.append(Diagnostic("error", "analysis.kappa", ln("kappa"), "kappa must be nonnegative"))
    if "dim" in a and isinstance(a["dim"], int) and a["dim"] < 3:
        diags.append(Diagnostic("error", "analysis.dim", ln("dim"), "dimension must be at least 3"))
    d = a.get("dim") if isinstance(a.get("dim"), int) else (sim or {}).get("dim", 3)
    if isinstance(d, int) and d >= 3:
        for k, line in kappas:
            for thr, what in ((16.0, "collision / W^{2,1} threshold 16"),
                              (16.0 * (d / (d - 2.0)) ** 2, "local summability threshold")):
                if _near(float(k), thr):
                    diags.append(Diagnostic("info", "analysis", line,
                                            f"kappa={k} lies within 5% of the {what} ({thr:g})"))
    if exp == "heat_kernel_check" and isinstance(a.get("kappa"), (int, float)) and a["kappa"] >= 16:
        diags.append(Diagnostic("error", "analysis.kappa", ln("kappa"), "heat kernel check needs kappa < 16"))
    if exp in ("feynman_kac", "krylov") and isinstance(a.get("profile"), dict):
        prof = a["profile"]
        kind = prof.get("kind")
        if kind not in PROFILE_FIELDS:
            diags.append(Diagnostic("error", "analysis.profile.kind", lines.get("analysis.profile.kind"),
                                    f"expected one of {sorted(PROFILE_FIELDS)}"))
        else:
            rest = {k: v for k, v in prof.items() if k != "kind"}
            filled = _fill(rest, PROFILE_FIELDS[kind], "analysis.profile.", lines, diags)
            a["profile"] = {"kind": kind, **filled}
    if exp == "feynman_kac" and isinstance(a.get("lambda"), (int, float)) and a["lambda"] < 1:
        diags.append(Diagnostic("error", "analysis.lambda", ln("lambda"), "lambda must be >= 1"))
    if exp == "multiparticle_hardy" and isinstance(a.get("n_particles"), int) and a["n_particles"] < 2:
        diags.append(Diagnostic("error", "analysis.n_particles", ln("n_particles"), "need at least 2 particles"))
    if exp == "hardy_estimate" and a.get("flavor") not in ("F", "MF", "DivPlus"):
        diags.append(Diagnostic("error", "analysis.flavor", ln("flavor"), "flavor must be F, MF or DivPlus"))
    if exp == "psi_test":
        for v in a.get("variants") or []:
            if v not in ("L1", "W21"):
                diags.append(Diagnostic("error", "analysis.variants", ln("variants"), f"unknown variant {v!r}"))
    if sim is not None and isinstance(sim.get("dim"), int) and d != sim.get("dim") and "dim" in a:
        diags.append(Diagnostic("error", "analysis.dim", ln("dim"), "analysis.dim disagrees with sim.dim"))


def kappa_threshold_info(kappa: float, dim: int) -> dict:
    nu = bessel_dimension(kappa, dim)
    return {"bessel_dimension": nu, "collides": nu < 2, "summable": kappa < 16 * (dim / (dim - 2)) ** 2,
            "margin_to_16": kappa - 16.0, "log_ratio": math.log(kappa / 16.0) if kappa > 0 else None}
