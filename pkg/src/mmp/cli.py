"""Configuration-driven experiment runner.

    mmp <task> --config <file> [--seed S] [--out DIR]

Configs are TOML (or a manifest.json written by a previous run, which
replays it).  Grammar:

    task = "simulate"          # optional, must match the positional task
    seed = 7                   # required for simulate / simulate_coupled
    mode = "exact"             # exact | float | auto

    [family]                   # built-in name plus its parameters
    name = "ex1_h"
    h = "inv"
    # name = "mmzrp_from_marginal" uses [marginal] and a sequence c
    # name = "mmtp_from_marginal"  uses [marginal] and a sequence g0

    [marginal]                 # kind = ex4 | ex4_pi | geometric | weights | from_rates | file
    kind = "ex4"
    b = "2"

    [kernel]                   # type = totally_asymmetric | nearest_neighbour | offsets
    type = "totally_asymmetric"
    d = 1

    [params]                   # task-specific values, see TASK_FIELDS

Rationals may be written as strings ("3/2").  Exit codes: 0 pass,
1 property failure, 2 validation error, 3 guard exceeded.  The
MMP_OUTPUT_ROOT environment variable overrides the default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from . import __version__
from .invariance import GuardExceeded
from .verdict import jsonable

TASKS = ("check_invariance", "check_attractiveness", "coupling_verify", "simulate",
         "simulate_coupled", "canonical", "fixed_volume", "thermo", "f_scan", "stationarity")

# required [params] keys per task; family/marginal/kernel requirements are separate
TASK_FIELDS = {
    "check_invariance": [],
    "check_attractiveness": [],
    "coupling_verify": ["quad_cutoff"],
    "simulate": ["L", "events"],
    "simulate_coupled": ["L", "events"],
    "canonical": ["L", "N"],
    "fixed_volume": ["L", "N_list"],
    "thermo": ["rho", "L_list"],
    "f_scan": ["alpha_max"],
    "stationarity": ["L", "N"],
}
NEEDS_FAMILY = {"check_invariance", "check_attractiveness", "coupling_verify", "simulate",
                "simulate_coupled", "stationarity"}
NEEDS_MARGINAL = {"canonical", "fixed_volume", "thermo"}
STOCHASTIC = {"simulate", "simulate_coupled"}

EXIT_PASS, EXIT_FAIL, EXIT_INVALID, EXIT_GUARD = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str
    family: dict = field(default_factory=dict)
    marginal: dict = field(default_factory=dict)
    kernel: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    mode: str = "exact"
    seed: Optional[int] = None
    out: Optional[str] = None

    def echo(self) -> dict:
        d = {"task": self.task, "mode": self.mode, "family": self.family, "marginal": self.marginal,
             "kernel": self.kernel, "params": self.params}
        if self.seed is not None:
            d["seed"] = self.seed
        return d


def load_config(path: str, task: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    if p.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
        raw = raw.get("config", raw)
    else:
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    return validate(raw, task, seed)


def validate(raw: dict, task: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    known = {"task", "seed", "mode", "family", "marginal", "kernel", "params", "out"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"field '{key}': unknown top-level key")
    cfg_task = raw.get("task")
    if task and cfg_task and task != cfg_task:
        raise ConfigError(f"field 'task': config says {cfg_task!r} but {task!r} was requested")
    task = task or cfg_task
    if task not in TASKS:
        raise ConfigError(f"field 'task': expected one of {', '.join(TASKS)}, got {task!r}")
    mode = raw.get("mode", "exact")
    if mode not in ("exact", "float", "auto"):
        raise ConfigError(f"field 'mode': expected exact, float or auto, got {mode!r}")
    for sect in ("family", "marginal", "kernel", "params"):
        if sect in raw and not isinstance(raw[sect], dict):
            raise ConfigError(f"field '{sect}': expected a table")
    params = dict(raw.get("params", {}))
    for key in TASK_FIELDS[task]:
        if key not in params:
            raise ConfigError(f"field 'params.{key}': required for task {task}")
    family = dict(raw.get("family", {}))
    if task in NEEDS_FAMILY and "name" not in family:
        raise ConfigError("field 'family.name': required for task " + task)
    marginal = dict(raw.get("marginal", {}))
    if task in NEEDS_MARGINAL and "kind" not in marginal:
        raise ConfigError("field 'marginal.kind': required for task " + task)
    if task == "f_scan" and "b" not in params and "r" not in params:
        raise ConfigError("field 'params.b': f_scan needs b (or a ratio sequence r)")
    s = seed if seed is not None else raw.get("seed")
    if task in STOCHASTIC and s is None:
        raise ConfigError("field 'seed': required for stochastic task " + task)
    if s is not None and (not isinstance(s, int) or isinstance(s, bool) or s < 0):
        raise ConfigError(f"field 'seed': expected a nonnegative integer, got {s!r}")
    return ExperimentConfig(task, family, marginal, dict(raw.get("kernel", {})), params, mode, s,
                            raw.get("out"))


# ---------------------------------------------------------------------------
# builders

def build_family(spec: dict, marginal_spec: dict):
    from .invariance import build_mmtp_rates, build_mmzrp_rates
    from .rates import make_builtin, sequence_from_spec

    p = {k: v for k, v in spec.items() if k != "name"}
    name = spec["name"]
    if name == "mmzrp_from_marginal":
        mu = build_marginal(marginal_spec, None)
        return build_mmzrp_rates(mu, sequence_from_spec(p.get("c", "one"))), mu
    if name == "mmtp_from_marginal":
        mu = build_marginal(marginal_spec, None)
        return build_mmtp_rates(mu, sequence_from_spec(p.get("g0", "one")), int(p.get("cutoff", 12))), mu
    try:
        return make_builtin(name, p), None
    except (KeyError, ValueError) as e:
        raise ConfigError(f"field 'family': {e}") from None


def build_marginal(spec: dict, family):
    from .measures import (Marginal, ex4_marginal, ex4_pi_marginal, geometric, marginal_from_rates)
    from .rates import as_number

    kind = spec.get("kind")
    try:
        if kind == "ex4":
            return ex4_marginal(spec["b"])
        if kind == "ex4_pi":
            return ex4_pi_marginal(spec["b"], spec.get("pi0"))
        if kind == "geometric":
            return geometric(spec["ratio"], int(spec.get("truncation", 64)), bool(spec.get("normalized", True)))
        if kind == "weights":
            return Marginal(tuple(as_number(x) for x in spec["weights"]))
        if kind == "file":
            return Marginal.from_text(Path(spec["path"]).read_text())
        if kind == "from_rates":
            if family is None:
                raise ConfigError("field 'marginal.kind': from_rates needs a family")
            return marginal_from_rates(family, spec.get("phi", 1), int(spec.get("truncation", 128)))
    except KeyError as e:
        raise ConfigError(f"field 'marginal.{e.args[0]}': required for kind {kind}") from None
    raise ConfigError(f"field 'marginal.kind': unknown kind {kind!r}")


def build_kernel(spec: dict):
    from .lattice import Kernel

    kind = spec.get("type", "totally_asymmetric")
    d = int(spec.get("d", 1))
    if kind == "totally_asymmetric":
        return Kernel.totally_asymmetric(d)
    if kind == "nearest_neighbour":
        return Kernel.nearest_neighbour(d, spec.get("right", "1/2"))
    if kind == "offsets":
        return Kernel.from_pairs(d, spec["offsets"])
    raise ConfigError(f"field 'kernel.type': unknown type {kind!r}")


# ---------------------------------------------------------------------------
# tasks

def _result(passed: Optional[bool], record: dict, summary: list, data: Optional[dict] = None) -> dict:
    status = EXIT_PASS if passed or passed is None else EXIT_FAIL
    return {"status": status, "passed": passed, "record": record, "summary": summary, "data": data or {}}


def _task_check_invariance(cfg, family, mu):
    from .invariance import check_mmzrp_invariance, check_product_invariance, compute_A
    from .rates import ProcessClass

    if mu is None:
        mu = build_marginal(cfg.marginal or {"kind": "from_rates"}, family)
    cutoff = int(cfg.params.get("cutoff", 12))
    kernel = build_kernel(cfg.kernel)
    A = compute_A(family, mu, cutoff)
    v = check_product_invariance(A, kernel.symmetry)
    rec = {"verdict": v}
    if family.kind == ProcessClass.MMZRP:
        rec["mmzrp"] = check_mmzrp_invariance(family, mu, cutoff)
    summary = [f"product invariance ({kernel.symmetry} kernel): {'PASS' if v.passed else 'FAIL'}",
               v.note]
    if v.witness:
        summary.append(f"witness: {v.witness}")
    return _result(v.passed, rec, summary, {"A_matrix.dat": A.to_text()})


def _task_check_attractiveness(cfg, family, mu):
    from .attractiveness import check_attractiveness

    v = check_attractiveness(family, int(cfg.params.get("cutoff", 20)))
    summary = [f"attractiveness: {'PASS' if v.passed else 'FAIL'}", v.note]
    if v.witness:
        summary.append(f"witness: {v.witness}")
    return _result(v.passed, {"verdict": v}, summary)


def _task_coupling_verify(cfg, family, mu):
    from .coupling import verify_coupling
    from .rates import check_growth

    qc = int(cfg.params["quad_cutoff"])
    gr = check_growth(family, "LipschitzJump", scan_cutoff=int(cfg.params.get("scan_cutoff", 2 * qc)))
    rep = verify_coupling(family, qc, gr.best_constant)
    summary = [f"coupling checks on {rep.quads_checked} quads: {'PASS' if rep.passed else 'FAIL'}",
               f"Lipschitz constant C = {gr.best_constant}"]
    if rep.failures:
        summary.append(f"counterexample: {rep.failures[0]}")
    return _result(rep.passed, {"report": rep, "growth": gr}, summary)


def _init_kwargs(cfg, mu):
    p = cfg.params
    init = p.get("init", "fixed_density")
    kw = {"init": init}
    if init == "fixed_density":
        if "N" in p:
            kw["N"] = int(p["N"])
        elif "density" in p:
            kw["density"] = p["density"]
        else:
            raise ConfigError("field 'params.density': fixed_density init needs density or N")
    elif init == "deterministic":
        if "occupancy" not in p:
            raise ConfigError("field 'params.occupancy': deterministic init needs an occupancy list")
        kw["occupancy"] = p["occupancy"]
    elif init == "product_sample":
        kw["mu"] = mu
        kw["phi"] = p.get("phi", 1)
    else:
        raise ConfigError(f"field 'params.init': unknown init {init!r}")
    return kw


def _target(cfg, family, mu):
    from .measures import geometric

    t = cfg.params.get("target")
    if t is None:
        return None
    if isinstance(t, str) and t.startswith("geometric:"):
        return geometric(t.split(":", 1)[1], truncation=256)
    if t == "marginal":
        return mu if mu is not None else build_marginal(cfg.marginal or {"kind": "from_rates"}, family)
    raise ConfigError(f"field 'params.target': unknown target {t!r}")


def _hist_text(h) -> str:
    return "".join(f"{n} {float(v):.12g}\n" for n, v in enumerate(h))


def _task_simulate(cfg, family, mu):
    from .simulator import estimate_observables, replica_seeds, build_system, simulate, total_variation

    p = cfg.params
    kernel = build_kernel(cfg.kernel)
    target = _target(cfg, family, mu)
    kw = _init_kwargs(cfg, mu)
    R = int(p.get("replicas", 1))
    cps = [int(c) for c in p.get("checkpoints", [])]
    reps = []
    for s in replica_seeds(cfg.seed, R):
        sysm = build_system(family, kernel, int(p["L"]), seed=s, **kw)
        reps.append(simulate(sysm, int(p["events"]), int(p.get("burn_in", 0)), target, cps))
    agg = estimate_observables(reps)
    if target is not None:
        agg.tv = total_variation(agg.histogram, target)
    for r in reps:
        r.wall_time = 0.0
        for c in r.checkpoints:
            c.pop("configuration", None)
    agg.wall_time = 0.0
    tol = p.get("tv_tolerance")
    passed = None if tol is None or agg.tv is None else bool(agg.tv < float(tol))
    summary = [f"replicas {R}, events per replica {p['events']}, burn-in {p.get('burn_in', 0)}",
               f"N = {agg.N}, absorbing = {agg.absorbing}"]
    if agg.tv is not None:
        summary.append(f"TV to target = {agg.tv:.6g}" + ("" if tol is None else f" (tolerance {tol})"))
    data = {"histogram.dat": _hist_text(agg.histogram), "max_site.dat": _hist_text(agg.max_law)}
    if cps and target is not None:
        rows = []
        for i, c in enumerate(reps[0].checkpoints):
            rows.append(f"{c['events']} {np.mean([r.checkpoints[i]['tv'] for r in reps]):.12g}\n")
        rows.append(f"{p['events']} {np.mean([r.tv for r in reps]):.12g}\n")
        data["tv_checkpoints.dat"] = "".join(rows)
    return _result(passed, {"aggregate": agg, "replicas": reps}, summary, data)


def _task_simulate_coupled(cfg, family, mu):
    from .attractiveness import check_attractiveness
    from .simulator import build_system, replica_seeds, simulate_coupled

    p = cfg.params
    kernel = build_kernel(cfg.kernel)
    kw = _init_kwargs(cfg, mu)
    extra = int(p.get("extra", 0))
    R = int(p.get("replicas", 1))
    total, rows = 0, []
    for s in replica_seeds(cfg.seed, R):
        a = build_system(family, kernel, int(p["L"]), seed=s, **kw)
        occ = a.config.occupancy.copy()
        if extra:
            occ += np.random.Generator(np.random.PCG64(s)).multinomial(extra, np.full(len(occ), 1 / len(occ)))
        b = build_system(family, kernel, int(p["L"]), init="deterministic", occupancy=occ, seed=s)
        r = simulate_coupled([a, b], int(p["events"]))
        total += r.order_violations or 0
        rows.append(f"{s} {r.order_violations}\n")
    attractive = check_attractiveness(family, int(p.get("cutoff", 20))).passed
    passed = (total == 0) if attractive else None
    summary = [f"order violations over {R} seeds: {total}",
               f"family attractive up to cutoff: {attractive}"]
    return _result(passed, {"order_violations": total, "attractive": attractive}, summary,
                   {"violations.dat": "".join(rows)})


def _task_canonical(cfg, family, mu):
    from .condensation import build_canonical, canonical_marginal, max_site_law

    p = cfg.params
    mode = "auto" if cfg.mode == "auto" else cfg.mode
    ens = build_canonical(mu, int(p["L"]), int(p["N"]), mode)
    marg = canonical_marginal(ens, 1)
    law = max_site_law(ens, "exact" if ens.exact and cfg.mode == "exact" else "auto")
    mode_m = int(np.argmax(np.array(law, dtype=float)))
    summary = [f"canonical ensemble L={ens.L}, N={ens.N}, exact={ens.exact}",
               f"max-site mode = {mode_m}"]
    return _result(None, {"marginal": list(marg), "max_site_law": list(law), "exact": ens.exact},
                   summary, {"marginal.dat": _hist_text(marg), "max_site.dat": _hist_text(law)})


def _task_fixed_volume(cfg, family, mu):
    from .condensation import fixed_volume_test

    p = cfg.params
    t = fixed_volume_test(mu, int(p["L"]), [int(n) for n in p["N_list"]], p.get("reference", "sorted_product"))
    summary = [t.label, f"decreasing: {t.decreasing}",
               f"heuristic condensation verdict (TV < 0.05 at largest N): {t.heuristic_verdict}", t.note]
    return _result(None, {"table": t.rows, "decreasing": t.decreasing, "heuristic": t.heuristic_verdict},
                   summary, {"tv.dat": t.to_text()})


def _task_thermo(cfg, family, mu):
    from .condensation import thermodynamic_test

    p = cfg.params
    t = thermodynamic_test(mu, Fraction(str(p["rho"])), [int(x) for x in p["L_list"]], int(p.get("sites", 1)))
    summary = [t.label, f"decreasing: {t.decreasing}", f"max-site modes: {t.extra['max_site_mode']}", t.note]
    return _result(None, {"table": t.rows, "decreasing": t.decreasing, "extra": t.extra}, summary,
                   {"tv.dat": t.to_text()})


def _task_f_scan(cfg, family, mu):
    from .attractiveness import ex4_ratio, f_diagnostic
    from .rates import sequence_from_spec

    p = cfg.params
    r = ex4_ratio(p["b"]) if "b" in p else sequence_from_spec(p["r"])
    vals = f_diagnostic(r, int(p["alpha_max"]))
    neg = [a for a, v in vals.items() if v < 0]
    summary = [f"F computed for alpha = 2..{p['alpha_max']}",
               f"first negative alpha: {neg[0] if neg else 'none'}"]
    return _result(None, {"F": vals, "first_negative": neg[0] if neg else None}, summary,
                   {"f_scan.dat": "".join(f"{a} {float(v):.15g}\n" for a, v in vals.items())})


def _task_stationarity(cfg, family, mu):
    from .invariance import exact_stationarity_check

    p = cfg.params
    if mu is None:
        mu = build_marginal(cfg.marginal or {"kind": "from_rates"}, family)
    kernel = build_kernel(cfg.kernel)
    Ns = p["N"] if isinstance(p["N"], list) else [p["N"]]
    reps = [exact_stationarity_check(family, mu, int(p["L"]), int(n), kernel,
                                     int(p.get("guard", 2_000_000))) for n in Ns]
    for r in reps:
        r.wall_time = 0.0
    ok = all(r.passed for r in reps)
    summary = [f"N={r.N}: {r.states} states, residual {r.residual}" for r in reps]
    return _result(ok, {"reports": reps}, summary)


DISPATCH = {
    "check_invariance": _task_check_invariance,
    "check_attractiveness": _task_check_attractiveness,
    "coupling_verify": _task_coupling_verify,
    "simulate": _task_simulate,
    "simulate_coupled": _task_simulate_coupled,
    "canonical": _task_canonical,
    "fixed_volume": _task_fixed_volume,
    "thermo": _task_thermo,
    "f_scan": _task_f_scan,
    "stationarity": _task_stationarity,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one task; returns the result dict consumed by emit_report."""
    family, mu = None, None
    try:
        if cfg.family:
            family, mu = build_family(cfg.family, cfg.marginal)
        if cfg.task in NEEDS_MARGINAL:
            mu = build_marginal(cfg.marginal, family)
        res = DISPATCH[cfg.task](cfg, family, mu)
    except GuardExceeded as e:
        res = {"status": EXIT_GUARD, "passed": None, "record": {"guard": e.guard, "error": str(e)},
               "summary": [f"guard exceeded: {e.guard}", str(e)], "data": {}}
    res["task"] = cfg.task
    return res


def emit_report(results: dict, out_dir: Path, cfg: ExperimentConfig, wall_time: float) -> list:
    """Write report.json, summary.txt, data files and manifest.json under out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    report = {"task": results["task"], "status": results["status"], "passed": results["passed"],
              "record": jsonable(results["record"])}
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    written.append("report.json")
    (out_dir / "summary.txt").write_text("\n".join(results["summary"]) + "\n")
    written.append("summary.txt")
    for name, text in results["data"].items():
        (out_dir / name).write_text(text)
        written.append(name)
    import numba
    import scipy
    import sympy
    manifest = {
        "config": cfg.echo(),
        "versions": {"mmp": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "numba": numba.__version__, "sympy": sympy.__version__},
        "wall_time_seconds": wall_time,
        "exit_status": results["status"],
        "files": written,
    }
    (out_dir / "manifest.json").write_text(json.dumps(jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return written + ["manifest.json"]


def main(argv: Optional[list] = None) -> int:
    ap = argparse.ArgumentParser(prog="mmp", description="Mass migration process experiments.")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, help="TOML config or a previous manifest.json")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--out", default=None, help="output directory")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.task, args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    root = os.environ.get("MMP_OUTPUT_ROOT", "mmp_out")
    out_dir = Path(args.out or cfg.out or Path(root) / cfg.task)
    t0 = time.perf_counter()
    try:
        res = run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    emit_report(res, out_dir, cfg, time.perf_counter() - t0)
    print("\n".join(res["summary"]))
    print(f"outputs in {out_dir}")
    return res["status"]


if __name__ == "__main__":
    sys.exit(main())
