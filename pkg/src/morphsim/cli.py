"""Command line: ``morphsim run | analyze | plan``.

Exit codes: 0 success, 1 the run finished but a monitor or the switch
scheduler reported a violation, 2 the configuration or the analysis was
rejected.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis as an
from . import config as cfgmod
from . import estimator as est
from . import experiment as ex
from .errors import DwellViolation, MorphsimError, SettlingViolation

EXIT_OK, EXIT_VIOLATION, EXIT_INVALID = 0, 1, 2

PLOT_SCRIPT = '''"""Four-panel figure for {name}: rate tracking, e_R, inertia estimates, control."""
import sys

import matplotlib.pyplot as plt
import numpy as np

data = np.genfromtxt({csv!r}, delimiter=",", names=True)
t = data["t"]
fig, ax = plt.subplots(4, 1, sharex=True, figsize=(8, 10))
for k, c in zip("xyz", "rgb"):
    ax[0].plot(t, data["Omega_" + k], c, label=r"$\\Omega_" + k + "$")
    ax[0].plot(t, data["Omegad_" + k], c + "--")
    ax[1].plot(t, data["eR_" + k], c, label=r"$e_{{R," + k + "}}$")
    ax[3].plot(t, data["u_" + k], c, label=r"$u_" + k + "$")
for name in ("xx", "yy", "zz", "xy", "xz", "yz"):
    ax[2].plot(t, data["hhat_" + name], label=r"$\\hat J_{{" + name + "}}$")
labels = ["(a) angular velocity [rad/s]", "(b) attitude error $e_R$",
          "(c) inertia estimates [kg m$^2$]", "(d) control torque [N m]"]
for a, lab in zip(ax, labels):
    a.set_title(lab, loc="left", fontsize=9)
    a.legend(fontsize=7, ncol=6)
    a.grid(alpha=0.3)
ax[-1].set_xlabel("t [s]")
fig.tight_layout()
if len(sys.argv) > 1:
    fig.savefig(sys.argv[1], dpi=150)
else:
    plt.show()
'''


def _load(spec) -> cfgmod.ScenarioConfig:
    """Path to a TOML file, or the name of a bundled scenario."""
    p = Path(spec)
    if p.is_file() or p.suffix == ".toml" or os.sep in str(spec):
        return cfgmod.load(p)
    return cfgmod.load_bundled(str(spec))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_json(path, doc):
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# run ----------------------------------------------------------------------


def run_one(spec, out=None, dt=None, horizon=None) -> int:
    cfg = _load(spec).with_overrides(dt=dt, horizon=horizon)
    out_dir = Path(out or cfg.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.output.prefix or cfg.name
    csv_path = out_dir / f"{stem}.csv"
    events_path = out_dir / f"{stem}.events.json"
    plot_path = out_dir / f"{stem}_plot.py"
    try:
        result = ex.run_config(cfg)
    except (SettlingViolation, DwellViolation) as exc:
        approach = getattr(exc, "approach", None)
        doc = {"scenario": cfg.name, "status": "schedule_rejected",
               "error": {"kind": type(exc).__name__, "message": str(exc)},
               "info": getattr(exc, "info", {})}
        if approach is not None:
            approach.to_csv(csv_path)
            doc.update(approach.events_document())
            plot_path.write_text(PLOT_SCRIPT.format(name=cfg.name, csv=csv_path.name))
        _write_json(events_path, doc)
        print(f"{cfg.name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    result.log.to_csv(csv_path)
    doc = {"scenario": cfg.name, "status": "ok" if not result.violations else "violations",
           "info": result.info, **result.log.events_document()}
    if result.scenario.certificate is not None:
        doc["certificate"] = result.scenario.certificate.to_dict()
    if result.schedule is not None:
        doc["schedule_checks"] = result.schedule.checks
    _write_json(events_path, doc)
    plot_path.write_text(PLOT_SCRIPT.format(name=cfg.name, csv=csv_path.name))
    print(f"{cfg.name}: {len(result.log)} rows -> {csv_path}")
    if result.violations:
        kinds = {}
        for v in result.violations:
            kinds[v["kind"]] = kinds.get(v["kind"], 0) + 1
        summary = ", ".join(f"{k} x{n}" for k, n in sorted(kinds.items()))
        print(f"{cfg.name}: monitor violations: {summary}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _run_worker(args):
    spec, out, dt, horizon = args
    try:
        return str(spec), run_one(spec, out, dt, horizon)
    except MorphsimError as exc:
        print(f"{spec}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return str(spec), EXIT_INVALID


def run_batch(directory, out=None, dt=None, horizon=None, workers=None) -> int:
    files = sorted(Path(directory).glob("*.toml"))
    if not files:
        print(f"no .toml files in {directory}", file=sys.stderr)
        return EXIT_INVALID
    jobs = [(str(f), out, dt, horizon) for f in files]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        codes = dict(pool.map(_run_worker, jobs))
    for f, code in codes.items():
        print(f"{Path(f).name}: exit {code}")
    return max(codes.values())


def cmd_run(args) -> int:
    if args.batch:
        return run_batch(args.config, args.out, args.dt, args.horizon, args.workers)
    return run_one(args.config, args.out, args.dt, args.horizon)


# analyze ------------------------------------------------------------------


def analyze(cfg: cfgmod.ScenarioConfig) -> dict:
    """Certificate report: c_max, dwell time, switch ratios and jump bounds."""
    cert = ex.certify(cfg)
    if cert is None:
        return {"scenario": cfg.name, "certificate": None,
                "note": "the fixed-bound robust baseline carries no certificate"}
    doc = {"scenario": cfg.name, "certificate": cert.to_dict()}
    if cert.case == "adaptive":
        cfgs = ex.configurations(cfg)
        gain = cfg.controller.adaptation_gain
        caps = {c.index: est.bregman_divergence(c.true_inertia, c.nominal_inertia) / gain
                for c in cfgs}
        sw = cfg.switching
        plan = an.SwitchPlan(sw.tau_s or 0.0, sw.rho, caps)
        idx = sorted(cert.subsystems)
        doc["switch_plan"] = {"tau_s": sw.tau_s, "rho": sw.rho, "z2_bound": caps}
        doc["jump_bound"] = {f"{i}-{j}": an.jump_bound(cert, plan, i, j)
                             for i in idx for j in idx if i != j}
    return doc


def cmd_analyze(args) -> int:
    cfg = _load(args.config)
    doc = analyze(cfg)
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True)
    if args.json:
        Path(args.json).write_text(text + "\n")
    print(text)
    return EXIT_OK


# plan ---------------------------------------------------------------------


def plan(cfg: cfgmod.ScenarioConfig, out=None) -> dict:
    ref, tau_s, tau_d = ex.plan_mission(cfg)
    doc = {"scenario": cfg.name, "tau_s": tau_s, "tau_d": tau_d, "reference": ref.describe()}
    sw = cfg.switching
    t_in = getattr(ref, "arrival_time", None)
    if t_in is not None:
        if t_in < tau_d:
            raise DwellViolation(f"planned fold at t={t_in:.4g} s is below the dwell time "
                                 f"{tau_d:.4g} s")
        t_out = max(t_in + sw.passage_duration, t_in + tau_d)
        doc["signal"] = [[0.0, sw.outside], [t_in, sw.inside], [t_out, sw.outside]]
        out_dir = Path(out or cfg.output.dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{cfg.output.prefix or cfg.name}.plan.csv"
        rows = ref.segment.sample(201)
        header = "t,x,y,z,vx,vy,vz,ax,ay,az"
        np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.17g")
        doc["samples"] = str(path)
        doc["jerk_integral"] = ref.segment.jerk_integral().tolist()
    else:
        doc["signal"] = None
        doc["note"] = "a step command has no planned arrival; the fold is timed in flight"
    return doc


def cmd_plan(args) -> int:
    cfg = _load(args.config)
    if cfg.reference.kind not in ("min_jerk", "waypoint"):
        print(f"{cfg.name}: reference kind {cfg.reference.kind!r} has no planner request",
              file=sys.stderr)
        return EXIT_INVALID
    doc = plan(cfg, args.out)
    print(json.dumps(_jsonable(doc), indent=2, sort_keys=True))
    return EXIT_OK


# entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morphsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write CSV, events JSON and a plot script")
    r.add_argument("config", help="TOML file, bundled scenario name, or a directory with --batch")
    r.add_argument("--out", help="output directory (default from the config)")
    r.add_argument("--dt", type=float, help="override the step size")
    r.add_argument("--horizon", type=float, help="override the horizon")
    r.add_argument("--batch", action="store_true", help="run every .toml in a directory in parallel")
    r.add_argument("--workers", type=int, default=None, help="parallel workers for --batch")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="print the stability certificate")
    a.add_argument("config")
    a.add_argument("--json", help="also write the certificate to this file")
    a.set_defaults(func=cmd_analyze)

    pl = sub.add_parser("plan", help="plan the passage trajectory and switching signal")
    pl.add_argument("config")
    pl.add_argument("--out", help="directory for the sampled trajectory")
    pl.set_defaults(func=cmd_plan)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MorphsimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
