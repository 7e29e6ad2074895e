"""Command-line interface: scenario execution, probes, sweeps, reports.

Subcommands: run, steady, probe-mu, sweep-lambda, haff, check-restitution,
report, resume.  Every execution writes ``summary.json`` (schema version,
build id, resolved scenario, wall time, results or a machine-readable
error) plus ``moments.csv`` and, for sweeps, ``sweep.csv``.
"""

from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
import time as _time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, seeding
from .checkpoint import load_checkpoint, resume_simulation, save_checkpoint
from .dsmc import SimConfig, Simulation
from .ensemble import init_ensemble
from .errors import GranuliteError, ScenarioError
from .observables import MomentReport, moments, spatial_mode
from .restitution import Constant, check_assumptions
from .scenario import Scenario, parse_scenario_file, serialize_scenario
from .spectral_probe import (closure_mu, haff_cooling_probe, measure_mu,
                             predict_theta_inf, scaling_fit, steady_state,
                             theta_bar_for_model)

SCHEMA_VERSION = 1


def build_id() -> str:
    base = f"granulite-{__version__}"
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{base}+{rev.stdout.strip()}"
    except Exception:
        pass
    return base


def _f(x) -> str:
    """Stable shortest round-trip float formatting for CSV cells."""
    if x is None:
        return ""
    return repr(float(x))


def _mode_col(k) -> str:
    return f"|rho_{k[0]}_{k[1]}_{k[2]}|"


def _csv_header(modes) -> list[str]:
    return (["t", "mass", "px", "py", "pz", "E", "theta", "D", "D_err"]
            + [_mode_col(k) for k in modes] + ["tail"])


def _report_row(rep: MomentReport, modes) -> list[str]:
    d = rep.dissipation
    row = [_f(rep.time), _f(rep.mass), _f(rep.momentum[0]), _f(rep.momentum[1]),
           _f(rep.momentum[2]), _f(rep.energy), _f(rep.temperature),
           _f(d.value if d else None), _f(d.std_error if d else None)]
    row += [_f(abs(rep.mode_amplitudes[k])) if k in rep.mode_amplitudes else ""
            for k in modes]
    row.append(_f(rep.tail_moment))
    return row


def _write_moments_csv(path: Path, reports, modes) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_csv_header(modes))
        for rep in reports:
            writer.writerow(_report_row(rep, modes))


def _scenario_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "lambda": s.config.lam,
        "restitution": asdict(s.config.model) | {"kind": type(s.config.model).__name__},
        "n_particles": s.config.n_particles,
        "cells": list(s.config.cell_counts),
        "dt": s.config.dt,
        "t_end": s.config.t_end,
        "thermostat": s.config.thermostat_on,
        "momentum_projection": s.config.momentum_projection,
        "seed": s.config.seed,
        "init": asdict(s.init) | {"kind": type(s.init).__name__},
        "schedule": {"moments_period": s.moments_period,
                     "modes": [list(k) for k in s.modes]},
        "probe": {"kind": s.probe_kind, "delta": s.probe_delta,
                  "replicas": s.probe_replicas},
        "sweep": {"lambdas": list(s.sweep_lambdas)},
        "output": {"dir": s.output_dir},
    }


def _collect_report(sim: Simulation, modes) -> MomentReport:
    rep = moments(sim.ensemble)
    for k in modes:
        rep.mode_amplitudes[k] = spatial_mode(sim.ensemble, k, "density")
    return rep


def _run_trajectory(scenario: Scenario, out: Path,
                    checkpoint_time: float | None = None,
                    sim: Simulation | None = None,
                    skip_until: float = -1.0) -> dict:
    """Time-step to t_end, emitting scheduled moment rows.

    ``sim`` may be a resumed simulation; rows are then emitted only for
    times strictly greater than ``skip_until``.
    """
    cfg = scenario.config
    if sim is None:
        ens = init_ensemble(scenario.init, cfg.n_particles, cfg.seed)
        sim = Simulation(cfg, ens)
    report_every = max(1, round(scenario.moments_period / sim.dt))
    reports = []
    if sim.time > skip_until:
        reports.append(_collect_report(sim, scenario.modes))
    checkpoint_done = checkpoint_time is None
    n_steps = int(np.ceil(cfg.t_end / sim.dt - 1e-12))
    while sim.step_index < n_steps:
        sim.step()
        if sim.step_index % report_every == 0 and sim.time > skip_until:
            reports.append(_collect_report(sim, scenario.modes))
        if not checkpoint_done and sim.time >= checkpoint_time:
            save_checkpoint(out / "mid.ckpt", sim)
            checkpoint_done = True
    if sim.step_index % report_every != 0 and sim.time > skip_until:
        reports.append(_collect_report(sim, scenario.modes))
    _write_moments_csv(out / "moments.csv", reports, scenario.modes)
    save_checkpoint(out / "final.ckpt", sim)
    final = reports[-1] if reports else _collect_report(sim, scenario.modes)
    return {"t_final": sim.time, "steps": sim.step_index, "dt": sim.dt,
            "energy": final.energy, "temperature": final.temperature,
            "n_reports": len(reports)}


def _steady_flow(scenario: Scenario, out: Path) -> dict:
    ens, rep = steady_state(scenario.config)
    _write_moments_csv(out / "moments.csv", [rep], scenario.modes)
    sim = Simulation(replace(scenario.config, dt=None), ens,
                     step_index=0)
    save_checkpoint(out / "final.ckpt", sim)
    d = rep.dissipation
    res = {"theta_inf": rep.temperature, "energy": rep.energy,
           "tail_moment": rep.tail_moment,
           "dissipation": d.value if d else None,
           "dissipation_err": d.std_error if d else None}
    if scenario.config.lam > 0:
        gam = scenario.config.gamma
        inj = 6.0 * scenario.config.lam**gam
        res["injection"] = inj
        if d:
            res["balance_residual"] = abs(d.value - inj) / inj
        res["theta_inf_predicted"] = predict_theta_inf(scenario.config.model,
                                                       scenario.config.lam)
    return res


def _probe_mu_flow(scenario: Scenario, out: Path) -> dict:
    steady = steady_state(scenario.config)
    est = measure_mu(scenario.config, scenario.probe_delta,
                     scenario.probe_replicas, steady=steady)
    _write_moments_csv(out / "moments.csv", [steady[1]], scenario.modes)
    return {"mu": asdict(est), "theta_inf": steady[1].temperature,
            "mu_closure": closure_mu(scenario.config.model, scenario.config.lam)}


def _sweep_model(scenario: Scenario, lam: float):
    """Per-point model of a sweep; the constant family re-ties e0 = 1 - lambda."""
    model = scenario.config.model
    if isinstance(model, Constant):
        return Constant(e0=1.0 - lam)
    return model


def _sweep_flow(scenario: Scenario, out: Path) -> dict:
    if len(scenario.sweep_lambdas) < 4:
        raise ScenarioError("sweep.lambdas: a sweep needs at least 4 values")
    rows = []
    estimates = []
    steady_reports = []
    for i, lam in enumerate(scenario.sweep_lambdas):
        model = _sweep_model(scenario, lam)
        cfg = replace(scenario.config, lam=lam, model=model,
                      seed=seeding.replica_seed(scenario.config.seed, 1000 + i))
        steady = steady_state(cfg)
        est = measure_mu(cfg, scenario.probe_delta, scenario.probe_replicas,
                         steady=steady)
        estimates.append(est)
        steady_reports.append(steady[1])
        rows.append([_f(lam), _f(est.mu_measured), _f(est.mu_err),
                     _f(est.mu_predicted), _f(steady[1].temperature),
                     _f(theta_bar_for_model(model)), _f(est.gamma_used),
                     str(cfg.n_particles), str(cfg.seed)])
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "mu_measured", "mu_err", "mu_predicted",
                         "theta_inf", "theta_bar", "gamma_used",
                         "n_particles", "seed"])
        writer.writerows(rows)
    _write_moments_csv(out / "moments.csv", steady_reports, scenario.modes)
    gamma_hat, c_hat, r2 = scaling_fit(estimates)
    return {"scaling_fit": {"gamma_hat": gamma_hat, "C_hat": c_hat,
                            "r_squared": r2},
            "points": [asdict(e) for e in estimates]}


def _haff_flow(scenario: Scenario, out: Path) -> dict:
    fit, t0, series = haff_cooling_probe(scenario.config)
    reports = [MomentReport(time=t, mass=1.0, momentum=np.zeros(3),
                            energy=3.0 * temp, temperature=temp)
               for t, temp in series]
    _write_moments_csv(out / "moments.csv", reports, scenario.modes)
    return {"haff_exponent_p": -fit.rate, "t0": t0,
            "r_squared": fit.r_squared,
            "window": list(fit.window),
            "monotone_decay": bool(np.all(np.diff(series[:, 1]) <= 1e-12))}


def _check_restitution_flow(scenario: Scenario, out: Path) -> dict:
    grid = np.arange(0.0, 10.0 + 1e-9, 0.1)
    rep = check_assumptions(scenario.config.model, grid)
    _write_moments_csv(out / "moments.csv", [], scenario.modes)
    return {"assumptions": asdict(rep), "all_ok": rep.all_ok}


def execute(scenario: Scenario, mode: str | None = None,
            out_dir: str | None = None,
            checkpoint_time: float | None = None) -> int:
    """Run one scenario; returns a process exit status.

    ``mode`` overrides the scenario's probe kind (None means a plain
    trajectory run).  On failure the error is recorded machine-readably
    in summary.json and the status is nonzero.
    """
    out = Path(out_dir if out_dir is not None else scenario.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = _time.monotonic()
    summary = {"schema_version": SCHEMA_VERSION, "build_id": build_id(),
               "scenario": _scenario_dict(scenario), "mode": mode or "run"}
    try:
        if mode in (None, "run"):
            results = _run_trajectory(scenario, out, checkpoint_time)
        elif mode == "steady":
            results = _steady_flow(scenario, out)
        elif mode == "mu":
            results = _probe_mu_flow(scenario, out)
        elif mode == "sweep":
            results = _sweep_flow(scenario, out)
        elif mode == "haff":
            results = _haff_flow(scenario, out)
        elif mode == "check-restitution":
            results = _check_restitution_flow(scenario, out)
        else:
            raise ScenarioError(f"probe.kind: unknown mode {mode!r}")
        summary["status"] = "ok"
        summary["results"] = results
        status = 0
    except GranuliteError as exc:
        summary["status"] = "error"
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = 1
    summary["wall_time_s"] = _time.monotonic() - t0
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
        fh.write("\n")
    return status


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _resume_flow(args) -> int:
    scenario = parse_scenario_file(args.scenario)
    data = load_checkpoint(args.checkpoint)
    sim = resume_simulation(data, scenario.config)
    out = Path(args.output if args.output else scenario.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = _time.monotonic()
    summary = {"schema_version": SCHEMA_VERSION, "build_id": build_id(),
               "scenario": _scenario_dict(scenario), "mode": "resume",
               "resumed_from": {"time": data.time, "step": data.step_index}}
    try:
        results = _run_trajectory(scenario, out, sim=sim, skip_until=data.time)
        summary["status"] = "ok"
        summary["results"] = results
        status = 0
    except GranuliteError as exc:
        summary["status"] = "error"
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = 1
    summary["wall_time_s"] = _time.monotonic() - t0
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
        fh.write("\n")
    return status


def _report_flow(args) -> int:
    src = Path(args.directory)
    if not (src / "summary.json").exists():
        print(f"no summary.json in {src}", file=sys.stderr)
        return 1
    with open(src / "summary.json") as fh:
        summary = json.load(fh)
    rows = [["key", "value"],
            ["build_id", summary.get("build_id", "")],
            ["mode", summary.get("mode", "")],
            ["status", summary.get("status", "")]]
    for key, val in sorted((summary.get("results") or {}).items()):
        if isinstance(val, (int, float, str)) or val is None:
            rows.append([key, "" if val is None else str(val)])
    for name in ("moments.csv", "sweep.csv"):
        if (src / name).exists():
            rows.append(["file", name])
    with open(src / "report.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    print(f"wrote {src / 'report.csv'}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="granulite",
        description="Particle simulator for a diffusively driven inelastic gas")
    sub = parser.add_subparsers(dest="command", required=True)

    def scen_cmd(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", help="scenario TOML file")
        p.add_argument("--output", default=None, help="override output directory")
        return p

    run_p = scen_cmd("run", "time-step a scenario and emit moment rows")
    run_p.add_argument("--checkpoint-time", type=float, default=None,
                       help="also write mid.ckpt at this time")
    scen_cmd("steady", "relax to the driven steady state and report averages")
    scen_cmd("probe-mu", "measure the energy relaxation rate by linear response")
    scen_cmd("sweep-lambda", "measure mu over sweep.lambdas and fit the scaling")
    scen_cmd("haff", "free-cooling probe (thermostat off)")
    scen_cmd("check-restitution", "verify the restitution law's structural assumptions")

    rep_p = sub.add_parser("report", help="bundle an output directory into report.csv")
    rep_p.add_argument("directory")

    res_p = sub.add_parser("resume", help="continue a run from a checkpoint")
    res_p.add_argument("checkpoint")
    res_p.add_argument("scenario")
    res_p.add_argument("--output", default=None)

    args = parser.parse_args(argv)
    if args.command == "report":
        return _report_flow(args)
    if args.command == "resume":
        return _resume_flow(args)

    try:
        scenario = parse_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    mode = {"run": None, "steady": "steady", "probe-mu": "mu",
            "sweep-lambda": "sweep", "haff": "haff",
            "check-restitution": "check-restitution"}[args.command]
    checkpoint_time = getattr(args, "checkpoint_time", None)
    return execute(scenario, mode=mode, out_dir=args.output,
                   checkpoint_time=checkpoint_time)


if __name__ == "__main__":
    sys.exit(main())
