"""Scenario execution behind the command line: run, sweep, metrics, design."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .camera import CameraIntrinsics, ToolScene, linearize_one_link, linearize_tool, \
    visibility_interval
from .config import ScenarioConfig, digest, to_dict
from .errors import SimulationError, UnknownParameter
from .jointloop import build_inner_loop, simulate_joint_trajectory
from .lti.trace import SimTrace, step_metrics
from .servo import (
    CameraAdjustCase,
    RunOutcome,
    ToolScenario,
    assess_camera_adjustment,
    assess_tool_manipulation,
    fl_outer_design,
    ml_outer_design,
    tool_metrics,
)

SWEEPABLE = ("zeta", "omega_n", "tau_in", "tau_out", "d")


@dataclass
class RunRecord:
    name: str
    params: dict
    outcome: RunOutcome
    metrics: dict = field(default_factory=dict)

    @property
    def trace(self) -> SimTrace | None:
        return self.outcome.trace


def _intrinsics(cfg):
    return CameraIntrinsics(f_u=cfg.f_u, f_v=cfg.f_u, alpha_view=cfg.alpha)


def camera_case(cfg: ScenarioConfig, zeta: float, method: str | None = None) -> CameraAdjustCase:
    return CameraAdjustCase(phi=cfg.phi, d_qv=cfg.d_qv, q_v0=cfg.q_v0,
                            target_angle=cfg.camera_target, method=method or cfg.method,
                            zeta=zeta, omega_n=cfg.omega_n, tau_in=cfg.tau_in,
                            tau_out=cfg.tau_out, intrinsics=_intrinsics(cfg))


def tool_scenario(cfg: ScenarioConfig, zeta: float, mode: str) -> ToolScenario:
    scene = ToolScene(L=cfg.L, L_t=cfg.L_t, q_v_bar=cfg.q_v_bar, q_m0=cfg.q_m0, L1=cfg.L1)
    return ToolScenario(scene, d_qm=cfg.d_qm, target_angle=cfg.tool_target, mode=mode,
                        zeta=zeta, omega_n=cfg.omega_n, tau_in=cfg.tau_in,
                        intrinsics=_intrinsics(cfg), hysteresis=cfg.hysteresis)


def _safe_metrics(fn):
    try:
        return fn()
    except (ValueError, IndexError, KeyError):
        return {}


def _run_joint(cfg):
    design = build_inner_loop(cfg.tau_in)
    q_R = np.array(cfg.q_R)
    d_q = np.array(cfg.d_q)
    try:
        tr = simulate_joint_trajectory(design, q_R, d_q, cfg.dt, cfg.t_final)
        verdict, msg = "converged", ""
        worst = 0.0
        for i, r in enumerate(q_R):
            err = abs(tr[f"qbar{i}"][-1] - d_q[i] - r)
            step = abs(r)
            if step and err > 0.10 * step:
                verdict = "diverged"
            worst = max(worst, err / step if step else err)
        outcome = RunOutcome(tr, verdict, msg, worst, 1.0)
    except SimulationError as err:
        outcome = RunOutcome(err.trace, "diverged", str(err), math.inf, 1.0)
    metrics = {}
    if outcome.trace is not None and len(outcome.trace) > 1:
        for i, r in enumerate(q_R):
            metrics[f"q{i}"] = _safe_metrics(
                lambda i=i, r=r: step_metrics(outcome.trace, f"q{i}", reference=r).as_dict())
    return [RunRecord(cfg.kind, {"tau_in": cfg.tau_in}, outcome, metrics)]


def _run_camera(cfg):
    records = []
    zetas = cfg.zeta if cfg.method == "ml" else cfg.zeta[:1]
    for z in zetas:
        case = camera_case(cfg, z)
        out = assess_camera_adjustment(case, cfg.dt, cfg.t_final)
        name = f"{cfg.kind}-{cfg.method}" + (f"-z{z!r}" if cfg.method == "ml" else "")
        m = {}
        if out.trace is not None and len(out.trace) > 1:
            m = _safe_metrics(lambda: step_metrics(out.trace, "u_hat",
                                                   reference=case.u_R_target).as_dict())
        m["terminal_error"] = out.terminal_error
        m["step"] = out.step
        params = {"method": cfg.method, "zeta": z if cfg.method == "ml" else None}
        records.append(RunRecord(name, params, out, m))
    return records


def _run_tool(cfg):
    records = []
    for mode in cfg.modes:
        for z in cfg.zeta:
            sc = tool_scenario(cfg, z, mode)
            out = assess_tool_manipulation(sc, cfg.dt, cfg.t_final)
            m = {}
            if out.trace is not None and len(out.trace) > 1:
                m = _safe_metrics(lambda: tool_metrics(out.trace))
                m["switches"] = [[t, q, s] for t, q, s in out.trace.meta.get("switches", [])]
            m["terminal_error"] = out.terminal_error
            m["step"] = out.step
            records.append(RunRecord(f"{cfg.kind}-{mode}-z{z!r}", {"mode": mode, "zeta": z},
                                     out, m))
    return records


def execute(cfg: ScenarioConfig) -> list:
    """Simulate every variant the scenario describes; nothing is written."""
    return {"joint": _run_joint, "camera": _run_camera, "tool": _run_tool}[cfg.model](cfg)


def overall_verdict(records) -> str:
    return overall_verdict_from(r.outcome.verdict for r in records)


def overall_verdict_from(verdicts) -> str:
    verdicts = set(verdicts)
    if verdicts <= {"converged"}:
        return "converged"
    return "singular" if "singular" in verdicts else "diverged"


# --- file output -------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: non-finite floats become null, numpy scalars become floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, type(None), str, int)) and not isinstance(obj, np.integer):
        return obj
    if isinstance(obj, (np.integer,)):
        return int(obj)
    x = float(obj)
    return x if math.isfinite(x) else None


json_safe = _clean


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: ScenarioConfig, out_dir, plots: bool = True) -> dict:
    """Simulate, then write one CSV per run, metrics.json, plots and manifest.json (last)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = execute(cfg)
    files = []
    runs = []
    for r in records:
        entry = {"name": r.name, "params": r.params, "verdict": r.outcome.verdict,
                 "message": r.outcome.message, "file": None}
        if r.trace is not None:
            fname = f"{r.name}.csv"
            write_atomic(out / fname, r.trace.to_csv())
            files.append(fname)
            entry["file"] = fname
        runs.append(entry)
    metrics = {r.name: {"verdict": r.outcome.verdict, **r.metrics} for r in records}
    write_atomic(out / "metrics.json", _dumps(metrics))
    files.append("metrics.json")
    if plots:
        from .plotting import render
        files.extend(render(cfg, records, out))
    manifest = {
        "artifact": "cascadeservo",
        "version": __version__,
        "config": to_dict(cfg),
        "config_digest": digest(cfg),
        "runs": runs,
        "outputs": files,
        "verdict": overall_verdict(records),
    }
    write_atomic(out / "manifest.json", _dumps(manifest))
    manifest["records"] = records
    return manifest


def _sweep_field(cfg, parameter):
    if parameter == "d":
        return {"camera": "d_qv", "tool": "d_qm", "joint": "d_q"}[cfg.model]
    return parameter


def sweep(cfg: ScenarioConfig, parameter: str, values, out_dir, plots: bool = False) -> list:
    """One run per value under ``out_dir/<parameter>_<i>``; returns the comparison rows."""
    if parameter not in SWEEPABLE:
        raise UnknownParameter(f"{parameter!r} is not sweepable (choose from {SWEEPABLE})")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = _sweep_field(cfg, parameter)
    rows = []
    for i, v in enumerate(values):
        if parameter == "zeta":
            c = cfg.with_(zeta=(float(v),))
        elif name == "d_q":
            c = cfg.with_(d_q=(float(v),) * len(cfg.q_R))
        else:
            c = cfg.with_(**{name: float(v)})
        man = run(c, out / f"{parameter}_{i}", plots=plots)
        for r in man["records"]:
            m = r.metrics
            first = m if "overshoot_fraction" in m else next(
                (x for x in m.values() if isinstance(x, dict)), {})
            rows.append({"value": float(v), "run": r.name, "verdict": r.outcome.verdict,
                         "overshoot_fraction": first.get("overshoot_fraction", math.nan),
                         "settling_time": first.get("settling_time", math.nan),
                         "rise_time": first.get("rise_time", math.nan)})
    lines = ["value,run,verdict,overshoot_fraction,settling_time,rise_time"]
    for r in rows:
        lines.append(",".join([repr(r["value"]), r["run"], r["verdict"],
                               repr(float(r["overshoot_fraction"])),
                               repr(float(r["settling_time"])), repr(float(r["rise_time"]))]))
    write_atomic(out / f"sweep_{parameter}.csv", "\n".join(lines) + "\n")
    return rows


def recompute_metrics(csv_path, signal: str, reference: float | None = None,
                      band: float = 0.02) -> dict:
    tr = SimTrace.from_csv(csv_path)
    return step_metrics(tr, signal, band=band, reference=reference).as_dict()


def _coeffs(g):
    return {"num": [str(c) for c in g.num.coeffs], "den": [str(c) for c in g.den.coeffs],
            "num_float": [float(c) for c in g.num.coeffs],
            "den_float": [float(c) for c in g.den.coeffs],
            "powers": "ascending"}


def design_report(cfg: ScenarioConfig) -> dict:
    inner = build_inner_loop(cfg.tau_in)
    rep = {"inner": {"tau_in": cfg.tau_in, "controller": _coeffs(inner.controller),
                     "closed_loop": _coeffs(inner.closed_loop)}}
    if cfg.model == "camera":
        case = camera_case(cfg, cfg.zeta[0])
        if cfg.method == "fl":
            d = fl_outer_design(cfg.tau_out)
            rep["outer"] = {"method": "fl", "tau_out": cfg.tau_out, "controller": _coeffs(d.Gc)}
        else:
            C1, C2 = linearize_one_link(case.scene, cfg.q_v0, case.intrinsics)
            rep["outer"] = {"method": "ml", "C1": C1, "C2": C2, "by_zeta": {
                repr(z): _coeffs(ml_outer_design(C1, cfg.tau_in, cfg.omega_n, z).Gc)
                for z in cfg.zeta}}
    elif cfg.model == "tool":
        sc = tool_scenario(cfg, cfg.zeta[0], cfg.modes[0])
        C1 = linearize_tool(sc.scene, sc.intrinsics)
        lo, hi = visibility_interval(sc.scene, sc.intrinsics)
        rep["outer"] = {"method": "ml", "C1": C1,
                        "visibility_deg": [math.degrees(lo), math.degrees(hi)],
                        "by_zeta": {repr(z): _coeffs(ml_outer_design(C1, cfg.tau_in,
                                                                     cfg.omega_n, z).Gc)
                                    for z in cfg.zeta}}
    return rep
