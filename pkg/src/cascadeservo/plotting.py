"""Figures derived from simulation traces (SVG, rendered off-screen)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "font.size": 9,
    "svg.hashsalt": "cascadeservo",
    "svg.fonttype": "path",
}


def _save(fig, path: Path) -> str:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path.name


def _label(rec):
    p = rec.params
    bits = [p[k] if k != "zeta" else f"ζ={p[k]:g}" for k in ("method", "mode", "zeta")
            if p.get(k) is not None]
    tag = " ".join(str(b) for b in bits) or rec.name
    return tag if rec.outcome.verdict == "converged" else f"{tag} ({rec.outcome.verdict})"


def plot_joint(records, path: Path) -> list:
    tr = records[0].trace
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9.0, 3.8))
    n = sum(1 for k in tr.names if k.startswith("qbar"))
    for i in range(n):
        a1.plot(tr.t, [math.degrees(v) for v in tr[f"qbar{i}"]], label=f"joint {i + 1}")
    a1.set_xlabel("t [s]")
    a1.set_ylabel("joint angle [deg]")
    a1.legend(ncol=2)
    for ax in ("x", "y", "z"):
        if f"ee_{ax}" in tr:
            a2.plot(tr.t, tr[f"ee_{ax}"], label=ax.upper())
    a2.set_xlabel("t [s]")
    a2.set_ylabel("tool position [m]")
    a2.legend()
    return [_save(fig, path)]


def plot_camera(records, path: Path, target: float) -> list:
    fig, ax = plt.subplots()
    for rec in records:
        tr = rec.trace
        if tr is None or len(tr) == 0:
            continue
        ax.plot(tr.t, tr["u_hat"], label=_label(rec))
    ax.axhline(target, color="k", lw=0.8, ls=":")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("image coordinate û [mm]")
    ax.legend()
    return [_save(fig, path)]


def plot_tool(records, path_q: Path, path_x: Path, target_deg: float) -> list:
    figs = []
    for sig, ylabel, path, scale in (("qbar_mf", "tool angle [deg]", path_q, math.degrees),
                                     ("P_Tx", "tool tip X [m]", path_x, float)):
        fig, ax = plt.subplots()
        for i, rec in enumerate(records):
            tr = rec.trace
            if tr is None or len(tr) == 0:
                continue
            ls = "--" if rec.params.get("mode") == "fb_only" else "-"
            ax.plot(tr.t, [scale(v) for v in tr[sig]], ls, label=_label(rec), color=f"C{i % 4}")
        if sig == "qbar_mf":
            ax.axhline(target_deg, color="k", lw=0.8, ls=":")
        ax.set_xlabel("t [s]")
        ax.set_ylabel(ylabel)
        ax.legend(ncol=2)
        figs.append(_save(fig, path))
    return figs


def render(cfg, records, out_dir) -> list:
    out = Path(out_dir)
    with plt.rc_context(STYLE):
        if cfg.model == "joint":
            return plot_joint(records, out / f"{cfg.kind}.svg")
        if cfg.model == "camera":
            target = cfg.f_u * math.tan(cfg.camera_target)
            return plot_camera(records, out / f"{cfg.kind}-{cfg.method}.svg", target)
        return plot_tool(records, out / f"{cfg.kind}-angle.svg", out / f"{cfg.kind}-x.svg",
                         math.degrees(cfg.tool_target))
