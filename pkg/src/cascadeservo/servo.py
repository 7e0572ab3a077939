"""Cascaded outer loops.

Camera adjustment drives a one-link camera so a reference point lands on a
commanded image coordinate.  Two outer controllers are available:

``fl``
    Feedback linearization.  The inner loop plus camera is a third-order
    nonlinear system in the filtered state W; the interface
    q_Rv = (U - R)/G reduces it to a double integrator, closed with the
    same Youla design as the joints (time constant tau_out).
``ml``
    Model linearization.  The camera map is linearized to C1*q + C2 and the
    outer loop is shaped to a second-order Butterworth response.

Tool manipulation keeps the camera still and steers a tool on a second arm
with feedback (model-linearized) plus optional feedforward.  When the tool
tip leaves the field of view the feedback feature comes from the kinematic
model instead; the handoff is bump-less.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .camera import (
    CameraIntrinsics,
    OneLinkScene,
    ToolScene,
    linearize_one_link,
    linearize_tool,
    tool_bearing,
    tool_project,
    visibility_interval,
)
from .errors import NonFiniteState, SimulationError, SingularityReached, ValidationError
from .jointloop import build_inner_loop
from .kinematics import KinematicChain, PoseTarget, inverse_kinematics_numeric
from .lti import Event, LinearBlock, RationalTransfer, StaticBlock, simulate_network, to_state_space
from .lti.trace import SimTrace, step_metrics
from .youla import design_butterworth_tracking, design_double_integrator

DEG = math.pi / 180.0


# --- feedback-linearization pieces ------------------------------------------

@dataclass(frozen=True)
class FLOuterState:
    W: float
    W_dot: float
    W_ddot: float
    epsilon1: float = 0.0
    epsilon2: float = 0.0


def _filter(tau_in: float) -> RationalTransfer:
    return RationalTransfer([1], [1, 3 * tau_in])


def state_transform(tau_in: float) -> dict:
    """Filters producing W, Wdot and Wddot from the camera angle and its rate.

    W = q/(3 tau s + 1) and Wdot = qdot/(3 tau s + 1); Wddot = s qdot/(3 tau s + 1)
    is formed algebraically as (qdot - Wdot)/(3 tau), so nothing is
    differentiated numerically.
    """
    f = _filter(tau_in)
    return {"W": f, "W_dot": f, "W_ddot": RationalTransfer([0, 1], [1, 3 * tau_in])}


def _fl_angle(st: FLOuterState, phi, q_v0, tau_in):
    return phi + q_v0 + 3 * tau_in * st.W_dot + st.W


def fl_terms(state: FLOuterState, phi: float, q_v0: float, f_u: float, tau_in: float) -> tuple:
    """(R, G) with d^2 u/dt^2 = R + G q_Rv."""
    a = _fl_angle(state, phi, q_v0, tau_in)
    c = math.cos(a)
    if not abs(a) < math.pi / 2 or abs(c) < 1e-9:
        raise SingularityReached(f"linearizing model bearing {a / DEG:.3f} deg left (-90, 90) deg")
    sec2 = 1.0 / (c * c)
    rate = 3 * tau_in * state.W_ddot + state.W_dot
    R = 2 * f_u * sec2 * math.tan(a) * rate ** 2 \
        - f_u * sec2 * (8 * state.W_ddot + 9 * state.W_dot / tau_in + 3 * state.W / tau_in ** 2)
    G = 3 * f_u * sec2 / tau_in ** 2
    return R, G


def fl_epsilon(state: FLOuterState, phi, q_v0, f_u, tau_in) -> tuple:
    a = _fl_angle(state, phi, q_v0, tau_in)
    return f_u * math.tan(a), f_u / math.cos(a) ** 2 * (3 * tau_in * state.W_ddot + state.W_dot)


def fl_outer_design(tau_out: float):
    return design_double_integrator(tau_out)


def ml_outer_design(C1: float, tau_in: float, omega_n: float, zeta: float):
    """Youla design on the linearized plant C1 (3 tau s + 1)/(tau s + 1)^3."""
    t = Fraction(tau_in)
    s = RationalTransfer.s()
    plant = Fraction(C1) * (3 * t * s + 1) / (t * s + 1) ** 3
    return design_butterworth_tracking(plant, omega_n, zeta, tau_in=tau_in)


# --- camera adjustment -------------------------------------------------------

@dataclass(frozen=True)
class CameraAdjustCase:
    phi: float
    d_qv: float = 0.0
    q_v0: float = 0.0
    target_angle: float = 10 * DEG
    method: str = "ml"
    zeta: float = 1.0
    omega_n: float = 10.0
    tau_in: float = 0.01
    tau_out: float = 0.1
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self):
        if self.method not in ("fl", "ml"):
            raise ValidationError(f"unknown method {self.method!r}", "method")
        if abs(self.phi) > self.intrinsics.alpha_view / 2 + 1e-12:
            raise ValidationError("|phi| exceeds half the angle of view", "phi")
        if not self.tau_in > 0:
            raise ValidationError("must be positive", "tau_in")
        if self.method == "fl" and not self.tau_out > self.tau_in:
            raise ValidationError("tau_out must exceed tau_in", "tau_out")

    @property
    def scene(self) -> OneLinkScene:
        return OneLinkScene.from_phi(self.phi, q_v0=self.q_v0)

    @property
    def u_R_target(self) -> float:
        """Commanded image coordinate: the point seen at bearing ``target_angle``."""
        return self.intrinsics.f_u * math.tan(self.target_angle)

    @property
    def u_initial(self) -> float:
        return self.intrinsics.f_u * math.tan(self.phi + self.q_v0 + self.d_qv)


def _camera_block(phi, f_u):
    def fn(t, q):
        a = phi + q
        if not abs(a) < math.pi / 2 - 1e-9:
            raise SingularityReached(f"camera bearing {a / DEG:.3f} deg reached the lens horizon")
        return f_u * math.tan(a)
    return StaticBlock("camera", fn, ("qbar_vf",), ("u_hat",))


def _inner_blocks(tau_in: float, inp: str, out: str, out_dot: str, name="inner"):
    T = build_inner_loop(tau_in).closed_loop
    ss = to_state_space(T).with_derivative_output()
    return LinearBlock(name, ss, (inp,), (out, out_dot))


def ml_outer_controller(case: CameraAdjustCase) -> dict:
    """Blocks for the model-linearized outer loop (error in, q_Rv out)."""
    C1, C2 = linearize_one_link(case.scene, case.q_v0, case.intrinsics)
    d = ml_outer_design(C1, case.tau_in, case.omega_n, case.zeta)
    blocks = [
        # both sides shifted by C2, which cancels in the difference
        StaticBlock("shift", lambda t, ub, u: ((ub - C2), (u - C2)),
                    ("u_bar", "u_hat"), ("u_bar_p", "u_hat_p")),
        StaticBlock("err", lambda t, a, b: a - b, ("u_bar_p", "u_hat_p"), ("e",)),
        LinearBlock("Gc_out", to_state_space(d.Gc), ("e",), ("q_Rv",)),
    ]
    return {"blocks": blocks, "design": d, "C1": C1, "C2": C2,
            "record": ["e"]}


def fl_outer_controller(case: CameraAdjustCase) -> dict:
    """Blocks for the feedback-linearized outer loop.

    The W filters read the disturbed angle q_v + d and the inner-loop rate
    output; their initial state matches the resting angle, so
    3 tau_in Wdot + W equals that angle along the whole run.
    """
    tau, f_u = case.tau_in, case.intrinsics.f_u
    d = fl_outer_design(case.tau_out)
    filt = to_state_space(_filter(tau))
    x0_W = [case.d_qv / float(filt.C[0, 0])]

    def interface(t, U, W, Wd, qd):
        st = FLOuterState(W, Wd, (qd - Wd) / (3 * tau))
        R, G = fl_terms(st, case.phi, case.q_v0, f_u, tau)
        e1, e2 = fl_epsilon(st, case.phi, case.q_v0, f_u, tau)
        return (U - R) / G, R, G, st.W_ddot, e1, e2

    blocks = [
        StaticBlock("err", lambda t, a, b: a - b, ("u_bar", "u_hat"), ("e",)),
        LinearBlock("Gc_out", to_state_space(d.Gc), ("e",), ("U",)),
        LinearBlock("W_filter", filt, ("qbar_v",), ("W",), x0=x0_W),
        LinearBlock("Wd_filter", filt, ("qd_v",), ("W_dot",)),
        StaticBlock("interface", interface, ("U", "W", "W_dot", "qd_v"),
                    ("q_Rv", "R", "G", "W_ddot", "eps1", "eps2")),
    ]
    return {"blocks": blocks, "design": d,
            "record": ["e", "U", "W", "W_dot", "W_ddot", "R", "G", "eps1", "eps2"]}


def camera_adjustment_blocks(case: CameraAdjustCase) -> tuple:
    ctrl = fl_outer_controller(case) if case.method == "fl" else ml_outer_controller(case)
    d_qv, q_v0 = case.d_qv, case.q_v0
    blocks = list(ctrl["blocks"]) + [
        _inner_blocks(case.tau_in, "q_Rv", "q_v", "qd_v"),
        StaticBlock("disturb", lambda t, q: q + d_qv, ("q_v",), ("qbar_v",)),
        StaticBlock("offset", lambda t, q: q + q_v0, ("qbar_v",), ("qbar_vf",)),
        _camera_block(case.phi, case.intrinsics.f_u),
    ]
    return blocks, ctrl


def run_camera_adjustment(case: CameraAdjustCase, dt: float = 2e-4,
                          t_final: float = 2.0) -> SimTrace:
    blocks, ctrl = camera_adjustment_blocks(case)
    record = ["u_hat", "u_bar", "q_v", "qd_v", "qbar_vf", "q_Rv"] + ctrl["record"]
    meta = {"kind": "camera", "method": case.method, "phi": case.phi, "d_qv": case.d_qv,
            "zeta": case.zeta, "u_R_target": case.u_R_target, "u_initial": case.u_initial}
    return simulate_network(blocks, {"u_bar": case.u_R_target}, dt, t_final,
                            record=record, meta=meta)


# --- verdicts ------------------------------------------------------------------

@dataclass
class RunOutcome:
    trace: SimTrace | None
    verdict: str                 # converged | diverged | singular
    message: str = ""
    terminal_error: float = math.nan
    step: float = math.nan

    @property
    def relative_error(self) -> float:
        return self.terminal_error / self.step if self.step else math.inf


def classify(run, reference: float, initial: float, signal: str, tol: float = 0.10) -> RunOutcome:
    """Run ``run()`` and label it.

    singular  -- a lens-horizon singularity fired;
    diverged  -- the state blew up, or the terminal error exceeds ``tol`` of the step;
    converged -- otherwise.
    """
    step = abs(reference - initial)
    try:
        tr = run()
    except SingularityReached as err:
        return RunOutcome(err.trace, "singular", str(err), math.inf, step)
    except NonFiniteState as err:
        return RunOutcome(err.trace, "diverged", str(err), math.inf, step)
    except SimulationError as err:
        return RunOutcome(err.trace, "diverged", str(err), math.inf, step)
    err = abs(float(tr[signal][-1]) - reference)
    verdict = "converged" if err <= tol * step else "diverged"
    return RunOutcome(tr, verdict, "", err, step)


def assess_camera_adjustment(case: CameraAdjustCase, dt=2e-4, t_final=2.0) -> RunOutcome:
    return classify(lambda: run_camera_adjustment(case, dt, t_final),
                    case.u_R_target, case.u_initial, "u_hat")


# --- tool manipulation -------------------------------------------------------

@dataclass(frozen=True)
class ToolScenario:
    scene: ToolScene
    d_qm: float = 0.0
    target_angle: float = 45 * DEG
    mode: str = "ff_fb"
    zeta: float = 1.0
    omega_n: float = 10.0
    tau_in: float = 0.01
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    hysteresis: float = 0.1 * DEG

    def __post_init__(self):
        if self.mode not in ("fb_only", "ff_fb"):
            raise ValidationError(f"unknown mode {self.mode!r}", "mode")
        if not self.hysteresis >= 0:
            raise ValidationError("must be non-negative", "hysteresis")

    def with_(self, **kw) -> "ToolScenario":
        return replace(self, **kw)


def feedforward_tool(scenario: ToolScenario) -> float:
    """One-link inverse kinematics: the joint command that puts the tool at the target."""
    return scenario.target_angle - scenario.scene.q_m0


def feedforward_tool_6dof(chain: KinematicChain, target: PoseTarget, q_seed, **kw) -> np.ndarray:
    return inverse_kinematics_numeric(chain, target, q_seed, **kw)


class _Visibility:
    """Visible/hidden state of the tool tip with a band around the interval edges."""

    def __init__(self, scenario: ToolScenario):
        sc, k = scenario.scene, scenario.intrinsics
        self.half = k.alpha_view / 2
        self.scene = sc
        self.h = scenario.hysteresis
        try:
            self.lo, self.hi = visibility_interval(sc, k)
        except Exception:
            self.lo = self.hi = None
        self.always = self.lo is not None and self.hi - self.lo >= 2 * math.pi - 1e-12

    def raw(self, q) -> bool:
        return abs(tool_bearing(self.scene, q)) <= self.half

    def _offset(self, q):
        # angle relative to the interval start, wrapped into [-pi, pi) around it
        c = 0.5 * (self.lo + self.hi)
        return (q - c + math.pi) % (2 * math.pi) - math.pi + c

    def guard(self, visible: bool, q: float) -> float:
        """Non-negative once the tool has crossed the band edge out of its current state."""
        if self.always or self.lo is None:
            return -1.0
        x = self._offset(q)
        if visible:
            return max(self.lo - self.h - x, x - self.hi - self.h)
        return min(x - self.lo - self.h, self.hi - self.h - x)


def _integrator_direction(A, C) -> np.ndarray:
    """State direction of the controller's pole at the origin (unit C-gain)."""
    w, V = np.linalg.eig(A)
    k = int(np.argmin(np.abs(w)))
    v = np.real(V[:, k])
    g = float(np.atleast_2d(C)[0] @ v)
    if abs(w[k]) > 1e-9 or abs(g) < 1e-12:
        return np.linalg.pinv(np.atleast_2d(C)).ravel()
    return v / g


def run_tool_manipulation(scenario: ToolScenario, dt: float = 2e-4,
                          t_final: float = 2.0) -> SimTrace:
    sc, k = scenario.scene, scenario.intrinsics
    C1 = linearize_tool(sc, k)
    d = ml_outer_design(C1, scenario.tau_in, scenario.omega_n, scenario.zeta)
    gc = to_state_space(d.Gc)
    u_bar = tool_project(sc, scenario.target_angle, k)
    ff = feedforward_tool(scenario) if scenario.mode == "ff_fb" else 0.0
    d_qm, q_m0 = scenario.d_qm, sc.q_m0

    vis = _Visibility(scenario)
    source = {"measured": vis.raw(d_qm + q_m0), "switches": []}
    direction = _integrator_direction(gc.A, gc.C)
    D = float(gc.D[0, 0])

    def select(t, um, ue):
        return (um if source["measured"] else ue), (1.0 if source["measured"] else 0.0)

    blocks = [
        _inner_blocks(scenario.tau_in, "q_Rm", "q_m", "qd_m"),
        StaticBlock("disturb", lambda t, q: (q + d_qm + q_m0), ("q_m",), ("qbar_mf",)),
        StaticBlock("camera", lambda t, q: tool_project(sc, q, k), ("qbar_mf",), ("u_meas",)),
        StaticBlock("model", lambda t, q: tool_project(sc, q + q_m0, k), ("q_m",), ("u_est",)),
        StaticBlock("switch", select, ("u_meas", "u_est"), ("u_fb", "source")),
        StaticBlock("err", lambda t, r, y: r - y, ("u_bar", "u_fb"), ("e",)),
        LinearBlock("Gc_out", gc, ("e",), ("q_Rm_fb",)),
        StaticBlock("sum", lambda t, a, b: a + b, ("q_Rm_ff", "q_Rm_fb"), ("q_Rm",)),
        StaticBlock("tool_x", lambda t, q: sc.L - sc.L_t * math.cos(q), ("qbar_mf",), ("P_Tx",)),
    ]

    class SourceSwitch(Event):
        def value(self, t, sig):
            return vis.guard(source["measured"], sig["qbar_mf"])

        def fire(self, ctx):
            sig = ctx.signals
            new = not source["measured"]
            e_old = sig["e"]
            e_new = sig["u_bar"] - (sig["u_meas"] if new else sig["u_est"])
            # keep Gc_out's output continuous: C dx = -D (e_new - e_old)
            x = ctx.state("Gc_out")
            ctx.set_state("Gc_out", x - D * (e_new - e_old) * direction)
            source["measured"] = new
            source["switches"].append((ctx.t, sig["qbar_mf"], "measured" if new else "estimated"))

    record = ["qbar_mf", "q_m", "u_meas", "u_est", "u_fb", "source", "e",
              "q_Rm_ff", "q_Rm_fb", "q_Rm", "P_Tx"]
    meta = {"kind": "tool", "mode": scenario.mode, "zeta": scenario.zeta,
            "target_angle": scenario.target_angle, "u_bar": u_bar, "C1": C1,
            "visibility": [vis.lo, vis.hi], "switches": source["switches"]}
    return simulate_network(blocks, {"u_bar": u_bar, "q_Rm_ff": ff}, dt, t_final,
                            events=[SourceSwitch()], record=record, meta=meta)


def assess_tool_manipulation(scenario: ToolScenario, dt=2e-4, t_final=2.0) -> RunOutcome:
    q0 = scenario.d_qm + scenario.scene.q_m0
    return classify(lambda: run_tool_manipulation(scenario, dt, t_final),
                    scenario.target_angle, q0, "qbar_mf")


def tool_metrics(trace: SimTrace, band: float = 0.02) -> dict:
    """Step figures of the tool angle, plus first entry into +-band of the target."""
    target = trace.meta["target_angle"]
    m = step_metrics(trace, "qbar_mf", band=band, reference=target)
    y = trace["qbar_mf"]
    inside = np.nonzero(np.abs(y - target) <= band * abs(target))[0]
    out = m.as_dict()
    out["reach_time"] = float(trace.t[inside[0]] - trace.t0) if len(inside) else math.inf
    out["peak_value"] = float(np.max(y) if target >= y[0] else np.min(y))
    out["switch_count"] = len(trace.meta.get("switches", []))
    return out
