"""Inner joint loop: computed-torque interface plus a Youla joint controller.

With the interface u = M(q) v + h(q, qdot) and an exact model, every joint
reduces to qddot = v, and the controller designed for 1/s^2 closes each
channel to (3 tau s + 1)/(tau s + 1)^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, SingularInertia
from .kinematics import KinematicChain, forward_kinematics, reference_chain
from .lti import (
    LinearBlock,
    NonlinearBlock,
    RationalTransfer,
    StaticBlock,
    simulate_network,
    to_state_space,
)
from .youla import YoulaDesign, design_double_integrator


class IdealProvider:
    """Smooth illustrative rigid-body terms for an n-joint arm.

    The numbers are not identified from any real robot.  Used on both the
    plant side and the interface side, the cancellation is exact.
    """

    def __init__(self, n: int = 6, inertia=None, gravity=None):
        self.n = n
        self.base = np.asarray(inertia if inertia is not None
                               else np.linspace(2.0, 0.2, n), dtype=float)
        self.grav = np.asarray(gravity if gravity is not None
                               else np.linspace(30.0, 1.0, n), dtype=float)

    def D(self, q):
        q = np.asarray(q, dtype=float)
        c = np.cos(q[:-1] - q[1:]) if self.n > 1 else np.zeros(0)
        M = np.diag(self.base)
        for i in range(self.n - 1):
            k = 0.1 * math.sqrt(self.base[i] * self.base[i + 1]) * c[i]
            M[i, i + 1] = M[i + 1, i] = k
        return M

    def C(self, q, qd):
        q, qd = np.asarray(q, dtype=float), np.asarray(qd, dtype=float)
        out = np.zeros((self.n, self.n))
        for i in range(self.n - 1):
            k = 0.1 * math.sqrt(self.base[i] * self.base[i + 1]) * math.sin(q[i] - q[i + 1])
            out[i, i + 1] = k * qd[i + 1]
            out[i + 1, i] = -k * qd[i]
        return out

    def g(self, q):
        return self.grav * np.cos(np.asarray(q, dtype=float))


@dataclass
class JointDynamicsParams:
    J: np.ndarray = field(default_factory=lambda: np.full(6, 0.05))
    B: np.ndarray = field(default_factory=lambda: np.full(6, 0.5))
    r: float = 100.0
    provider: object = field(default_factory=IdealProvider)

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float).ravel()
        self.B = np.asarray(self.B, dtype=float).ravel()
        if np.any(self.J <= 0):
            raise ValueError("actuator inertias must be positive")
        if not self.r > 0:
            raise ValueError("gear ratio must be positive")

    @property
    def n(self) -> int:
        return len(self.J)

    def M(self, q) -> np.ndarray:
        return self.provider.D(q) + np.diag(self.J)

    def h(self, q, qd) -> np.ndarray:
        qd = np.asarray(qd, dtype=float)
        return (self.provider.C(q, qd) + np.diag(self.B / self.r)) @ qd + self.provider.g(q)


def nonlinear_interface(v, q, qd, p: JointDynamicsParams) -> np.ndarray:
    M = p.M(q)
    if np.linalg.cond(M) > 1e12:
        raise SingularInertia("inertia matrix is not invertible")
    return M @ np.asarray(v, dtype=float) + p.h(q, qd)


def manipulator_accel(u, q, qd, p: JointDynamicsParams) -> np.ndarray:
    """Forward dynamics: solve M(q) qddot = u - h(q, qdot)."""
    try:
        return np.linalg.solve(p.M(q), np.asarray(u, dtype=float) - p.h(q, qd))
    except np.linalg.LinAlgError as err:
        raise SingularInertia(str(err)) from None


@dataclass(frozen=True, eq=False)
class InnerLoopDesign:
    tau_in: float
    controller: RationalTransfer
    closed_loop: RationalTransfer
    design: YoulaDesign


def build_inner_loop(tau_in: float) -> InnerLoopDesign:
    d = design_double_integrator(tau_in)
    s = RationalTransfer.s()
    t = Fraction(tau_in)
    expected = (3 * t * s + 1) / (t * s + 1) ** 3
    if d.T != expected:
        raise AssertionError("closed loop does not match the double-integrator target")
    return InnerLoopDesign(tau_in, d.Gc, d.T, d)


def _as_disturbance(d_q, n) -> Callable:
    if d_q is None:
        zero = np.zeros(n)
        return lambda t: zero
    if callable(d_q):
        return lambda t: np.asarray(d_q(t), dtype=float).reshape(n)
    const = np.asarray(d_q, dtype=float).reshape(n)
    return lambda t: const


def joint_loop_blocks(design: InnerLoopDesign, n: int, params: JointDynamicsParams | None = None,
                      prefix: str = "") -> list:
    """Controller + plant blocks for n joints reading ``{prefix}q_R{i}``.

    Outputs ``{prefix}q{i}`` and ``{prefix}qd{i}``.  Without ``params`` the
    plant is the reduced double integrator; with it, the full rigid-body
    model is driven through the computed-torque interface.
    """
    ctrl = to_state_space(design.controller)
    blocks = []
    for i in range(n):
        blocks.append(StaticBlock(f"{prefix}err{i}", lambda t, r, y: r - y,
                                  (f"{prefix}q_R{i}", f"{prefix}q{i}"), (f"{prefix}e{i}",)))
        blocks.append(LinearBlock(f"{prefix}Gc{i}", ctrl, (f"{prefix}e{i}",), (f"{prefix}v{i}",)))
    q_names = [f"{prefix}q{i}" for i in range(n)]
    qd_names = [f"{prefix}qd{i}" for i in range(n)]
    v_names = [f"{prefix}v{i}" for i in range(n)]
    if params is None:
        dbl = to_state_space(RationalTransfer([1], [0, 0, 1])).with_derivative_output()
        for i in range(n):
            blocks.append(LinearBlock(f"{prefix}plant{i}", dbl, (v_names[i],),
                                      (q_names[i], qd_names[i])))
    else:
        if params.n != n:
            raise DimensionMismatch(f"dynamics describe {params.n} joints, loop has {n}")

        def deriv(t, x, v):
            q, qd = x[:n], x[n:]
            u = nonlinear_interface(v, q, qd, params)
            return np.concatenate([qd, manipulator_accel(u, q, qd, params)])

        blocks.append(NonlinearBlock(f"{prefix}arm", deriv, lambda t, x, v: x,
                                     v_names, q_names + qd_names, 2 * n, feedthrough=False))
    return blocks


def simulate_joint_trajectory(design: InnerLoopDesign, q_R=None, d_q=None, dt: float = 2e-4,
                              t_final: float = 0.2, chain: KinematicChain | None = None,
                              params: JointDynamicsParams | None = None):
    """Step every joint to ``q_R`` (rad); the trace carries q, qdot and the tool position.

    ``d_q`` is added to each joint angle after the loop (constant vector or
    function of time).  End-effector coordinates use the disturbed angles.
    """
    q_R = np.radians([30, 60, -45, 15, 45, 90]) if q_R is None else np.asarray(q_R, float)
    n = len(q_R)
    chain = chain if chain is not None else (reference_chain() if n == 6 else None)
    if chain is not None and len(chain) != n:
        raise DimensionMismatch(f"chain has {len(chain)} joints, targets have {n}")
    dist = _as_disturbance(d_q, n)
    blocks = joint_loop_blocks(design, n, params)
    for i in range(n):
        blocks.append(StaticBlock(f"dist{i}", lambda t, q, i=i: q + dist(t)[i],
                                  (f"q{i}",), (f"qbar{i}",)))
    inputs = {f"q_R{i}": float(q_R[i]) for i in range(n)}
    record = [f"q{i}" for i in range(n)] + [f"qd{i}" for i in range(n)] + \
        [f"qbar{i}" for i in range(n)]
    tr = simulate_network(blocks, inputs, dt, t_final, record=record,
                          meta={"kind": "joint", "tau_in": design.tau_in,
                                "q_R": [float(v) for v in q_R]})
    if chain is not None:
        Q = np.column_stack([tr[f"qbar{i}"] for i in range(n)])
        P = np.array([forward_kinematics(chain, q)[:3, 3] for q in Q])
        for j, ax in enumerate("xyz"):
            tr.signals[f"ee_{ax}"] = P[:, j]
    return tr
