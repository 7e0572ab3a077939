"""Denavit-Hartenberg kinematics for serial chains of revolute joints.

Transforms are plain 4x4 ``numpy`` arrays.  Each link is
Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha) with theta = q + theta_offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DimensionMismatch, NoConvergence


@dataclass(frozen=True)
class DHLink:
    a: float = 0.0
    alpha: float = 0.0
    d: float = 0.0
    theta_offset: float = 0.0
    limits: tuple = (-math.pi, math.pi)

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.alpha, self.d, self.theta_offset)):
            raise ValueError("D-H parameters must be finite")


@dataclass(frozen=True)
class KinematicChain:
    links: tuple

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if len(self.links) < 1:
            raise ValueError("a chain needs at least one link")

    def __len__(self):
        return len(self.links)

    @property
    def reach(self) -> float:
        """Upper bound on the distance from the base origin to the tool point."""
        return sum(math.hypot(l.a, l.d) for l in self.links)

    def to_dict(self) -> dict:
        return {"links": [
            {"a": l.a, "alpha": l.alpha, "d": l.d, "theta_offset": l.theta_offset,
             "limits": list(l.limits)} for l in self.links]}

    @classmethod
    def from_dict(cls, data: dict) -> "KinematicChain":
        return cls(tuple(DHLink(a=float(x.get("a", 0.0)), alpha=float(x.get("alpha", 0.0)),
                                d=float(x.get("d", 0.0)),
                                theta_offset=float(x.get("theta_offset", 0.0)),
                                limits=tuple(x.get("limits", (-math.pi, math.pi))))
                         for x in data["links"]))


def reference_chain() -> KinematicChain:
    """Generic elbow manipulator with a spherical wrist (six revolute joints).

    Dimensions are round illustrative values, not vendor data.
    """
    h = math.pi / 2
    return KinematicChain((
        DHLink(a=0.15, alpha=-h, d=0.50),
        DHLink(a=0.90, alpha=0.0, d=0.0, theta_offset=-h),
        DHLink(a=0.15, alpha=-h, d=0.0),
        DHLink(a=0.0, alpha=h, d=0.95),
        DHLink(a=0.0, alpha=-h, d=0.0, limits=(-2.0, 2.0)),
        DHLink(a=0.0, alpha=0.0, d=0.12),
    ))


@dataclass(frozen=True)
class PoseTarget:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        R = np.asarray(self.orientation, dtype=float).reshape(3, 3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6):
            raise ValueError("orientation must be orthonormal")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", R)

    @classmethod
    def from_transform(cls, T) -> "PoseTarget":
        T = np.asarray(T)
        return cls(T[:3, 3].copy(), T[:3, :3].copy())


def dh_transform(link: DHLink, q: float) -> np.ndarray:
    th = q + link.theta_offset
    ct, st = math.cos(th), math.sin(th)
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    return np.array([
        [ct, -st * ca, st * sa, link.a * ct],
        [st, ct * ca, -ct * sa, link.a * st],
        [0.0, sa, ca, link.d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def forward_kinematics(chain: KinematicChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).ravel()
    if len(q) != len(chain):
        raise DimensionMismatch(f"expected {len(chain)} joint values, got {len(q)}")
    T = np.eye(4)
    for link, qi in zip(chain.links, q):
        T = T @ dh_transform(link, qi)
    return T


def link_frames(chain: KinematicChain, q) -> list:
    """Base-to-frame-i transforms for i = 0..n."""
    q = np.asarray(q, dtype=float).ravel()
    if len(q) != len(chain):
        raise DimensionMismatch(f"expected {len(chain)} joint values, got {len(q)}")
    out = [np.eye(4)]
    for link, qi in zip(chain.links, q):
        out.append(out[-1] @ dh_transform(link, qi))
    return out


def invert_transform(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    R, p = T[:3, :3], T[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ p
    return out


def transform_point(T, p) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    return T[:3, :3] @ np.asarray(p, dtype=float) + T[:3, 3]


def check_transform(T, tol: float = 1e-9) -> bool:
    """Bottom row exactly [0,0,0,1], rotation block orthonormal with det +1."""
    T = np.asarray(T)
    if T.shape != (4, 4) or not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
        return False
    R = T[:3, :3]
    return bool(np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0)
                and abs(np.linalg.det(R) - 1.0) <= tol)


def pose_error(T, target: PoseTarget) -> np.ndarray:
    """[position error (m); rotation-vector error (rad)], target minus current."""
    T = np.asarray(T)
    dp = target.position - T[:3, 3]
    dR = target.orientation @ T[:3, :3].T
    return np.concatenate([dp, Rotation.from_matrix(dR).as_rotvec()])


def pose_residual(T, target: PoseTarget) -> float:
    e = pose_error(T, target)
    return float(np.linalg.norm(e[:3]) + np.linalg.norm(e[3:]))


def _fd_jacobian(chain, q, target, h=1e-6):
    J = np.empty((6, len(q)))
    for i in range(len(q)):
        dq = np.zeros(len(q))
        dq[i] = h
        ep = pose_error(forward_kinematics(chain, q + dq), target)
        em = pose_error(forward_kinematics(chain, q - dq), target)
        J[:, i] = (ep - em) / (2 * h)
    return J


def inverse_kinematics_numeric(chain: KinematicChain, target: PoseTarget, q_seed,
                               tol: float = 1e-10, max_iter: int = 200,
                               damping: float = 1e-3, step_clamp: float = 0.2) -> np.ndarray:
    """Damped-least-squares IK on a finite-difference Jacobian.

    Iterates dq = -J^T (J J^T + damping^2 I)^-1 e, with the step scaled so no
    joint moves more than ``step_clamp`` rad per iteration.  Raises
    :class:`NoConvergence` (carrying the best iterate) after ``max_iter``.
    """
    q = np.asarray(q_seed, dtype=float).ravel().copy()
    if len(q) != len(chain):
        raise DimensionMismatch(f"expected {len(chain)} joint values, got {len(q)}")
    best_q, best_r = q.copy(), math.inf
    for _ in range(max_iter + 1):
        e = pose_error(forward_kinematics(chain, q), target)
        r = float(np.linalg.norm(e[:3]) + np.linalg.norm(e[3:]))
        if r < best_r:
            best_q, best_r = q.copy(), r
        if r <= tol:
            return q
        J = _fd_jacobian(chain, q, target)
        dq = -J.T @ np.linalg.solve(J @ J.T + damping ** 2 * np.eye(6), e)
        big = np.max(np.abs(dq))
        if big > step_clamp:
            dq *= step_clamp / big
        q = q + dq
    raise NoConvergence(f"IK did not converge in {max_iter} iterations "
                        f"(best residual {best_r:.3g})", best=best_q, residual=best_r)
