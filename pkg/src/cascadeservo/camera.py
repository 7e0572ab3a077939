"""Pin-hole projection models.

Image coordinates share the length unit of the focal length (mm by default).
Joint angles follow the clockwise-positive convention of the rotating-camera
model, so a camera turned 65 degrees counter-clockwise has q_v_bar = -65 deg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BehindLens,
    EmptyInterval,
    NonPositiveDepth,
    PointBehindCamera,
    ProjectionSingularity,
)


@dataclass(frozen=True)
class CameraIntrinsics:
    f_u: float = 2.8
    f_v: float = 2.8
    s_c: float = 0.0
    u0: float = 0.0
    v0: float = 0.0
    alpha_view: float = math.radians(120.0)

    def __post_init__(self):
        if not (self.f_u > 0 and self.f_v > 0):
            raise ValueError("focal lengths must be positive")
        if not 0 < self.alpha_view < math.pi:
            raise ValueError("angle of view must lie in (0, pi)")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.f_u, self.s_c, self.u0],
                         [0.0, self.f_v, self.v0],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class StereoRig:
    intrinsics: CameraIntrinsics
    baseline: float

    def __post_init__(self):
        if not self.baseline >= 0:
            raise ValueError("baseline must be non-negative")


@dataclass(frozen=True)
class OneLinkScene:
    """A reference point seen by a camera that rotates about one joint."""

    X_p: float
    Y_p: float
    q_v0: float = 0.0

    def __post_init__(self):
        if not self.X_p > 0:
            raise ValueError("X_p must be positive (point in front of the camera)")

    @property
    def phi(self) -> float:
        return math.atan2(self.Y_p, self.X_p)

    @classmethod
    def from_phi(cls, phi: float, R: float = 1.0, q_v0: float = 0.0) -> "OneLinkScene":
        return cls(R * math.cos(phi), R * math.sin(phi), q_v0)


@dataclass(frozen=True)
class ToolScene:
    L: float = 1.0
    L_t: float = 0.135
    q_v_bar: float = 0.0
    q_m0: float = 0.0
    L1: float = 0.0  # link height; carried for bookkeeping only

    def __post_init__(self):
        if not self.L > self.L_t > 0:
            raise ValueError("need L > L_t > 0")


# --- pin-hole ----------------------------------------------------------------

def project_mono(p_cam, k: CameraIntrinsics) -> tuple:
    X, Y, Z = (float(c) for c in p_cam)
    if not Z > 0:
        raise PointBehindCamera(f"Z = {Z} is not in front of the camera")
    return k.f_u * X / Z + k.u0, k.f_v * Y / Z + k.v0


def project_stereo(p_cam, rig: StereoRig) -> dict:
    """Left/right images of a point for two parallel cameras straddling the origin."""
    X, Y, Z = (float(c) for c in p_cam)
    if not Z > 0:
        raise PointBehindCamera(f"Z = {Z} is not in front of the camera")
    k = rig.intrinsics
    u = (k.f_u * X + k.s_c * Y) / Z + k.u0
    v = k.f_v * Y / Z + k.v0
    half = rig.baseline * k.f_u / (2.0 * Z)
    return {"left": (u - half, v), "right": (u + half, v)}


def interaction_matrix(u: float, v: float, Z: float, k: CameraIntrinsics) -> np.ndarray:
    """2x6 image Jacobian for the twist [v_x, v_y, v_z, w_x, w_y, w_z].

    Consistent with point motion dP/dt = v + w x P in the camera frame.
    """
    if not Z > 0:
        raise NonPositiveDepth(f"depth must be positive, got {Z}")
    fu, fv = k.f_u, k.f_v
    du, dv = u - k.u0, v - k.v0
    return np.array([
        [fu / Z, 0.0, -du / Z, -du * dv / fv, (fu * fu + du * du) / fu, -fu * dv / fv],
        [0.0, fv / Z, -dv / Z, -(fv * fv + dv * dv) / fv, du * dv / fu, fv * du / fu],
    ])


def ibvs_velocity(e, L_e, k_gain: float) -> np.ndarray:
    if not k_gain > 0:
        raise ValueError("gain must be positive")
    return k_gain * (np.linalg.pinv(np.asarray(L_e, dtype=float)) @ np.asarray(e, dtype=float))


# --- rotating camera, single reference point ------------------------------

def _check_front(angle: float):
    if not abs(angle) < math.pi / 2:
        raise BehindLens(f"bearing {math.degrees(angle):.3f} deg is outside (-90, 90)")


def one_link_project(scene: OneLinkScene, q: float, k: CameraIntrinsics | None = None) -> float:
    k = k or CameraIntrinsics()
    a = scene.phi + q
    _check_front(a)
    return k.f_u * math.tan(a)


def one_link_project_cartesian(scene: OneLinkScene, q: float,
                               k: CameraIntrinsics | None = None) -> float:
    """Same map as :func:`one_link_project`, via an explicit rotation of the point."""
    k = k or CameraIntrinsics()
    c, s = math.cos(q), math.sin(q)
    x = scene.X_p * c - scene.Y_p * s
    y = scene.X_p * s + scene.Y_p * c
    if not x > 0:
        raise BehindLens("rotated point is not in front of the lens")
    return k.f_u * y / x


def linearize_one_link(scene: OneLinkScene, q_bar_0: float,
                       k: CameraIntrinsics | None = None) -> tuple:
    """(slope C1, offset C2) of the camera map about q_bar_0."""
    k = k or CameraIntrinsics()
    a = scene.phi + q_bar_0
    _check_front(a)
    return k.f_u / math.cos(a) ** 2, k.f_u * math.tan(a)


# --- static camera watching a tool on a second arm -----------------------

def tool_Q(scene: ToolScene, angle: float) -> float:
    return scene.L_t * math.sin(angle) / (scene.L - scene.L_t * math.cos(angle))


def tool_bearing(scene: ToolScene, angle: float) -> float:
    """Bearing of the tool tip in the camera frame (rad)."""
    return math.atan(tool_Q(scene, angle)) + scene.q_v_bar


def tool_project(scene: ToolScene, angle: float, k: CameraIntrinsics | None = None) -> float:
    k = k or CameraIntrinsics()
    Q = tool_Q(scene, angle)
    tv = math.tan(scene.q_v_bar)
    den = 1.0 - Q * tv
    if abs(den) < 1e-9:
        raise ProjectionSingularity("tool tip lies on the image-plane horizon")
    if den < 0 and math.cos(scene.q_v_bar) > 0:
        raise BehindLens("tool tip is behind the lens")
    return k.f_u * (Q + tv) / den


def linearize_tool(scene: ToolScene, k: CameraIntrinsics | None = None) -> float:
    """Slope of :func:`tool_project` at tool angle 0."""
    k = k or CameraIntrinsics()
    L, Lt = scene.L, scene.L_t
    return k.f_u * (1.0 + math.tan(scene.q_v_bar) ** 2) * (L * Lt - Lt * Lt) / (L - Lt) ** 2


def visibility_interval(scene: ToolScene, k: CameraIntrinsics | None = None,
                        n_grid: int = 3600) -> tuple:
    """Tool angles (rad) for which the tip bearing is within half the angle of view.

    The circle is scanned on a grid and the edges refined with Brent's method.
    When the visible set has several arcs the longest one is returned.  The
    result may extend past pi when the arc wraps; ``(-pi, pi)`` means always
    visible.
    """
    k = k or CameraIntrinsics()
    half = k.alpha_view / 2.0

    def margin(q):
        return half - abs(tool_bearing(scene, q))

    grid = np.linspace(-math.pi, math.pi, n_grid, endpoint=False)
    vis = np.array([margin(q) >= 0 for q in grid])
    if not vis.any():
        raise EmptyInterval("the tool is never inside the field of view")
    if vis.all():
        return -math.pi, math.pi
    # rotate so index 0 is hidden; runs then never wrap
    shift = int(np.argmin(vis))
    v = np.roll(vis, -shift)
    g = np.roll(grid, -shift)
    g = np.where(np.arange(n_grid) + shift >= n_grid, g + 2 * math.pi, g)
    best, i = None, 0
    while i < n_grid:
        if v[i]:
            j = i
            while j + 1 < n_grid and v[j + 1]:
                j += 1
            if best is None or j - i > best[1] - best[0]:
                best = (i, j)
            i = j + 1
        else:
            i += 1
    i, j = best
    step = 2 * math.pi / n_grid
    lo = brentq(margin, g[i] - step, g[i], xtol=1e-13)
    hi = brentq(margin, g[j], g[j] + step, xtol=1e-13)
    if lo > math.pi:
        lo, hi = lo - 2 * math.pi, hi - 2 * math.pi
    return lo, hi
