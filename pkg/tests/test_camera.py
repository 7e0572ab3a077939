import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.spatial.transform import Rotation

from cascadeservo.camera import (
    CameraIntrinsics,
    OneLinkScene,
    StereoRig,
    ToolScene,
    ibvs_velocity,
    interaction_matrix,
    linearize_one_link,
    linearize_tool,
    one_link_project,
    one_link_project_cartesian,
    project_mono,
    project_stereo,
    tool_bearing,
    tool_project,
    visibility_interval,
)
from cascadeservo.errors import (
    BehindLens,
    EmptyInterval,
    NonPositiveDepth,
    PointBehindCamera,
)

DEG = math.pi / 180
K = CameraIntrinsics()
finite = dict(allow_nan=False, allow_infinity=False)


# --- pin-hole -------------------------------------------------------------------

def test_stereo_examples():
    rig = StereoRig(CameraIntrinsics(u0=0.3, v0=-0.2), 0.1)
    out = project_stereo((0, 0, 2.0), rig)
    half = 2.8 * 0.1 / 4.0
    assert out["left"] == pytest.approx((0.3 - half, -0.2))
    assert out["right"] == pytest.approx((0.3 + half, -0.2))
    out = project_stereo((0.1, 0.2, 1.0), StereoRig(K, 0.1))
    assert out["left"][0] == pytest.approx(0.14)
    assert out["right"][0] == pytest.approx(0.42)
    assert out["left"][1] == out["right"][1] == pytest.approx(0.56)


@given(st.floats(-5, 5, **finite), st.floats(-5, 5, **finite), st.floats(0.1, 20, **finite),
       st.floats(0, 2, **finite))
def test_disparity_law(X, Y, Z, b):
    out = project_stereo((X, Y, Z), StereoRig(K, b))
    assert out["right"][0] - out["left"][0] == pytest.approx(K.f_u * b / Z, abs=1e-12)


def test_mono_examples():
    k = CameraIntrinsics(u0=1.0, v0=2.0)
    assert project_mono((0, 0, 3.0), k) == (1.0, 2.0)
    assert project_mono((3.0 * 0.25, 0, 3.0), k) == pytest.approx((2.8 * 0.25 + 1.0, 2.0))
    p = (0.3, -0.4, 1.7)
    st_ = project_stereo(p, StereoRig(K, 0.0))
    assert st_["left"] == st_["right"] == pytest.approx(project_mono(p, K))
    with pytest.raises(PointBehindCamera):
        project_mono((0, 0, 0), K)
    with pytest.raises(PointBehindCamera):
        project_stereo((0, 0, -1), StereoRig(K, 0.1))


def test_interaction_matrix_at_principal_point():
    L = interaction_matrix(0.0, 0.0, 2.0, K)
    np.testing.assert_allclose(L, [[1.4, 0, 0, 0, 2.8, 0], [0, 1.4, 0, -2.8, 0, 0]])
    L2 = interaction_matrix(0.5, -0.3, 4.0, K)
    L1 = interaction_matrix(0.5, -0.3, 2.0, K)
    np.testing.assert_allclose(L2[:, :3], L1[:, :3] / 2)
    np.testing.assert_array_equal(L2[:, 3:], L1[:, 3:])
    with pytest.raises(NonPositiveDepth):
        interaction_matrix(0, 0, 0, K)


def _image(P, k):
    return np.array(project_mono(P, k))


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.5, 5), st.lists(
    st.floats(-1, 1), min_size=6, max_size=6))
def test_interaction_matrix_finite_difference(X, Y, Z, V):
    k = CameraIntrinsics(f_u=2.8, f_v=3.1, u0=0.2, v0=-0.1)
    P, V = np.array([X, Y, Z]), np.array(V)
    assume(np.linalg.norm(V) > 1e-3)

    def moved(t):  # exact rigid flow of the point under the constant twist
        R = Rotation.from_rotvec(V[3:] * t).as_matrix()
        w = np.linalg.norm(V[3:])
        if w < 1e-12:
            return P + V[:3] * t
        # dP/dt = v + w x P  =>  P(t) = R P + (integral of R) v
        W = np.cross(np.eye(3), V[3:] / w)  # W @ x == (w/|w|) x x
        J = np.eye(3) * t + (1 - math.cos(w * t)) / w * W + (w * t - math.sin(w * t)) / w * W @ W
        return R @ P + J @ V[:3]

    h = 1e-6
    fd = (_image(moved(h), k) - _image(moved(-h), k)) / (2 * h)
    u, v = project_mono(P, k)
    an = interaction_matrix(u, v, Z, k) @ V
    assert np.linalg.norm(fd - an) <= 1e-6 * max(np.linalg.norm(an), 1.0)


def test_ibvs_minimum_norm_twist():
    L = interaction_matrix(0, 0, 1.0, CameraIntrinsics(f_u=1, f_v=1))
    v = ibvs_velocity([1.0, 0.0], L, 1.0)
    ref = L.T @ np.linalg.solve(L @ L.T, [1.0, 0.0])
    np.testing.assert_allclose(v, ref)


# --- one-link camera ------------------------------------------------------------

def test_one_link_examples():
    assert one_link_project(OneLinkScene.from_phi(0.3), -0.3) == pytest.approx(0.0, abs=1e-15)
    assert one_link_project(OneLinkScene.from_phi(45 * DEG), 0.0) == pytest.approx(2.8)
    with pytest.raises(BehindLens):
        one_link_project(OneLinkScene.from_phi(60 * DEG), 40 * DEG)


@given(st.floats(0.1, 5), st.floats(-5, 5), st.floats(-1.0, 1.0))
def test_polar_equals_cartesian(X, Y, q):
    sc = OneLinkScene(X, Y)
    assume(abs(sc.phi + q) < 1.4)
    assert one_link_project(sc, q) == pytest.approx(one_link_project_cartesian(sc, q), rel=1e-9,
                                                    abs=1e-12)


@given(st.floats(-1.2, 1.2), st.floats(-1.4, 1.4), st.floats(1e-4, 0.1))
def test_one_link_monotone(phi, q, dq):
    sc = OneLinkScene.from_phi(phi)
    assume(abs(phi + q + dq) < 1.5 and abs(phi + q) < 1.5)
    assert one_link_project(sc, q + dq) > one_link_project(sc, q)


def test_one_link_linearization():
    assert linearize_one_link(OneLinkScene.from_phi(0.0), 0.0) == (2.8, 0.0)
    C1, C2 = linearize_one_link(OneLinkScene.from_phi(20 * DEG), 0.0)
    assert C1 == pytest.approx(2.8 / math.cos(20 * DEG) ** 2) and round(C1, 3) == 3.171
    sc = OneLinkScene.from_phi(20 * DEG)
    d = np.linspace(-0.05, 0.05, 41)
    rem = np.array([abs(one_link_project(sc, x) - (C1 * x + C2)) for x in d])
    K2 = np.max(rem[d != 0] / d[d != 0] ** 2)
    assert K2 < 10.0 and np.all(rem <= K2 * d ** 2 + 1e-15)


@given(st.floats(-1.2, 1.2), st.floats(-0.2, 0.2))
def test_linearizations_match_central_difference(phi, q0):
    sc = OneLinkScene.from_phi(phi)
    h = 1e-6
    fd = (one_link_project(sc, q0 + h) - one_link_project(sc, q0 - h)) / (2 * h)
    assert linearize_one_link(sc, q0)[0] == pytest.approx(fd, rel=1e-6)


# --- tool on a second arm ---------------------------------------------------------

def test_tool_examples():
    sc = ToolScene(q_v_bar=-20 * DEG)
    assert tool_project(sc, 0.0) == pytest.approx(2.8 * math.tan(-20 * DEG))
    assert tool_project(ToolScene(), 90 * DEG) == pytest.approx(0.378)


@given(st.floats(-math.pi, math.pi), st.floats(-0.9, 0.9), st.floats(0.01, 0.9))
def test_tangent_addition(angle, qv, Lt):
    sc = ToolScene(L=1.0, L_t=Lt, q_v_bar=qv)
    assume(abs(tool_bearing(sc, angle)) < 1.4)
    Q = Lt * math.sin(angle) / (1 - Lt * math.cos(angle))
    assert tool_project(sc, angle) / 2.8 == pytest.approx(math.tan(math.atan(Q) + qv), rel=1e-9,
                                                          abs=1e-12)


def test_tool_linearization():
    C1 = linearize_tool(ToolScene())
    assert round(C1, 4) == 0.4370
    h = 1e-6
    fd = (tool_project(ToolScene(), h) - tool_project(ToolScene(), -h)) / (2 * h)
    assert C1 == pytest.approx(fd, rel=1e-6)
    ratio = linearize_tool(ToolScene(q_v_bar=-65 * DEG)) / C1
    assert ratio == pytest.approx(1 + math.tan(65 * DEG) ** 2) and round(ratio, 3) == 5.599


@given(st.floats(1.1, 5), st.floats(0.01, 0.99), st.floats(-1.2, 1.2))
def test_tool_slope_positive(L, frac, qv):
    assert linearize_tool(ToolScene(L=L, L_t=frac * L, q_v_bar=qv)) > 0


def test_tool_collapses_as_length_vanishes():
    qv = -10 * DEG
    for Lt, tol in ((1e-3, 1e-2), (1e-6, 1e-5)):
        sc = ToolScene(L_t=Lt, q_v_bar=qv)
        err = max(abs(tool_project(sc, a) - 2.8 * math.tan(qv))
                  for a in np.linspace(-math.pi, math.pi, 101))
        assert err < tol


def test_visibility_interval_scenario_two():
    lo, hi = visibility_interval(ToolScene(q_v_bar=-65 * DEG))
    assert abs(math.degrees(lo) - 35.21) < 0.05 and abs(math.degrees(hi) - 134.79) < 0.05


def test_visibility_symmetry_under_reflection():
    # the tip bearing is odd in the tool angle, so visibility is symmetric about 0
    sc = ToolScene(q_v_bar=0.0)
    k = CameraIntrinsics(alpha_view=20 * DEG)
    lo, hi = visibility_interval(sc, k)
    assert lo == pytest.approx(-hi, abs=1e-9)
    for q in np.linspace(-math.pi, math.pi, 721):
        assert (abs(tool_bearing(sc, q)) <= 10 * DEG) == (abs(tool_bearing(sc, -q)) <= 10 * DEG)


def test_visibility_full_circle_and_empty():
    assert visibility_interval(ToolScene()) == (-math.pi, math.pi)
    with pytest.raises(EmptyInterval):
        visibility_interval(ToolScene(q_v_bar=-80 * DEG), CameraIntrinsics(alpha_view=10 * DEG))


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(f_u=0)
    with pytest.raises(ValueError):
        CameraIntrinsics(alpha_view=math.pi)
    with pytest.raises(ValueError):
        ToolScene(L=0.1, L_t=0.2)
    with pytest.raises(ValueError):
        OneLinkScene(-1.0, 0.0)
