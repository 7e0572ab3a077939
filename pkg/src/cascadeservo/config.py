"""Scenario configuration: presets, JSON loading, validation and serialization.

A scenario file is a JSON object.  ``kind`` picks a preset whose defaults are
then overridden by the remaining keys.  Angles are radians when given as
plain numbers; strings with a ``deg`` or ``rad`` suffix ("20deg") are
converted.  Solver settings may sit at top level or under ``"solver"``.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ParseError, ValidationError

PRESETS = ("joint_fig11", "camera_case1", "camera_case2", "camera_case3", "camera_case4",
           "tool_scenario1", "tool_scenario2")
KINDS = PRESETS + ("custom",)
MODELS = ("joint", "camera", "tool")

ANGLE_FIELDS = {"alpha", "phi", "q_v0", "d_qv", "camera_target", "q_v_bar", "q_m0", "d_qm",
                "tool_target", "hysteresis"}
ANGLE_LIST_FIELDS = {"q_R", "d_q"}
MODE_ALIASES = {"fb": "fb_only", "fb_only": "fb_only", "fffb": "ff_fb", "ff_fb": "ff_fb"}


def _deg(*v):
    return tuple(math.radians(x) for x in v) if len(v) != 1 else math.radians(v[0])


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    model: str = "camera"
    method: str = "ml"
    modes: tuple = ("fb_only", "ff_fb")
    # camera intrinsics
    f_u: float = 2.8
    alpha: float = _deg(120.0)
    # loops
    tau_in: float = 0.01
    tau_out: float = 0.1
    omega_n: float = 10.0
    zeta: tuple = (1.0,)
    # camera adjustment
    phi: float = 0.0
    q_v0: float = 0.0
    d_qv: float = 0.0
    camera_target: float = _deg(10.0)
    # tool manipulation
    L: float = 1.0
    L_t: float = 0.135
    L1: float = 0.0
    q_v_bar: float = 0.0
    q_m0: float = 0.0
    d_qm: float = 0.0
    tool_target: float = _deg(45.0)
    hysteresis: float = _deg(0.1)
    # joint loop
    q_R: tuple = _deg(30, 60, -45, 15, 45, 90)
    d_q: tuple = (0.0,) * 6
    # solver
    dt: float = 2e-4
    t_final: float = 2.0
    seed: int = 0

    def validate(self) -> "ScenarioConfig":
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}", "kind")
        if self.model not in MODELS:
            raise ValidationError(f"must be one of {MODELS}", "model")
        if self.method not in ("fl", "ml"):
            raise ValidationError("must be 'fl' or 'ml'", "method")
        if not self.modes or any(m not in ("fb_only", "ff_fb") for m in self.modes):
            raise ValidationError("entries must be 'fb_only' or 'ff_fb'", "modes")
        for name in ("f_u", "tau_in", "tau_out", "omega_n", "dt", "t_final", "L", "L_t"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError("must be positive and finite", name)
        if not 0 < self.alpha < math.pi:
            raise ValidationError("angle of view must lie in (0, 180) deg", "alpha")
        if not self.zeta or any(not (math.isfinite(z) and z > 0) for z in self.zeta):
            raise ValidationError("damping ratios must be positive", "zeta")
        if not self.L > self.L_t:
            raise ValidationError("need L > L_t", "L_t")
        if self.model == "camera" and abs(self.phi) > self.alpha / 2 + 1e-12:
            raise ValidationError("|phi| must not exceed alpha/2", "phi")
        if self.model == "camera" and self.method == "fl" and not self.tau_out > self.tau_in:
            raise ValidationError("tau_out must exceed tau_in", "tau_out")
        if len(self.q_R) != len(self.d_q):
            raise ValidationError("q_R and d_q lengths differ", "d_q")
        n = round(self.t_final / self.dt)
        if abs(n * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise ValidationError("t_final must be an integer multiple of dt", "t_final")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValidationError("must be an integer", "seed")
        return self

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw).validate()


_BASE = {
    "joint_fig11": dict(model="joint", t_final=0.2),
    "camera_case1": dict(model="camera", phi=_deg(20.0), zeta=(2.0, 1.5, 1.0, 0.7, 0.5, 0.3)),
    "camera_case2": dict(model="camera", phi=_deg(60.0), zeta=(2.0, 1.5, 1.0, 0.7, 0.5, 0.3),
                         t_final=3.0),
    "camera_case3": dict(model="camera", phi=0.0, d_qv=_deg(5.0),
                         zeta=(2.0, 1.5, 1.0, 0.7, 0.5, 0.3)),
    "camera_case4": dict(model="camera", phi=_deg(20.0), d_qv=_deg(-60.0),
                         zeta=(2.0, 1.5, 1.0, 0.7, 0.5, 0.3)),
    "tool_scenario1": dict(model="tool", q_v_bar=_deg(-5.0), d_qm=_deg(-10.0),
                           tool_target=_deg(45.0), zeta=(2.0, 1.5, 1.0, 0.7), t_final=3.0),
    "tool_scenario2": dict(model="tool", q_v_bar=_deg(-65.0), d_qm=_deg(15.0),
                           tool_target=_deg(50.0), zeta=(2.0, 1.5, 1.0, 0.7), t_final=3.0),
    "custom": dict(),
}


def preset(kind: str) -> ScenarioConfig:
    if kind not in _BASE:
        raise ValidationError(f"unknown kind {kind!r}", "kind")
    return ScenarioConfig(kind=kind, **_BASE[kind]).validate()


_ANGLE_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(deg|rad)\s*$")


def _angle(value, name):
    if isinstance(value, bool):
        raise ParseError("expected an angle", field=name)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _ANGLE_RE.match(value)
        if m:
            x = float(m.group(1))
            return math.radians(x) if m.group(2) == "deg" else x
    raise ParseError(f"cannot read angle {value!r} (use a number in rad or 'Xdeg')", field=name)


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", field=name)
    return float(value)


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ParseError("top level must be a JSON object")
    data = dict(data)
    solver = data.pop("solver", None)
    if solver is not None:
        if not isinstance(solver, dict):
            raise ParseError("must be an object", field="solver")
        for k, v in solver.items():
            if k not in ("dt", "t_final"):
                raise ValidationError(f"unknown solver setting {k!r}", f"solver.{k}")
            data[k] = v
    if "kind" not in data:
        raise ValidationError("missing", "kind")
    kind = data.pop("kind")
    base = preset(kind) if isinstance(kind, str) and kind in _BASE else None
    if base is None:
        raise ValidationError(f"unknown kind {kind!r}", "kind")
    kw = {}
    for k, v in data.items():
        if k not in _FIELD_TYPES or k == "kind":
            raise ValidationError("unknown parameter", k)
        if k in ANGLE_FIELDS:
            kw[k] = _angle(v, k)
        elif k in ANGLE_LIST_FIELDS:
            if not isinstance(v, list):
                raise ParseError("expected a list of angles", field=k)
            kw[k] = tuple(_angle(x, f"{k}[{i}]") for i, x in enumerate(v))
        elif k == "zeta":
            vals = v if isinstance(v, list) else [v]
            kw[k] = tuple(_number(x, f"zeta[{i}]") for i, x in enumerate(vals))
        elif k == "modes":
            vals = v if isinstance(v, list) else [v]
            try:
                kw[k] = tuple(MODE_ALIASES[x] for x in vals)
            except (KeyError, TypeError):
                raise ValidationError(f"unknown mode in {v!r}", k) from None
        elif k in ("model", "method"):
            if not isinstance(v, str):
                raise ParseError("expected a string", field=k)
            kw[k] = v
        elif k == "seed":
            if isinstance(v, bool) or not isinstance(v, int):
                raise ParseError("expected an integer", field=k)
            kw[k] = v
        else:
            kw[k] = _number(v, k)
    return replace(base, **kw).validate()


def loads(text: str) -> ScenarioConfig:
    if not text.strip():
        raise ValidationError("empty scenario", "kind")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, line=err.lineno) from None
    return from_dict(data)


def load_config(path) -> ScenarioConfig:
    return loads(Path(path).read_text())


def resolve_scenario(arg: str) -> ScenarioConfig:
    """A preset name or a path to a scenario file."""
    if arg in PRESETS:
        return preset(arg)
    return load_config(arg)


def to_dict(cfg: ScenarioConfig) -> dict:
    d = asdict(cfg)
    d["solver"] = {"dt": d.pop("dt"), "t_final": d.pop("t_final")}
    for k in ("modes", "zeta", "q_R", "d_q"):
        d[k] = list(d[k])
    return d


def serialize(cfg: ScenarioConfig) -> str:
    """Canonical JSON (sorted keys, radians); ``loads(serialize(c)) == c``."""
    return json.dumps(to_dict(cfg), sort_keys=True, indent=2) + "\n"


def digest(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(serialize(cfg).encode("utf-8")).hexdigest()
