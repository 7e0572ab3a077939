"""Sampled simulation traces and step-response metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import SignalMissing


def fmt_float(x: float) -> str:
    # repr gives the shortest string that round-trips the exact double
    return repr(float(x))


@dataclass
class SimTrace:
    """Uniformly sampled, named signals; sample k sits at t0 + k*dt."""

    dt: float
    t0: float = 0.0
    signals: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        self.signals = {k: np.asarray(v, dtype=float) for k, v in self.signals.items()}
        lengths = {len(v) for v in self.signals.values()}
        if len(lengths) > 1:
            raise ValueError(f"signals have unequal lengths {sorted(lengths)}")

    def __len__(self):
        return len(next(iter(self.signals.values()))) if self.signals else 0

    def __getitem__(self, name) -> np.ndarray:
        if name == "t":
            return self.t
        try:
            return self.signals[name]
        except KeyError:
            raise SignalMissing(name) from None

    def __contains__(self, name):
        return name == "t" or name in self.signals

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def names(self) -> list:
        return list(self.signals)

    def select(self, names) -> "SimTrace":
        return SimTrace(self.dt, self.t0, {n: self[n] for n in names}, dict(self.meta))

    def truncated(self, n: int) -> "SimTrace":
        return SimTrace(self.dt, self.t0, {k: v[:n] for k, v in self.signals.items()},
                        dict(self.meta))

    def to_csv(self, path=None, columns=None) -> str:
        """Write ``t`` plus the signals (in ``columns`` order, default insertion order)."""
        columns = list(columns) if columns is not None else self.names
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + columns)
        rows = np.column_stack([self.t] + [self[c] for c in columns]).tolist()
        # repr of a Python float is what fmt_float emits; no cell needs quoting
        buf.writelines(",".join(map(repr, r)) + "\n" for r in rows)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, meta=None) -> "SimTrace":
        return cls.parse_csv(Path(path).read_text(), meta)

    @classmethod
    def parse_csv(cls, text: str, meta=None) -> "SimTrace":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header[0] != "t":
            raise ValueError("first column must be t")
        data = np.array([[float(x) for x in r] for r in body]) if body else \
            np.zeros((0, len(header)))
        t = data[:, 0]
        dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
        sig = {name: data[:, j] for j, name in enumerate(header) if j > 0}
        return cls(dt=dt, t0=float(t[0]) if len(t) else 0.0, signals=sig, meta=meta or {})


@dataclass(frozen=True)
class StepMetrics:
    final_value: float
    overshoot_fraction: float
    peak_time: float
    settling_time: float        # math.inf when the signal never settles
    steady_state_error: float
    rise_time: float = math.inf  # 10-90 %
    initial_value: float = 0.0
    reference: float = 0.0

    @property
    def settled(self) -> bool:
        return math.isfinite(self.settling_time)

    def as_dict(self) -> dict:
        return {
            "final_value": self.final_value,
            "overshoot_fraction": self.overshoot_fraction,
            "peak_time": self.peak_time,
            "settling_time": self.settling_time,
            "settled": self.settled,
            "steady_state_error": self.steady_state_error,
            "rise_time": self.rise_time,
            "initial_value": self.initial_value,
            "reference": self.reference,
        }


def step_metrics(trace: SimTrace, signal: str, band: float = 0.02,
                 reference: float | None = None) -> StepMetrics:
    """Step-response figures of ``signal``.

    Overshoot, band and rise levels are measured relative to the step from the
    first sample to ``reference`` (the commanded final value; defaults to the
    last sample).  Settling time is the instant after which the signal stays
    within ``band * |step|`` of the reference.
    """
    if not 0 < band < 1:
        raise ValueError("band must lie in (0, 1)")
    y = trace[signal]
    t = trace.t - trace.t0
    y0, yend = float(y[0]), float(y[-1])
    ref = yend if reference is None else float(reference)
    step = ref - y0
    if abs(step) <= 1e-15 * max(1.0, abs(ref)):
        tol = band * max(abs(ref), 1e-12)
        outside = np.nonzero(np.abs(y - ref) > tol)[0]
        settle = 0.0 if len(outside) == 0 else (
            math.inf if outside[-1] == len(y) - 1 else float(t[outside[-1] + 1]))
        return StepMetrics(yend, 0.0, 0.0, settle, abs(ref - yend), 0.0, y0, ref)
    sgn = 1.0 if step > 0 else -1.0
    excess = (y - ref) * sgn
    k_peak = int(np.argmax(y * sgn))
    overshoot = max(0.0, float(np.max(excess))) / abs(step)
    outside = np.nonzero(np.abs(y - ref) > band * abs(step))[0]
    if len(outside) == 0:
        settle = 0.0
    elif outside[-1] == len(y) - 1:
        settle = math.inf
    else:
        settle = float(t[outside[-1] + 1])
    frac = (y - y0) / step
    i10 = np.nonzero(frac >= 0.1)[0]
    i90 = np.nonzero(frac >= 0.9)[0]
    rise = float(t[i90[0]] - t[i10[0]]) if len(i10) and len(i90) else math.inf
    return StepMetrics(
        final_value=yend,
        overshoot_fraction=overshoot,
        peak_time=float(t[k_peak]),
        settling_time=settle,
        steady_state_error=abs(ref - yend),
        rise_time=rise,
        initial_value=y0,
        reference=ref,
    )


def first_entry_time(trace: SimTrace, signal: str, target: float, tol: float) -> float:
    """First time |signal - target| <= tol (math.inf if never)."""
    idx = np.nonzero(np.abs(trace[signal] - target) <= tol)[0]
    return float(trace.t[idx[0]] - trace.t0) if len(idx) else math.inf
