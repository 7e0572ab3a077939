"""Fixed-step RK4 simulation of block diagrams.

A network is a set of blocks wired by signal name.  Every block reads named
scalar signals and produces named scalar signals; external inputs are
functions of time (or constants).  Blocks without direct feedthrough break
loops; a loop made only of feedthrough blocks is an algebraic loop and is
rejected up front.

Discrete logic (source switching, integrator resets) is expressed as step
hooks, which run at every sample and may rewrite block states, or as events,
which fire at the located zero crossing of a guard function inside a step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import AlgebraicLoopDetected, NonFiniteState, SimulationError
from .realization import StateSpaceModel
from .trace import SimTrace

STATE_LIMIT = 1e12


class Block:
    name: str
    inputs: tuple
    outputs: tuple
    n_states: int = 0
    feedthrough: bool = True

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.n_states)


class LinearBlock(Block):
    """State-space block; input/output ports map to signal names in order."""

    def __init__(self, name: str, model: StateSpaceModel, inputs: Sequence[str],
                 outputs: Sequence[str], x0=None):
        self.name = name
        self.model = model
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        if len(self.inputs) != model.n_inputs or len(self.outputs) != model.n_outputs:
            raise ValueError(f"{name}: port count does not match model dimensions")
        self.n_states = model.n_states
        self.feedthrough = model.has_feedthrough()
        self.x0 = np.zeros(self.n_states) if x0 is None else np.asarray(x0, float).ravel()
        # plain copies keep the per-stage arithmetic cheap
        self._A, self._B = model.A.copy(), model.B.copy()
        self._C, self._D = model.C.copy(), model.D.copy()

    def initial_state(self):
        return self.x0.copy()

    def output(self, t, x, u):
        y = self._C @ x
        if self.feedthrough:
            y = y + self._D @ u
        return y

    def deriv(self, t, x, u):
        return self._A @ x + self._B @ u


class NonlinearBlock(Block):
    """x' = f(t, x, u), y = g(t, x, u); declare feedthrough=False when g ignores u."""

    def __init__(self, name, deriv: Callable, output: Callable, inputs, outputs,
                 n_states: int, x0=None, feedthrough: bool = True):
        self.name = name
        self._f, self._g = deriv, output
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        self.n_states = int(n_states)
        self.feedthrough = feedthrough
        self.x0 = np.zeros(self.n_states) if x0 is None else np.asarray(x0, float).ravel()

    def initial_state(self):
        return self.x0.copy()

    def output(self, t, x, u):
        return np.atleast_1d(self._g(t, x, u))

    def deriv(self, t, x, u):
        return np.asarray(self._f(t, x, u), dtype=float)


class StaticBlock(Block):
    """Memoryless map fn(t, *inputs) -> scalar or tuple of scalars."""

    def __init__(self, name, fn: Callable, inputs, outputs):
        self.name = name
        self.fn = fn
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)

    def output(self, t, x, u):
        y = self.fn(t, *u)
        return (y,) if len(self.outputs) == 1 and np.ndim(y) == 0 else y


def sum_block(name, inputs, output, signs=None) -> StaticBlock:
    signs = tuple(signs) if signs is not None else (1.0,) * len(inputs)
    return StaticBlock(name, lambda t, *u: sum(s * v for s, v in zip(signs, u)),
                       inputs, (output,))


def gain_block(name, k, inp, out) -> StaticBlock:
    return StaticBlock(name, lambda t, u: k * u, (inp,), (out,))


@dataclass
class StepContext:
    """What a step hook sees: current time, signal values, block states."""

    t: float
    k: int
    signals: dict
    _net: "Network"
    _x: np.ndarray

    def state(self, block: str) -> np.ndarray:
        return self._x[self._net._slices[block]].copy()

    def set_state(self, block: str, value) -> None:
        self._x[self._net._slices[block]] = value
        self._net._dirty = True

    def block(self, name: str) -> Block:
        return self._net.blocks[name]

    def mark_changed(self) -> None:
        """Call after mutating block parameters so outputs are re-evaluated."""
        self._net._dirty = True


class Event:
    """Guard ``value(t, signals)``; fires once when it turns non-negative.

    Subclasses implement ``value`` and ``fire(ctx)``.  After firing the guard
    must be negative again (e.g. because ``fire`` flips a mode flag).
    """

    def value(self, t: float, signals: dict) -> float:
        raise NotImplementedError

    def fire(self, ctx: StepContext) -> None:
        raise NotImplementedError


class Network:
    def __init__(self, blocks: Sequence[Block], inputs: dict | None = None,
                 hooks: Sequence[Callable] = (), events: Sequence[Event] = ()):
        self.blocks = {}
        for b in blocks:
            if b.name in self.blocks:
                raise ValueError(f"duplicate block name {b.name!r}")
            self.blocks[b.name] = b
        self.inputs = {}
        for name, fn in (inputs or {}).items():
            self.inputs[name] = fn if callable(fn) else _const(float(fn))
        self.hooks = list(hooks)
        self.events = list(events)
        self._compile()

    def _compile(self):
        producer = {}
        for name in self.inputs:
            producer[name] = None
        for b in self.blocks.values():
            for s in b.outputs:
                if s in producer:
                    raise ValueError(f"signal {s!r} has more than one source")
                producer[s] = b.name
        for b in self.blocks.values():
            for s in b.inputs:
                if s not in producer:
                    raise ValueError(f"block {b.name!r} reads unknown signal {s!r}")
        self._producer = producer

        # state-only outputs first, then feedthrough blocks in dependency order
        ft = {b.name: b for b in self.blocks.values() if b.feedthrough}
        deps = {n: {producer[s] for s in b.inputs} & set(ft) for n, b in ft.items()}
        order = []
        insertion = list(ft)
        ready = [n for n in insertion if not deps[n]]
        remaining = {n: set(d) for n, d in deps.items()}
        while ready:
            n = ready.pop(0)
            order.append(n)
            del remaining[n]
            newly = []
            for m, d in remaining.items():
                if n in d:
                    d.discard(n)
                    if not d:
                        newly.append(m)
            ready.extend(sorted(newly, key=insertion.index))
        if remaining:
            raise AlgebraicLoopDetected(
                f"algebraic loop through feedthrough blocks {sorted(remaining)}")

        # linear blocks first in the state vector, stacked block-diagonally
        linear = [b for b in self.blocks.values() if isinstance(b, LinearBlock)]
        others = [b for b in self.blocks.values() if not isinstance(b, LinearBlock)]
        self._slices = {}
        i = 0
        for b in linear + others:
            self._slices[b.name] = slice(i, i + b.n_states)
            i += b.n_states
        self.n_states = i
        self._n_lin = sum(b.n_states for b in linear)

        self._signal_names = list(self.inputs) + [
            s for b in self.blocks.values() for s in b.outputs]
        idx = {s: j for j, s in enumerate(self._signal_names)}
        self._sig_index = idx
        self._input_fns = [(idx[n], fn) for n, fn in self.inputs.items()]

        n_out = sum(b.model.n_outputs for b in linear)
        n_in = sum(b.model.n_inputs for b in linear)
        A = np.zeros((self._n_lin, self._n_lin))
        B = np.zeros((self._n_lin, n_in))
        C = np.zeros((n_out, self._n_lin))
        row = col = 0
        self._row_of = {}
        lin_in = []
        for b in linear:
            sl = self._slices[b.name]
            m = b.model
            A[sl, sl] = m.A
            B[sl, col:col + m.n_inputs] = m.B
            C[row:row + m.n_outputs, sl] = m.C
            self._row_of[b.name] = list(range(row, row + m.n_outputs))
            lin_in.extend(idx[s] for s in b.inputs)
            row += m.n_outputs
            col += m.n_inputs
        self._A_all, self._B_all, self._C_all = A, B, C
        self._lin_in = lin_in

        # per-stage program: (kind, payload)
        lead_pairs = []
        program = []
        for b in linear:
            if not b.feedthrough:
                lead_pairs.extend((idx[s], r) for s, r in zip(b.outputs, self._row_of[b.name]))
        for b in others:
            if not b.feedthrough:
                program.append(self._op_for(b, idx))
        for n in order:
            b = ft[n]
            program.append(self._op_for(b, idx))
        self._lead_pairs = lead_pairs
        self._program = program
        self._nonlinear = [(b, self._slices[b.name], [idx[s] for s in b.inputs])
                           for b in others if b.n_states]
        self._dirty = False
        self._build_evaluator()

    def _op_for(self, b, idx):
        ins = [idx[s] for s in b.inputs]
        outs = [idx[s] for s in b.outputs]
        if isinstance(b, LinearBlock):
            rows = self._row_of[b.name]
            terms = [[(float(b.model.D[r, c]), ins[c]) for c in range(len(ins))
                      if b.model.D[r, c] != 0] for r in range(len(rows))]
            return ("lin", (outs, rows, terms))
        if isinstance(b, StaticBlock):
            return ("static", (b.fn, ins, outs))
        return ("nl", (b, self._slices[b.name], ins, outs))

    def initial_state(self) -> np.ndarray:
        x = np.zeros(self.n_states)
        for b in self.blocks.values():
            x[self._slices[b.name]] = b.initial_state()
        return x

    def _build_evaluator(self):
        """Straight-line Python for one pass through ``self._program``.

        Generating the code once removes the per-block dispatch from the
        inner loop, which dominates the cost of small networks.
        """
        env = {"np": np, "_float": float, "_seq": (tuple, list, np.ndarray), "_nd": np.ndarray}
        lines = ["def _eval(t, x):",
                 "    if x.__class__ is _nd:",
                 "        x = x.tolist()"]
        n_sig = len(self._signal_names)
        for j, fn in self._input_fns:
            env[f"in{j}"] = fn
            lines.append(f"    s{j} = in{j}(t)")
        for r, crow in enumerate(self._C_all):
            lines.append(f"    y{r} = {_dot(crow, 'x[{}]')}")
        for j, r in self._lead_pairs:
            lines.append(f"    s{j} = y{r}")
        for m, (kind, p) in enumerate(self._program):
            if kind == "static":
                fn, ins, outs = p
                env[f"f{m}"] = fn
                args = "".join(f", s{i}" for i in ins)
                lines.append(f"    y = f{m}(t{args})")
                if len(outs) == 1:
                    lines.append(f"    s{outs[0]} = _float(y[0] if isinstance(y, _seq) else y)")
                else:
                    lines.append(f"    {', '.join(f's{o}' for o in outs)}, = y")
                    lines.extend(f"    s{o} = _float(s{o})" for o in outs)
            elif kind == "lin":
                outs, rows, terms = p
                for o, r, tr in zip(outs, rows, terms):
                    extra = "".join(f" + {d!r} * s{i}" for d, i in tr)
                    lines.append(f"    s{o} = y{r}{extra}")
            else:
                b, sl, ins, outs = p
                env[f"b{m}"] = b
                # without feedthrough the output ignores u, whose producers run later
                u = ", ".join(f"s{i}" if b.feedthrough else "0.0" for i in ins)
                lines.append(f"    y = b{m}.output(t, np.array(x[{sl.start}:{sl.stop}]), "
                             f"np.array([{u}]))")
                lines.extend(f"    s{o} = _float(y[{k}])" for k, o in enumerate(outs))
        # signals nobody writes (cannot happen after _compile checks) stay 0.0
        written = {j for j, _ in self._input_fns} | {j for j, _ in self._lead_pairs}
        for kind, p in self._program:
            written.update(p[2] if kind == "static" else p[0] if kind == "lin" else p[3])
        lines.append("    return [" + ", ".join(
            f"s{j}" if j in written else "0.0" for j in range(n_sig)) + "]")
        # state derivative: sparse linear part, then each stateful nonlinear block
        lines += ["", "def _deriv(t, x, sig):"]
        nl = self._n_lin
        lin_u = [f"sig[{i}]" for i in self._lin_in]
        out = []
        for r in range(nl):
            a = _dot(self._A_all[r], "x[{}]")
            b = _dot(self._B_all[r], "{}", names=lin_u)
            out.append(f"d{r}")
            lines.append(f"    d{r} = {a} + {b}")
        for m, (b, sl, ins) in enumerate(self._nonlinear):
            env[f"n{m}"] = b
            u = ", ".join(f"sig[{i}]" for i in ins)
            lines.append(f"    z{m} = n{m}.deriv(t, np.array(x[{sl.start}:{sl.stop}]), "
                         f"np.array([{u}])).tolist()")
            out.append(f"*z{m}")
        lines.append("    return [" + ", ".join(out) + "]")
        exec(compile("\n".join(lines), f"<network {id(self):x}>", "exec"), env)
        self._eval = env["_eval"]
        self._deriv = env["_deriv"]

    def evaluate(self, t: float, x: np.ndarray) -> dict:
        """All signal values at (t, x), keyed by name."""
        return dict(zip(self._signal_names, self._eval(t, x)))

    def derivative(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).tolist()
        return np.array(self._deriv(t, x, self._eval(t, x)), dtype=float)

    def simulate(self, dt: float, t_final: float, t0: float = 0.0, x0=None,
                 record: Sequence[str] | None = None, meta: dict | None = None) -> SimTrace:
        if not dt > 0:
            raise ValueError("dt must be positive")
        n = int(round((t_final - t0) / dt))
        if abs(n * dt - (t_final - t0)) > 1e-9 * max(1.0, abs(t_final)):
            raise ValueError("t_final - t0 must be an integer multiple of dt")
        names = list(record) if record is not None else self._signal_names
        cols = [self._sig_index[nm] for nm in names]
        buf = np.empty((n + 1, len(names)))
        x = self.initial_state() if x0 is None else np.asarray(x0, float).copy()
        meta = dict(meta or {})
        meta.setdefault("solver", {"method": "rk4", "dt": dt, "t_final": t_final})

        def partial(k):
            return SimTrace(dt, t0, {nm: buf[:k, j].copy() for j, nm in enumerate(names)},
                            dict(meta, terminated_at=t0 + max(k - 1, 0) * dt))

        filled = 0
        ahead = None  # signals at the next sample, when event checks already computed them
        try:
            for k in range(n + 1):
                t = t0 + k * dt
                sig = ahead if ahead is not None else self._eval(t, x)
                ahead = None
                if self.hooks:
                    ctx = StepContext(t, k, dict(zip(self._signal_names, sig)), self, x)
                    self._dirty = False
                    for h in self.hooks:
                        h(ctx)
                    if self._dirty:
                        sig = self._eval(t, x)
                row = [sig[j] for j in cols]
                buf[k] = row
                filled = k + 1
                # NaN fails every comparison, so one bound check covers both
                xmax = float(np.max(np.abs(x))) if len(x) else 0.0
                if not (xmax < STATE_LIMIT and math.isfinite(sum(row))):
                    filled = k
                    raise NonFiniteState(f"state left the finite range at t={t:g}")
                if k == n:
                    break
                x_next = self._rk4(t, x, dt, sig)
                if self.events:
                    x_next, ahead = self._handle_events(t, x, dt, sig, x_next, k,
                                                        t0 + (k + 1) * dt)
                x = x_next
        except SimulationError as err:
            err.trace = partial(filled)
            raise
        return SimTrace(dt, t0, {nm: buf[:, j].copy() for j, nm in enumerate(names)}, meta)

    def _guard(self, ev, t, x):
        return ev.value(t, dict(zip(self._signal_names, self._eval(t, x))))

    def _handle_events(self, t, x, dt, sig, x_next, k, t_next, max_fire=8):
        """Locate guard crossings inside [t, t+dt], fire them, finish the step.

        Returns the state at ``t_next`` and, when no event fired, the signal
        values there (so the caller need not evaluate them again).
        """
        t_start, x_start, h_left, sig_start = t, x, dt, sig
        for n_fired in range(max_fire):
            t_end = t_next if n_fired == 0 else t_start + h_left
            end_list = self._eval(t_end, x_next)
            end = dict(zip(self._signal_names, end_list))
            fired = [ev for ev in self.events if ev.value(t_end, end) >= 0]
            if not fired:
                return x_next, (end_list if n_fired == 0 else None)
            # earliest crossing among the firing guards, by bisection on the sub-step
            best_h, best_ev = h_left, None
            for ev in fired:
                lo, hi = 0.0, h_left
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    xm = self._rk4(t_start, x_start, mid, sig_start)
                    if self._guard(ev, t_start + mid, xm) >= 0:
                        hi = mid
                    else:
                        lo = mid
                    if hi - lo <= 1e-12 * max(1.0, dt):
                        break
                if hi <= best_h:
                    best_h, best_ev = hi, ev
            x_e = self._rk4(t_start, x_start, best_h, sig_start)
            t_e = t_start + best_h
            ctx = StepContext(t_e, k, self.evaluate(t_e, x_e), self, x_e)
            best_ev.fire(ctx)
            t_start, x_start, h_left = t_e, x_e, h_left - best_h
            sig_start = self._eval(t_start, x_start)
            x_next = self._rk4(t_start, x_start, h_left, sig_start) if h_left > 0 else x_start
        raise SimulationError(f"more than {max_fire} events in one step at t={t:g}")

    def _rk4(self, t, x, h, sig0):
        # plain float lists: for a handful of states this beats numpy temporaries
        f, ev = self._deriv, self._eval
        x = x.tolist()
        h2 = h / 2
        k1 = f(t, x, sig0)
        xs = [a + h2 * b for a, b in zip(x, k1)]
        k2 = f(t + h2, xs, ev(t + h2, xs))
        xs = [a + h2 * b for a, b in zip(x, k2)]
        k3 = f(t + h2, xs, ev(t + h2, xs))
        xs = [a + h * b for a, b in zip(x, k3)]
        k4 = f(t + h, xs, ev(t + h, xs))
        h6 = h / 6
        return np.array([a + h6 * (b + 2 * c + 2 * d + e)
                         for a, b, c, d, e in zip(x, k1, k2, k3, k4)], dtype=float)


def _dot(coeffs, fmt: str, names=None) -> str:
    """Source for sum(c * operand) over the non-zero coefficients ("0.0" if none)."""
    terms = []
    for j, c in enumerate(coeffs):
        if c != 0:
            ref = names[j] if names is not None else fmt.format(j)
            terms.append(ref if c == 1 else f"{float(c)!r} * {ref}")
    return " + ".join(terms) if terms else "0.0"


def _const(v):
    return lambda t: v


def step_input(amplitude: float, t_step: float = 0.0):
    return lambda t: amplitude if t >= t_step else 0.0


def simulate_network(blocks, inputs, dt, t_final, hooks=(), record=None, meta=None,
                     t0=0.0, events=()) -> SimTrace:
    """One-shot wrapper: build a Network and run it."""
    return Network(blocks, inputs, hooks, events).simulate(dt, t_final, t0=t0, record=record,
                                                   meta=meta)
