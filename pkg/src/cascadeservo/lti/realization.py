"""State-space models and realization of rational transfers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import matrix_balance

from ..errors import ImproperTransfer
from .rational import RationalTransfer, _as_tf


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """x' = A x + B u,  y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = 0 if A.size == 0 else A.shape[0]
        A = A.reshape(n, n)
        B = np.asarray(self.B, dtype=float).reshape(n, -1) if n else \
            np.zeros((0, np.atleast_2d(self.D).shape[1]))
        C = np.asarray(self.C, dtype=float).reshape(-1, n) if n else \
            np.zeros((np.atleast_2d(self.D).shape[0], 0))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(f"inconsistent dimensions A{A.shape} B{B.shape} "
                             f"C{C.shape} D{D.shape}")
        for name, val in zip("ABCD", (A, B, C, D)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def has_feedthrough(self) -> bool:
        return bool(np.any(self.D != 0))

    def freqresp(self, w) -> np.ndarray:
        """Frequency response, shape (len(w), p, m)."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        n = self.n_states
        out = np.empty((len(w), self.n_outputs, self.n_inputs), dtype=complex)
        A, B, C = self.A, self.B, self.C
        if n:
            # diagonal similarity: same transfer, far better conditioned solves
            A, (scale, _) = matrix_balance(A, permute=False, separate=True)
            B, C = B / scale[:, None], C * scale
        for k, wk in enumerate(w):
            if n:
                x = np.linalg.solve(1j * wk * np.eye(n) - A, B)
                out[k] = C @ x + self.D
            else:
                out[k] = self.D
        return out

    def with_derivative_output(self) -> "StateSpaceModel":
        """Append dy/dt = C A x as extra outputs.

        Valid only when the output is free of feedthrough and C B = 0, which
        holds for relative degree >= 2 (e.g. every closed inner joint loop).
        """
        if self.has_feedthrough() or np.any(np.abs(self.C @ self.B) > 0):
            raise ValueError("derivative output requires D = 0 and C B = 0")
        return StateSpaceModel(self.A, self.B,
                               np.vstack([self.C, self.C @ self.A]),
                               np.vstack([self.D, np.zeros_like(self.D)]))


def to_state_space(g) -> StateSpaceModel:
    """Controllable canonical realization of a proper SISO transfer."""
    g = _as_tf(g)
    if not g.is_proper():
        raise ImproperTransfer(
            f"deg num {g.num.degree()} > deg den {g.den.degree()}")
    n = g.den.degree()
    q, r = divmod(g.num, g.den)
    d = float(q.coeffs[0]) if q.degree() >= 0 else 0.0
    if n == 0:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)),
                               np.zeros((1, 0)), [[d]])
    a = g.den.to_array()  # monic, ascending
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = 0.0 - a[:n] + 0.0
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = np.zeros((1, n))
    rc = r.to_array()
    C[0, :len(rc)] = rc
    return StateSpaceModel(A, B, C, [[d]])


def check_realization(g: RationalTransfer, ss: StateSpaceModel,
                      n_freq: int = 16) -> float:
    """Max relative frequency-response mismatch over log-spaced frequencies."""
    p = np.abs(np.concatenate([g.poles(), g.zeros(), [1.0]]))
    p = p[p > 0]
    lo, hi = np.log10(p.min()) - 2, np.log10(p.max()) + 2
    w = np.logspace(lo, hi, n_freq)
    ref = g.freqresp(w)
    got = ss.freqresp(w)[:, 0, 0]
    return float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300)))
