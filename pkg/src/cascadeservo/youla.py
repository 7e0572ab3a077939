"""Youla-parameterized controller synthesis.

Two families are provided:

* the double-integrator design used for every joint loop, with closed loop
  T = (3 tau s + 1)/(tau s + 1)^3, which meets T(0) = 1 and T'(0) = 0 so the
  two plant poles at the origin are not cancelled unstably;
* a Butterworth-shaped tracking design for stable, minimum-phase plants,
  T = wn^2/(s^2 + 2 zeta wn s + wn^2), used by the linearized outer loops.

Everything is built with exact rational arithmetic, so the identities
T = Y*Gp, S = 1 - T and Gc = Y/S hold coefficient for coefficient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ImproperTransfer, InvalidBandwidth, NonMinimumPhasePlant
from .lti.rational import RationalTransfer, _as_tf, is_hurwitz


class BandwidthSeparationWarning(UserWarning):
    """The outer loop is not slower than the inner loop it drives."""


@dataclass(frozen=True, eq=False)
class YoulaDesign:
    plant: RationalTransfer
    Y: RationalTransfer
    T: RationalTransfer
    S: RationalTransfer
    Gc: RationalTransfer
    params: dict = field(default_factory=dict)


def double_integrator_plant() -> RationalTransfer:
    return RationalTransfer([1], [0, 0, 1])


def design_double_integrator(tau) -> YoulaDesign:
    """Joint-loop design for Gp = 1/s^2 with bandwidth 1/tau."""
    if not tau > 0:
        raise InvalidBandwidth(f"tau must be positive, got {tau!r}")
    tq = _exact(tau)
    s = RationalTransfer.s()
    plant = double_integrator_plant()
    T = (3 * tq * s + 1) / (tq * s + 1) ** 3
    Y = T / plant
    S = 1 - T
    Gc = Y / S
    return YoulaDesign(plant, Y, T, S, Gc, {"tau": tau})


def butterworth(omega_n, zeta) -> RationalTransfer:
    w, z = _exact(omega_n), _exact(zeta)
    return RationalTransfer([w * w], [w * w, 2 * z * w, 1])


def _exact(x) -> Fraction:
    # float -> exact binary rational, so derived coefficients stay consistent
    return x if isinstance(x, Fraction) else Fraction(x)


def design_butterworth_tracking(plant, omega_n, zeta, tau_in=None) -> YoulaDesign:
    """Outer-loop design: Y = plant^-1 * wn^2/(s^2 + 2 zeta wn s + wn^2).

    ``tau_in`` (optional) is the time constant of the inner loop inside
    ``plant``; a :class:`BandwidthSeparationWarning` is issued when the outer
    loop is not slower (1/omega_n <= tau_in).
    """
    plant = _as_tf(plant)
    if not omega_n > 0:
        raise InvalidBandwidth(f"omega_n must be positive, got {omega_n!r}")
    if not zeta > 0:
        raise InvalidBandwidth(f"zeta must be positive, got {zeta!r}")
    if plant.is_zero():
        raise NonMinimumPhasePlant("plant is identically zero")
    if not is_hurwitz(plant):
        raise NonMinimumPhasePlant("plant has poles in the closed right half-plane")
    z = plant.zeros()
    if len(z) and not np.all(z.real < 0):
        raise NonMinimumPhasePlant("plant has zeros in the closed right half-plane")
    if plant.relative_degree() > 2:
        raise ImproperTransfer("relative degree > 2: Y would be improper")
    if tau_in is not None and 1.0 / omega_n <= tau_in:
        warnings.warn(f"outer time constant 1/omega_n = {1 / omega_n:g} s is not "
                      f"larger than tau_in = {tau_in:g} s", BandwidthSeparationWarning,
                      stacklevel=2)
    Tbw = butterworth(omega_n, zeta)
    Y = Tbw / plant
    T = Y * plant
    S = 1 - T
    Gc = Y / S
    return YoulaDesign(plant, Y, T, S, Gc, {"omega_n": omega_n, "zeta": zeta})


@dataclass(frozen=True)
class StabilityReport:
    y_stable: bool
    t_stable: bool
    no_rhp_cancellation: bool
    interpolation_ok: bool
    notes: tuple = ()

    @property
    def ok(self) -> bool:
        return self.y_stable and self.t_stable and self.no_rhp_cancellation \
            and self.interpolation_ok


def _multiplicity(poly, root, tol=1e-6) -> int:
    """Multiplicity of ``root`` among the zeros of ``poly``."""
    if root == 0:
        m = 0
        for c in poly.coeffs:
            if c != 0:
                break
            m += 1
        return m
    r = poly.roots()
    return int(np.sum(np.abs(r - root) <= tol * max(1.0, abs(root))))


def _group_roots(roots, tol=1e-6):
    groups = []
    for r in roots:
        for g in groups:
            if abs(g[0] - r) <= tol * max(1.0, abs(r)):
                g[1] += 1
                break
        else:
            groups.append([complex(0.0) if abs(r) <= tol else r, 1])
    return [(complex(g[0]), g[1]) for g in groups]


def verify_internal_stability(d: YoulaDesign) -> StabilityReport:
    notes = []
    y_ok = is_hurwitz(d.Y)
    if not y_ok:
        notes.append("Y has poles in the closed right half-plane")
    t_ok = is_hurwitz(d.T)
    if not t_ok:
        notes.append("T has poles in the closed right half-plane")

    cancel_ok = True
    interp_ok = True
    for p, m in _group_roots(d.plant.poles()):
        if p.real < 0:
            continue
        got = _multiplicity(d.S.num, 0 if p == 0 else p)
        if got < m:
            cancel_ok = False
            notes.append(f"unstable plant pole {p} (x{m}) is a zero of S only x{got}")
        if p == 0:
            # T(0) = 1 and the first m-1 derivatives of T vanish at the origin
            if d.T.dcgain() != 1:
                interp_ok = False
                notes.append("T(0) != 1")
            dT = d.T
            for k in range(1, m):
                dT = dT.derivative()
                if dT.dcgain() != 0:
                    interp_ok = False
                    notes.append(f"d^{k}T/ds^{k} at 0 != 0")
    for z, m in _group_roots(d.plant.zeros()):
        if z.real < 0:
            continue
        if _multiplicity(d.T.num, 0 if z == 0 else z) < m:
            cancel_ok = False
            notes.append(f"unstable plant zero {z} is not a zero of T")
    return StabilityReport(y_ok, t_ok, cancel_ok, interp_ok, tuple(notes))


class DiagonalController:
    """n decoupled copies of one SISO controller (G_c * I)."""

    def __init__(self, gc, n: int):
        if n < 1:
            raise ValueError("n must be at least 1")
        self.gc = _as_tf(gc)
        self.n = int(n)

    def __getitem__(self, ij) -> RationalTransfer:
        i, j = ij
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(ij)
        return self.gc if i == j else RationalTransfer.constant(0)

    def as_matrix(self) -> list:
        return [[self[i, j] for j in range(self.n)] for i in range(self.n)]

    def freqresp(self, w) -> np.ndarray:
        """Shape (len(w), n, n); off-diagonal entries are exactly zero."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        out = np.zeros((len(w), self.n, self.n), dtype=complex)
        g = self.gc.freqresp(w)
        for i in range(self.n):
            out[:, i, i] = g
        return out


def mimo_diagonal(gc, n: int) -> DiagonalController:
    return DiagonalController(gc, n)
