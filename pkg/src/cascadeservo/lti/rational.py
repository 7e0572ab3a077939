"""Polynomials and rational transfer functions in the Laplace variable s.

Coefficients are held as :class:`fractions.Fraction`.  Floats are converted
exactly (binary expansion), so sums, products and common-factor cancellation
are exact; identities such as ``T + S == 1`` hold coefficient for
coefficient.  Numerical work (roots, frequency response) happens on float
copies.
"""

from __future__ import annotations

import math
import numbers
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ..errors import AlgebraicLoop, DivisionByZeroTransfer

CANCEL_TOL = 1e-8


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, numbers.Integral):
        return Fraction(int(x))
    xf = float(x)
    if not math.isfinite(xf):
        raise ValueError(f"non-finite coefficient {x!r}")
    return Fraction(xf)


class Polynomial:
    """Real polynomial, coefficients in ascending powers of s.

    The zero polynomial is stored as ``(0,)`` and has degree -1 by
    convention here (``degree()`` returns -1) so that ``deg(p*q)`` adds up.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Iterable = (0,)):
        c = [_to_fraction(x) for x in coeffs]
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        if not c:
            c = [Fraction(0)]
        self._c = tuple(c)

    # construction helpers
    @classmethod
    def from_roots(cls, roots: Sequence[complex], gain=1.0) -> "Polynomial":
        coeffs = np.real_if_close(np.poly(np.asarray(roots, dtype=complex)), tol=1e6)
        coeffs = np.real(coeffs)[::-1] * float(gain)
        return cls(coeffs)

    @classmethod
    def s(cls) -> "Polynomial":
        return cls((0, 1))

    @property
    def coeffs(self) -> tuple:
        return self._c

    def to_array(self) -> np.ndarray:
        """Float coefficients, ascending powers."""
        return np.array([float(x) for x in self._c])

    def degree(self) -> int:
        return -1 if self.is_zero() else len(self._c) - 1

    def is_zero(self) -> bool:
        return len(self._c) == 1 and self._c[0] == 0

    @property
    def lead(self) -> Fraction:
        return self._c[-1]

    def __repr__(self):
        return f"Polynomial({[float(x) for x in self._c]})"

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            try:
                other = Polynomial([other])
            except (TypeError, ValueError):
                return NotImplemented
        return self._c == other._c

    def __hash__(self):
        return hash(self._c)

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Polynomial):
            return other
        if isinstance(other, (numbers.Real, Fraction)):
            return Polynomial([other])
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        n = max(len(self._c), len(other._c))
        a = self._c + (Fraction(0),) * (n - len(self._c))
        b = other._c + (Fraction(0),) * (n - len(other._c))
        return Polynomial(x + y for x, y in zip(a, b))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-x for x in self._c)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = [Fraction(0)] * (len(self._c) + len(other._c) - 1)
        for i, x in enumerate(self._c):
            if x == 0:
                continue
            for j, y in enumerate(other._c):
                out[i + j] += x * y
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial([1])
        for _ in range(k):
            out = out * self
        return out

    def __divmod__(self, other: "Polynomial"):
        other = self._coerce(other)
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self._c)
        dd = other.degree()
        if self.degree() < dd:
            return Polynomial([0]), self
        quot = [Fraction(0)] * (len(rem) - dd)
        for k in range(len(rem) - dd - 1, -1, -1):
            q = rem[k + dd] / other.lead
            quot[k] = q
            if q:
                for j, y in enumerate(other._c):
                    rem[k + j] -= q * y
        return Polynomial(quot), Polynomial(rem[:dd] or [0])

    def __floordiv__(self, other):
        return divmod(self, other)[0]

    def __mod__(self, other):
        return divmod(self, other)[1]

    def monic(self) -> "Polynomial":
        if self.is_zero():
            return self
        return Polynomial(x / self.lead for x in self._c)

    def derivative(self) -> "Polynomial":
        return Polynomial([k * c for k, c in enumerate(self._c)][1:] or [0])

    # evaluation
    def __call__(self, s):
        if isinstance(s, (Fraction, numbers.Integral)):
            acc = Fraction(0)
            for c in reversed(self._c):
                acc = acc * s + c
            return acc
        return np.polyval(self.to_array()[::-1], s)

    def roots(self) -> np.ndarray:
        """Roots via companion-matrix eigenvalues, multiple roots polished."""
        if self.degree() <= 0:
            return np.zeros(0, dtype=complex)
        c = list(self._c)
        nzero = 0
        while c[0] == 0:
            c.pop(0)
            nzero += 1
        rest = np.zeros(0, dtype=complex)
        if len(c) > 1:
            arr = np.array([float(x) for x in c])
            rest = np.roots(arr[::-1]).astype(complex)
            rest = _polish_clusters(Polynomial(c), rest)
        out = np.concatenate([np.zeros(nzero, dtype=complex), rest])
        return out[np.lexsort((out.imag, out.real))]


def _polish_clusters(p: Polynomial, roots: np.ndarray) -> np.ndarray:
    """Replace clusters of a perturbed multiple root by their centroid.

    A cluster of m roots is accepted as one m-fold root when p and its first
    m-1 derivatives are small at the centroid, relative to the coefficient
    scale there.
    """
    roots = roots.copy()
    used = np.zeros(len(roots), dtype=bool)
    derivs = [p]
    for _ in range(p.degree()):
        derivs.append(derivs[-1].derivative())
    for i in range(len(roots)):
        if used[i]:
            continue
        scale = max(1.0, abs(roots[i]))
        members = [j for j in range(len(roots))
                   if not used[j] and abs(roots[j] - roots[i]) <= 1e-3 * scale]
        m = len(members)
        if m < 2:
            continue
        c = np.mean(roots[members])
        if abs(c.imag) < 1e-3 * scale:
            c = complex(c.real, 0.0)
        ok = True
        for k in range(m):
            dk = derivs[k].to_array()
            mag = np.polyval(np.abs(dk)[::-1], abs(c)) + 1e-300
            if abs(np.polyval(dk[::-1], c)) > 1e-6 * mag:
                ok = False
                break
        if ok:
            roots[members] = c
            used[members] = True
    return roots


def poly_gcd(a: Polynomial, b: Polynomial) -> Polynomial:
    """Monic greatest common divisor (exact Euclid over the rationals)."""
    a, b = a.monic(), b.monic()
    while not b.is_zero():
        a, b = b, (a % b).monic()
    return a.monic() if not a.is_zero() else Polynomial([1])


def _divide_out_root(p: Polynomial, r: complex) -> Polynomial:
    if abs(r.imag) < 1e-14 * max(1.0, abs(r)):
        fac = Polynomial([-r.real, 1])
    else:
        fac = Polynomial([abs(r) ** 2, -2 * r.real, 1])
    return p // fac


class RationalTransfer:
    """num(s)/den(s) in canonical form: den monic, common factors removed."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=(1,), cancel: bool = True):
        num = num if isinstance(num, Polynomial) else Polynomial(
            num if isinstance(num, Iterable) else [num])
        den = den if isinstance(den, Polynomial) else Polynomial(
            den if isinstance(den, Iterable) else [den])
        if den.is_zero():
            raise DivisionByZeroTransfer("denominator is identically zero")
        if num.is_zero():
            self.num, self.den = Polynomial([0]), Polynomial([1])
            return
        if cancel:
            g = poly_gcd(num, den)
            if g.degree() > 0:
                num, den = num // g, den // g
            num, den = _cancel_close_roots(num, den)
        lead = den.lead
        self.num = Polynomial(x / lead for x in num.coeffs)
        self.den = Polynomial(x / lead for x in den.coeffs)

    @classmethod
    def constant(cls, k) -> "RationalTransfer":
        return cls([k], [1])

    @classmethod
    def s(cls) -> "RationalTransfer":
        return cls([0, 1], [1])

    def __repr__(self):
        return (f"RationalTransfer(num={[float(x) for x in self.num.coeffs]}, "
                f"den={[float(x) for x in self.den.coeffs]})")

    def __eq__(self, other):
        if not isinstance(other, RationalTransfer):
            try:
                other = _as_tf(other)
            except TypeError:
                return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_proper(self) -> bool:
        return self.num.degree() <= self.den.degree()

    def is_strictly_proper(self) -> bool:
        return self.num.degree() < self.den.degree()

    def relative_degree(self) -> int:
        return self.den.degree() - max(self.num.degree(), 0)

    # arithmetic
    def __add__(self, other):
        return tf_arith(self, other, "add")

    def __radd__(self, other):
        return tf_arith(other, self, "add")

    def __sub__(self, other):
        return tf_arith(self, other, "sub")

    def __rsub__(self, other):
        return tf_arith(other, self, "sub")

    def __mul__(self, other):
        return tf_arith(self, other, "mul")

    def __rmul__(self, other):
        return tf_arith(other, self, "mul")

    def __truediv__(self, other):
        return tf_arith(self, other, "div")

    def __rtruediv__(self, other):
        return tf_arith(other, self, "div")

    def __neg__(self):
        return RationalTransfer(-self.num, self.den, cancel=False)

    def __pow__(self, k: int):
        out = RationalTransfer.constant(1)
        base = self if k >= 0 else 1 / self
        for _ in range(abs(k)):
            out = out * base
        return out

    def inv(self) -> "RationalTransfer":
        return tf_arith(1, self, "div")

    # evaluation
    def __call__(self, s):
        if isinstance(s, (Fraction, numbers.Integral)):
            d = self.den(s)
            if d == 0:
                raise ZeroDivisionError("evaluation at a pole")
            return self.num(s) / d
        return self.num(s) / self.den(s)

    def freqresp(self, w) -> np.ndarray:
        return self(1j * np.asarray(w, dtype=float))

    def dcgain(self):
        return self(Fraction(0))

    def derivative(self) -> "RationalTransfer":
        """d/ds of the rational function (not a time derivative)."""
        n, d = self.num, self.den
        return RationalTransfer(n.derivative() * d - n * d.derivative(), d * d)

    def poles(self) -> np.ndarray:
        return self.den.roots()

    def zeros(self) -> np.ndarray:
        return self.num.roots()

    def num_array(self) -> np.ndarray:
        return self.num.to_array()

    def den_array(self) -> np.ndarray:
        return self.den.to_array()

    def allclose(self, other: "RationalTransfer", tol: float = 1e-9) -> bool:
        """Coefficient-wise comparison, relative to the largest coefficient."""
        other = _as_tf(other)
        out = True
        for a, b in ((self.num, other.num), (self.den, other.den)):
            x, y = a.to_array(), b.to_array()
            n = max(len(x), len(y))
            x = np.pad(x, (0, n - len(x)))
            y = np.pad(y, (0, n - len(y)))
            scale = max(np.max(np.abs(x)), np.max(np.abs(y)), 1e-300)
            out &= bool(np.all(np.abs(x - y) <= tol * scale))
        return out


def _cancel_close_roots(num: Polynomial, den: Polynomial):
    """Cancel num/den root pairs that agree within CANCEL_TOL (absolute)."""
    if num.degree() < 1 or den.degree() < 1:
        return num, den
    rn, rd = list(num.roots()), list(den.roots())
    matched = []
    for r in rn:
        if r.imag < -1e-14:
            continue  # conjugates handled with their upper-half partner
        for k, q in enumerate(rd):
            if abs(r - q) <= CANCEL_TOL:
                matched.append(r)
                rd.pop(k)
                if abs(r.imag) > 1e-14:
                    # drop the conjugate partner from the remaining den roots
                    for k2, q2 in enumerate(rd):
                        if abs(q2 - np.conj(r)) <= CANCEL_TOL:
                            rd.pop(k2)
                            break
                break
    if not matched:
        return num, den
    for r in matched:
        num = _divide_out_root(num, r)
        den = _divide_out_root(den, r)
    return num, den


def _as_tf(x) -> RationalTransfer:
    if isinstance(x, RationalTransfer):
        return x
    if isinstance(x, Polynomial):
        return RationalTransfer(x, Polynomial([1]))
    if isinstance(x, (numbers.Real, Fraction)):
        return RationalTransfer.constant(x)
    raise TypeError(f"cannot interpret {type(x).__name__} as a transfer function")


def tf_arith(a, b, kind: str) -> RationalTransfer:
    """Exact add/sub/mul/div of two transfers (scalars are promoted)."""
    a, b = _as_tf(a), _as_tf(b)
    if kind == "add":
        return RationalTransfer(a.num * b.den + b.num * a.den, a.den * b.den)
    if kind == "sub":
        return RationalTransfer(a.num * b.den - b.num * a.den, a.den * b.den)
    if kind == "mul":
        return RationalTransfer(a.num * b.num, a.den * b.den)
    if kind == "div":
        if b.is_zero():
            raise DivisionByZeroTransfer("division by the zero transfer")
        return RationalTransfer(a.num * b.den, a.den * b.num)
    raise ValueError(f"unknown kind {kind!r}")


def feedback_connect(forward, loop=1) -> RationalTransfer:
    """forward / (1 + forward*loop) for negative feedback."""
    forward, loop = _as_tf(forward), _as_tf(loop)
    # forward = n/d, loop = m/e  ->  n e / (d e + n m)
    den = forward.den * loop.den + forward.num * loop.num
    if den.is_zero():
        raise AlgebraicLoop("1 + forward*loop is identically zero")
    return RationalTransfer(forward.num * loop.den, den)


def poles(g) -> np.ndarray:
    return _as_tf(g).poles()


def zeros(g) -> np.ndarray:
    return _as_tf(g).zeros()


def is_hurwitz(g) -> bool:
    p = poles(g)
    return bool(np.all(p.real < 0)) if len(p) else True


def s_tf() -> RationalTransfer:
    return RationalTransfer.s()
