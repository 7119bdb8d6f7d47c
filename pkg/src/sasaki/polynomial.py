"""Sparse multivariate polynomials with exact rational coefficients."""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Number

import numpy as np

__all__ = ["Polynomial", "random_polynomial"]


def _frac(c):
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, np.integer)):
        return Fraction(int(c))
    return Fraction(float(c))


class Polynomial:
    """Polynomial in ``nvars`` variables stored as ``{exponents: coefficient}``.

    Coefficients are :class:`fractions.Fraction`; floats are converted
    exactly, so all arithmetic is exact.
    """

    __slots__ = ("nvars", "terms", "_hash")

    def __init__(self, nvars: int, terms=None):
        self.nvars = int(nvars)
        clean = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.nvars or min(exps, default=0) < 0:
                raise ValueError(f"bad exponent tuple {exps!r}")
            c = _frac(c)
            if c:
                clean[exps] = clean.get(exps, 0) + c
        self.terms = {e: c for e, c in clean.items() if c}
        self._hash = None

    # construction
    @classmethod
    def constant(cls, nvars, c):
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars, k):
        exps = [0] * nvars
        exps[k] = 1
        return cls(nvars, {tuple(exps): 1})

    @classmethod
    def coordinates(cls, n):
        """The coordinate functions ``x_1..x_n, y_1..y_n, z`` of H^{2n+1}."""
        return [cls.variable(2 * n + 1, k) for k in range(2 * n + 1)]

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError("polynomials live in different numbers of variables")
            return other
        if isinstance(other, (Number, Fraction)):
            return Polynomial.constant(self.nvars, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Polynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

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
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.constant(self.nvars, 1)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self.terms.items())))
        return self._hash

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for e, c in sorted(self.terms.items(), reverse=True):
            mono = "*".join(f"v{k}^{p}" if p > 1 else f"v{k}" for k, p in enumerate(e) if p)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(parts) + ")"

    # calculus
    def diff(self, k: int) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            if e[k]:
                ee = list(e)
                ee[k] -= 1
                out[tuple(ee)] = c * e[k]
        return Polynomial(self.nvars, out)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    # evaluation
    def __call__(self, p):
        """Float evaluation at ``p`` (array-like of length ``nvars``)."""
        p = np.asarray(p, dtype=float)
        total = 0.0
        for e, c in self.terms.items():
            total += float(c) * math.prod(p[k] ** a for k, a in enumerate(e) if a)
        return total

    def exact(self, p) -> Fraction:
        """Exact value at a point with rational (or float, taken exactly) coordinates."""
        if not self.terms:
            return Fraction(0)
        coords = [_frac(v) for v in p]
        den = math.lcm(*(c.denominator for c in coords))
        nums = [c.numerator * (den // c.denominator) for c in coords]
        cden = math.lcm(*(c.denominator for c in self.terms.values()))
        deg = self.degree
        powers = [[1] for _ in nums]
        for k, v in enumerate(nums):
            for _ in range(deg):
                powers[k].append(powers[k][-1] * v)
        dpow = [1]
        for _ in range(deg):
            dpow.append(dpow[-1] * den)
        total = 0
        for e, c in self.terms.items():
            term = c.numerator * (cden // c.denominator) * dpow[deg - sum(e)]
            for k, a in enumerate(e):
                if a:
                    term *= powers[k][a]
            total += term
        return Fraction(total, cden * dpow[deg])


def random_polynomial(n: int, degree: int, rng, terms: int = 12, coeff: int = 5) -> Polynomial:
    """Random polynomial on H^{2n+1} with small integer coefficients and degree at most ``degree``."""
    nvars = 2 * n + 1
    out = {}
    for _ in range(terms):
        d = int(rng.integers(1, degree + 1))
        cuts = np.sort(rng.integers(0, d + 1, size=nvars - 1))
        exps = np.diff(np.concatenate([[0], cuts, [d]]))
        c = int(rng.integers(-coeff, coeff + 1)) or 1
        out[tuple(int(v) for v in exps)] = out.get(tuple(int(v) for v in exps), 0) + c
    return Polynomial(nvars, out)
