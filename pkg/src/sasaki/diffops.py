"""
Horizontal calculus on H^{2n+1}: gradient, sub-Laplacian, Reeb derivative,
the iterated carre du champ forms and the curvature-dimension residual.

Every operator accepts either a :class:`~sasaki.polynomial.Polynomial`
(exact path, rational arithmetic) or a :class:`CallableField` (central finite
differences along the flows of the left-invariant frame, with a Richardson
error estimate).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from .model_space import ModelSpace, dimension_of
from .polynomial import Polynomial

__all__ = [
    "CallableField",
    "OperatorResult",
    "StepUnderflow",
    "X",
    "Y",
    "T",
    "horizontal_gradient",
    "sublaplacian",
    "reeb_derivative",
    "gamma2",
    "gamma2_T",
    "killing_identity_residual",
    "cd_residual",
    "curvature_forms",
    "frame_commutator_fd",
    "fd_order",
]

EPS = np.finfo(float).eps


class StepUnderflow(ArithmeticError):
    """Finite-difference step too small to resolve the point's coordinates."""


@dataclass(frozen=True)
class CallableField:
    """Black-box scalar field ``f(p)`` on H^{2n+1}.

    ``h`` is the base step; ``None`` picks ``eps^{1/(k+2)} max(1, |p|_inf)``
    for an operator of total order ``k``.
    """

    func: Callable
    n: int = 1
    h: float | None = None

    def __call__(self, p):
        return float(self.func(np.asarray(p, dtype=float)))


@dataclass(frozen=True)
class OperatorResult:
    value: float | np.ndarray
    scheme: str  # "exact" or "finite-difference"
    est_error: float = 0.0
    exact_value: object = None  # Fraction (or tuple of them) on the exact path

    def __post_init__(self):
        if not self.est_error >= 0:
            raise ValueError("error estimate must be non-negative")

    def __float__(self):
        return float(self.value)


# ------------------------------------------------------------- exact frame

def X(f: Polynomial, i: int, n: int) -> Polynomial:
    """``X_i f = d f/d x_i - (y_i / 2) d f/d z``."""
    y = Polynomial.variable(2 * n + 1, n + i)
    return f.diff(i) - y * f.diff(2 * n) * Fraction(1, 2)


def Y(f: Polynomial, i: int, n: int) -> Polynomial:
    """``Y_i f = d f/d y_i + (x_i / 2) d f/d z``."""
    x = Polynomial.variable(2 * n + 1, i)
    return f.diff(n + i) + x * f.diff(2 * n) * Fraction(1, 2)


def T(f: Polynomial, n: int) -> Polynomial:
    return f.diff(2 * n)


def _grad(f, n):
    return [X(f, i, n) for i in range(n)] + [Y(f, i, n) for i in range(n)]


def _lap(f, n):
    out = Polynomial(2 * n + 1)
    for i in range(n):
        out = out + X(X(f, i, n), i, n) + Y(Y(f, i, n), i, n)
    return out


def _dot(us, vs):
    out = Polynomial(us[0].nvars)
    for u, v in zip(us, vs):
        out = out + u * v
    return out


@lru_cache(maxsize=256)
def curvature_forms(f: Polynomial) -> dict:
    """Polynomials entering the curvature-dimension inequality for ``f``."""
    n = (f.nvars - 1) // 2
    g = _grad(f, n)
    lap = _lap(f, n)
    tf = T(f, n)
    grad2 = _dot(g, g)
    gamma2 = _lap(grad2, n) * Fraction(1, 2) - _dot(g, _grad(lap, n))
    gamma2t = _lap(tf * tf, n) * Fraction(1, 2) - tf * T(lap, n)
    killing = _dot(g, _grad(tf * tf, n)) - tf * T(grad2, n)
    return {
        "grad": g,
        "grad2": grad2,
        "lap": lap,
        "T": tf,
        "gamma2": gamma2,
        "gamma2_T": gamma2t,
        "killing": killing,
    }


# --------------------------------------------------------- finite differences

def _flow(p, k, s, n):
    """Point reached from ``p`` along the flow of frame field ``k`` for time ``s``
    (``k < 2n`` horizontal, ``k == 2n`` the Reeb field)."""
    e = np.zeros(2 * n + 1)
    e[k] = s
    return ModelSpace(n).multiply(p, e)


def _step(field: CallableField, p, order):
    h = field.h if field.h is not None else EPS ** (1.0 / (order + 2))
    h = h * max(1.0, float(np.max(np.abs(p))))
    if h <= 64 * EPS * max(1.0, float(np.max(np.abs(p)))):
        raise StepUnderflow(f"finite-difference step {h:g} underflows at {p}")
    return h


def _d1(f, k, n, h):
    return lambda p: (f(_flow(p, k, h, n)) - f(_flow(p, k, -h, n))) / (2 * h)


def _d2(f, k, n, h):
    return lambda p: (f(_flow(p, k, h, n)) - 2 * f(p) + f(_flow(p, k, -h, n))) / (h * h)


def _fd_grad(f, n, h):
    return [_d1(f, k, n, h) for k in range(2 * n)]


def _fd_lap(f, n, h):
    parts = [_d2(f, k, n, h) for k in range(2 * n)]
    return lambda p: sum(g(p) for g in parts)


def _fd_sq(g):
    return lambda p: g(p) ** 2


def _fd_forms(f, n, h):
    grad = _fd_grad(f, n, h)
    lap = _fd_lap(f, n, h)
    tf = _d1(f, 2 * n, n, h)
    grad2 = lambda p: sum(g(p) ** 2 for g in grad)
    glap = _fd_grad(lap, n, h)
    g2 = lambda p: 0.5 * _fd_lap(grad2, n, h)(p) - sum(a(p) * b(p) for a, b in zip(grad, glap))
    tlap = _d1(lap, 2 * n, n, h)
    g2t = lambda p: 0.5 * _fd_lap(_fd_sq(tf), n, h)(p) - tf(p) * tlap(p)
    gt2 = _fd_grad(_fd_sq(tf), n, h)
    tgrad2 = _d1(grad2, 2 * n, n, h)
    killing = lambda p: sum(a(p) * b(p) for a, b in zip(grad, gt2)) - tf(p) * tgrad2(p)
    return {
        "grad": lambda p: np.array([g(p) for g in grad]),
        "grad2": grad2,
        "lap": lap,
        "T": tf,
        "gamma2": g2,
        "gamma2_T": g2t,
        "killing": killing,
    }


_ORDER = {"grad": 1, "grad2": 1, "T": 1, "lap": 2, "gamma2": 3, "gamma2_T": 3, "killing": 2}


def _fd_eval(field: CallableField, key, p):
    """Central-difference value at steps h and 2h; Richardson error estimate."""
    p = np.asarray(p, dtype=float)
    h = _step(field, p, _ORDER[key])
    fine = _fd_forms(field, field.n, h)[key](p)
    coarse = _fd_forms(field, field.n, 2 * h)[key](p)
    err = float(np.max(np.abs(np.asarray(fine) - np.asarray(coarse)))) / 3.0
    return OperatorResult(fine, "finite-difference", err)


def _exact_eval(f: Polynomial, key, p):
    if len(p) != f.nvars:
        raise ValueError(f"point has {len(p)} coordinates, field has {f.nvars} variables")
    form = curvature_forms(f)[key]
    if isinstance(form, list):
        vals = tuple(g.exact(p) for g in form)
        return OperatorResult(np.array([float(v) for v in vals]), "exact", 0.0, vals)
    v = form.exact(p)
    return OperatorResult(float(v), "exact", 0.0, v)


def _apply(f, key, p):
    if isinstance(f, Polynomial):
        return _exact_eval(f, key, p)
    if isinstance(f, CallableField):
        return _fd_eval(f, key, p)
    raise TypeError("scalar field must be a Polynomial or a CallableField")


def horizontal_gradient(f, p) -> OperatorResult:
    """``(X_1 f, .., X_n f, Y_1 f, .., Y_n f)`` at ``p``."""
    return _apply(f, "grad", p)


def sublaplacian(f, p) -> OperatorResult:
    return _apply(f, "lap", p)


def reeb_derivative(f, p) -> OperatorResult:
    return _apply(f, "T", p)


def gamma2(f, p) -> OperatorResult:
    """``1/2 Delta |grad f|^2 - <grad f, grad Delta f>``."""
    return _apply(f, "gamma2", p)


def gamma2_T(f, p) -> OperatorResult:
    """``1/2 Delta (Tf)^2 - (Tf)(T Delta f)``."""
    return _apply(f, "gamma2_T", p)


def killing_identity_residual(f, p) -> OperatorResult:
    """``<grad f, grad (Tf)^2> - (Tf) T |grad f|^2``; zero since T is a symmetry."""
    return _apply(f, "killing", p)


def cd_residual(f, p, nu, n: int | None = None) -> OperatorResult:
    """Curvature-dimension residual

        Gamma2(f) + nu Gamma2^T(f) - [(Delta f)^2 / 2n - |grad f|^2 / nu + n (Tf)^2 / 2],

    non-negative on the Heisenberg group for every ``nu > 0``.
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    if isinstance(f, Polynomial):
        n = (f.nvars - 1) // 2
        forms = curvature_forms(f)
        v = {k: forms[k].exact(p) for k in ("gamma2", "gamma2_T", "lap", "grad2", "T")}
        nu_q = Fraction(nu)
        res = (v["gamma2"] + nu_q * v["gamma2_T"] - v["lap"] ** 2 / (2 * n)
               + v["grad2"] / nu_q - Fraction(n, 2) * v["T"] ** 2)
        return OperatorResult(float(res), "exact", 0.0, res)
    n = f.n if n is None else n
    parts = {k: _fd_eval(f, k, p) for k in ("gamma2", "gamma2_T", "lap", "grad2", "T")}
    val = {k: float(r.value) for k, r in parts.items()}
    res = (val["gamma2"] + nu * val["gamma2_T"] - val["lap"] ** 2 / (2 * n)
           + val["grad2"] / nu - 0.5 * n * val["T"] ** 2)
    err = (parts["gamma2"].est_error + nu * parts["gamma2_T"].est_error
           + abs(val["lap"]) * parts["lap"].est_error / n + parts["grad2"].est_error / nu
           + n * abs(val["T"]) * parts["T"].est_error)
    return OperatorResult(res, "finite-difference", err)


# --------------------------------------------------------- frame check by FD

def frame_commutator_fd(func, p, i: int, h: float, n: int | None = None) -> float:
    """``(X_i Y_i - Y_i X_i) func`` at ``p`` from nested central differences along
    the coordinate expressions of the frame (no group law involved)."""
    p = np.asarray(p, dtype=float)
    n = dimension_of(p) if n is None else n
    G = ModelSpace(n)

    def directional(g, k):
        def out(q):
            vec = G.frame_at(q)[0][k]
            return (g(q + h * vec) - g(q - h * vec)) / (2 * h)
        return out

    xi, yi = i, n + i
    return directional(directional(func, yi), xi)(p) - directional(directional(func, xi), yi)(p)


def fd_order(errors, factor: float = 2.0) -> float:
    """Observed convergence order from errors at steps shrinking by ``factor``."""
    errors = np.asarray(errors, dtype=float)
    rates = np.log(errors[:-1] / errors[1:]) / math.log(factor)
    return float(np.min(rates))
