"""
Sub-Riemannian and scaled Riemannian distances by Hamiltonian shooting.

The cometric of ``g_tau`` is the sub-Riemannian one plus ``tau^2 <p, T>^2``, so
both distances share one Hamiltonian with a ``tau2`` switch (``tau2 = 0`` is
the sub-Riemannian case). Geodesics are parametrised on ``[0, 1]`` so the
length equals ``sqrt(2 H)``.

Boundary problems are left-translated to the origin and dilated to unit
homogeneous size before shooting; ``d_tau(D a, D b) = lam d_{tau/lam}(a, b)``
for ``D`` the dilation by ``lam``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import brentq

from .model_space import ModelSpace, dimension_of, homogeneous_norm

__all__ = [
    "MetricSpec",
    "SR",
    "GeodesicResult",
    "ShootingOptions",
    "IntegrationError",
    "hamiltonian",
    "integrate",
    "distance",
    "closed_form_distance",
    "gauge_distance",
]


class IntegrationError(FloatingPointError):
    """Raised when the geodesic flow produces a non-finite state."""


@dataclass(frozen=True)
class MetricSpec:
    """``tau=None`` is the sub-Riemannian metric, otherwise ``g_tau``."""

    tau: float | None = None

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError("Riemannian scale tau must be positive")

    @property
    def is_subriemannian(self) -> bool:
        return self.tau is None

    @property
    def tau2(self) -> float:
        return 0.0 if self.tau is None else float(self.tau) ** 2

    def rescaled(self, lam: float) -> "MetricSpec":
        """Metric seen after undoing a dilation by ``lam``."""
        return self if self.tau is None else MetricSpec(self.tau / lam)

    def label(self) -> str:
        return "sr" if self.tau is None else f"tau={self.tau:g}"


SR = MetricSpec()


@dataclass(frozen=True)
class ShootingOptions:
    starts: int = 32
    steps: int = 512
    tol: float = 1e-9
    max_iter: int = 60
    drift_tol: float = 1e-8
    pz_min: float = 1e-2
    seed: int = 0


@dataclass
class GeodesicResult:
    length: float
    initial_covector: np.ndarray
    endpoint_error: float
    restarts_used: int
    converged: bool
    tol: float = 1e-9
    candidates: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.converged and not self.endpoint_error <= self.tol:
            raise ValueError("converged result must satisfy the endpoint tolerance")


# ---------------------------------------------------------------- flow kernels

@numba.njit(cache=True)
def _rhs(s, n, tau2, out):
    pz = s[4 * n + 1]
    dz = 0.0
    for i in range(n):
        x = s[i]
        y = s[n + i]
        hx = s[2 * n + 1 + i] - 0.5 * y * pz
        hy = s[3 * n + 1 + i] + 0.5 * x * pz
        out[i] = hx
        out[n + i] = hy
        dz += 0.5 * (x * hy - y * hx)
        out[2 * n + 1 + i] = -0.5 * hy * pz
        out[3 * n + 1 + i] = 0.5 * hx * pz
    out[2 * n] = dz + tau2 * pz
    out[4 * n + 1] = 0.0


@numba.njit(cache=True)
def _energy(s, n, tau2):
    pz = s[4 * n + 1]
    e = 0.0
    for i in range(n):
        hx = s[2 * n + 1 + i] - 0.5 * s[n + i] * pz
        hy = s[3 * n + 1 + i] + 0.5 * s[i] * pz
        e += hx * hx + hy * hy
    return 0.5 * (e + tau2 * pz * pz)


@numba.njit(cache=True)
def _rk4_batch(states, n, tau2, time, steps):
    """Integrate each row of ``states`` in place; returns the energy drift per row."""
    m, d = states.shape
    dt = time / steps
    drift = np.empty(m)
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    for r in range(m):
        s = states[r]
        e0 = _energy(s, n, tau2)
        for _ in range(steps):
            _rhs(s, n, tau2, k1)
            for j in range(d):
                tmp[j] = s[j] + 0.5 * dt * k1[j]
            _rhs(tmp, n, tau2, k2)
            for j in range(d):
                tmp[j] = s[j] + 0.5 * dt * k2[j]
            _rhs(tmp, n, tau2, k3)
            for j in range(d):
                tmp[j] = s[j] + dt * k3[j]
            _rhs(tmp, n, tau2, k4)
            for j in range(d):
                s[j] += dt * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0
        drift[r] = abs(_energy(s, n, tau2) - e0)
    return drift


def hamiltonian(spec: MetricSpec, p, pv) -> float:
    """``H = 1/2 sum <pv, X_i>^2 + <pv, Y_i>^2 + tau^2/2 <pv, T>^2``."""
    p = np.asarray(p, dtype=float)
    pv = np.asarray(pv, dtype=float)
    n = dimension_of(p)
    s = np.concatenate([p, pv])
    return float(_energy(s, n, spec.tau2))


def integrate(spec: MetricSpec, p0, pv0, time: float = 1.0, steps: int = 512):
    """Classical RK4 integration of Hamilton's equations.

    Returns
    -------
    points, covectors : ndarray, shape (steps + 1, 2n + 1)
    """
    if steps < 16:
        raise ValueError("integrate needs at least 16 steps")
    p0 = np.asarray(p0, dtype=float)
    n = dimension_of(p0)
    state = np.concatenate([p0, np.asarray(pv0, dtype=float)])[None, :].copy()
    path = np.empty((steps + 1, state.shape[1]))
    path[0] = state[0]
    dt = time / steps
    for k in range(steps):
        _rk4_batch(state, n, spec.tau2, dt, 1)
        if not np.all(np.isfinite(state)):
            raise IntegrationError(f"non-finite state at step {k + 1} (t={dt * (k + 1):g})")
        path[k + 1] = state[0]
    d = 2 * n + 1
    return path[:, :d], path[:, d:]


# ------------------------------------------------------------- closed form H^1

def _segment_ratio(psi):
    """Height over squared chord, ``(2psi - sin 2psi) / (8 sin^2 psi)``, for a
    circular arc of half-turn ``psi`` in [0, pi)."""
    psi = np.asarray(psi, dtype=float)
    u = 2.0 * psi
    small = u < 1e-2
    num = np.where(small, u ** 3 / 6.0 - u ** 5 / 120.0 + u ** 7 / 5040.0, u - np.sin(u))
    s = np.sin(psi)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / (8.0 * s * s)
    return np.where(psi == 0, 0.0, out)


def _psi_over_sin(psi):
    psi = np.asarray(psi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = psi / np.sin(psi)
    return np.where(psi == 0, 1.0, out)


def gauge_distance(r, z, iterations: int = 200):
    """Vectorised sub-Riemannian distance from the origin to ``(x, z)`` with ``|x| = r``.

    The minimiser from the origin is a circular arc of half-turn ``psi`` in
    ``[0, pi]``; ``psi`` solves ``|z| / r^2 = _segment_ratio(psi)`` (bisection).
    The formula depends only on ``|x|`` and holds for every n.
    """
    r = np.abs(np.asarray(r, dtype=float))
    z = np.abs(np.asarray(z, dtype=float))
    r, z = np.broadcast_arrays(r, z)
    out = np.empty(r.shape)
    vert = r == 0
    out[vert] = 2.0 * np.sqrt(np.pi * z[vert])
    rr = r[~vert]
    ratio = z[~vert] / (rr * rr)
    lo = np.zeros_like(rr)
    hi = np.full_like(rr, np.pi)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        above = _segment_ratio(mid) > ratio
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(hi, 1e-300)):
            break
    out[~vert] = rr * _psi_over_sin(0.5 * (lo + hi))
    return out


def closed_form_distance(a, b, xtol: float = 1e-12) -> float:
    """Sub-Riemannian distance between two points of H^1 (any n is accepted).

    Reduces to ``d(0, a^{-1} b)`` and solves the arc relation with a bracketed
    root find.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    G = ModelSpace(dimension_of(a))
    q = G.multiply(G.inverse(a), b)
    r = float(np.linalg.norm(q[:-1]))
    z = abs(float(q[-1]))
    if r == 0.0:
        return 2.0 * math.sqrt(math.pi * z)
    if z == 0.0:
        return r
    ratio = z / (r * r)
    # segment ratio ~ pi / (4 (pi - psi)^2) near pi; bracket just below the pole
    gap = min(0.5, 0.25 * math.sqrt(math.pi / ratio))
    f = lambda psi: float(_segment_ratio(psi)) - ratio
    lo, hi = 0.0, math.pi - gap
    while f(hi) < 0:
        gap *= 0.25
        hi = math.pi - gap
        if gap < 1e-300:
            raise RuntimeError("closed-form root bracket failed")
    psi = brentq(f, lo, hi, xtol=xtol * 1e-3, rtol=4 * np.finfo(float).eps, maxiter=500)
    return r * float(_psi_over_sin(psi))


# --------------------------------------------------------------------- shooting

def _rotate(v, angle, n):
    """Rotate each (x_i, y_i) plane of ``v`` counter-clockwise by ``angle``."""
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty_like(v)
    out[..., :n] = c * v[..., :n] - s * v[..., n:]
    out[..., n:] = s * v[..., :n] + c * v[..., n:]
    return out


def _aim(v, pz, n):
    """Initial horizontal momentum whose time-1 chord is ``v`` when the frame
    momentum rotates at rate ``pz``."""
    half = 0.5 * pz
    gain = 1.0 if abs(half) < 1e-12 else half / math.sin(half)
    return gain * _rotate(v, -half, n)


def _starts(q, tau2, opts: ShootingOptions, n):
    v = q[:-1]
    zq = q[-1]
    vnorm = np.linalg.norm(v)
    special = []
    sign = 1.0 if zq >= 0 else -1.0
    if tau2 == 0.0:
        special.append(2.0 * math.pi * sign)
    else:
        special.append(zq / tau2)
        special.append(2.0 * math.pi * sign)
    k = max(1, (opts.starts - 1 - len(special)) // 2)
    mags = np.geomspace(opts.pz_min, 2.0 * math.pi * (1 - 1e-3), k)
    grid = np.concatenate([[0.0], mags, -mags])
    out = []
    e1 = np.zeros(2 * n)
    e1[0] = 1.0
    for pz in list(grid) + special:
        if vnorm > 1e-10:
            h = _aim(v, pz, n)
            if abs(abs(pz) - 2 * math.pi) < 1e-9 and tau2 == 0.0:
                h = math.sqrt(4 * math.pi * abs(zq)) * _rotate(v / vnorm, -0.5 * pz, n)
        else:
            area = abs(zq) - tau2 * abs(pz) if abs(pz) > 0 else abs(zq)
            h = math.sqrt(4 * math.pi * max(area, 0.0)) * e1
            if tau2 > 0 and pz == special[0]:
                h = np.zeros(2 * n)
        out.append(np.concatenate([h, [pz]]))
    return np.array(out)


def _endpoints(u, n, tau2, steps):
    """Time-1 endpoints from the origin for each row of unknowns ``u = (h, pz)``."""
    m = u.shape[0]
    d = 2 * n + 1
    states = np.zeros((m, 2 * d))
    states[:, d:] = u  # at the origin the covector equals its frame components
    drift = _rk4_batch(states, n, tau2, 1.0, steps)
    return states[:, :d], drift


def _energy_of(u, tau2, n):
    return 0.5 * (np.sum(u[..., :2 * n] ** 2, axis=-1) + tau2 * u[..., -1] ** 2)


def _newton(u, q, tau2, n, steps, tol, max_iter):
    """Damped Newton on the endpoint map for every row of ``u`` at once.

    Jacobians come from central differences integrated in the same batch;
    the full step is tried first and only failing rows backtrack.
    """
    d = 2 * n + 1
    u = u.copy()
    m = u.shape[0]
    active = np.ones(m, dtype=bool)
    converged = np.zeros(m, dtype=bool)
    err = np.full(m, np.inf)
    drift = np.zeros(m)
    damping = np.array([0.5, 0.25, 0.125, 1 / 32, 1 / 128])
    for it in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ua = u[idx]
        scale = 1e-6 * np.maximum(1.0, np.abs(ua))
        batch = [ua]
        for j in range(d):
            for sgn in (1.0, -1.0):
                w = ua.copy()
                w[:, j] += sgn * scale[:, j]
                batch.append(w)
        ends, dr = _endpoints(np.concatenate(batch), n, tau2, steps)
        ends = ends.reshape(1 + 2 * d, idx.size, d)
        res = ends[0] - q
        e = np.max(np.abs(res), axis=1)
        ok = np.all(np.isfinite(ends[0]), axis=1)
        err[idx] = np.where(ok, e, np.inf)
        drift[idx] = dr[: idx.size]
        done = ok & (e <= tol)
        converged[idx[done]] = True
        active[idx[done | ~ok]] = False
        if it == max_iter:
            break
        keep = ~done & ok
        if not np.any(keep):
            continue
        idx, ua, res, cur = idx[keep], ua[keep], res[keep], e[keep]
        jac = (ends[1::2, keep] - ends[2::2, keep]) / (2.0 * scale[keep].T[:, :, None])
        delta = np.zeros_like(ua)
        for r in range(idx.size):
            J = jac[:, r, :].T  # rows: endpoint coordinates, columns: unknowns
            if np.all(np.isfinite(J)):
                delta[r] = np.linalg.lstsq(J, -res[r], rcond=1e-9)[0]
        trial = ua + delta
        tend, _ = _endpoints(trial, n, tau2, steps)
        terr = np.max(np.abs(tend - q), axis=1)
        terr = np.where(np.isfinite(terr), terr, np.inf)
        bad = np.flatnonzero(~(terr < cur))
        if bad.size:
            tries = ua[bad][None] + damping[:, None, None] * delta[bad][None]
            bend, _ = _endpoints(tries.reshape(-1, d), n, tau2, steps)
            berr = np.max(np.abs(bend.reshape(damping.size, bad.size, d) - q), axis=2)
            berr = np.where(np.isfinite(berr), berr, np.inf)
            pick = np.argmin(berr, axis=0)
            trial[bad] = tries[pick, np.arange(bad.size)]
            terr[bad] = berr[pick, np.arange(bad.size)]
        improve = terr < cur
        u[idx[improve]] = trial[improve]
        active[idx[~improve]] = False
    return u, converged, err, drift


def _shoot(q, tau2, opts: ShootingOptions, n):
    """Multi-start shooting: coarse Newton on all starts, then full-resolution
    polishing of the distinct solutions found."""
    u0 = _starts(q, tau2, opts, n)
    coarse = max(16, opts.steps // 4)
    u, conv, _, _ = _newton(u0, q, tau2, n, coarse, max(opts.tol, 1e-7), opts.max_iter)
    if np.any(conv):
        keys = np.round(u[conv], 5)
        _, first = np.unique(keys, axis=0, return_index=True)
        u = u[np.flatnonzero(conv)[np.sort(first)]]
    else:
        u = u0
    u, conv, err, drift = _newton(u, q, tau2, n, opts.steps, opts.tol, opts.max_iter)
    H = _energy_of(u, tau2, n)
    good = conv & (drift <= opts.drift_tol * np.maximum(1.0, H))
    return u, good, err, u0.shape[0]


def _pull_back(u, a, n):
    """Covector at ``a`` whose frame components are ``u = (h, pz)``."""
    h, pz = u[:-1], u[-1]
    px = h[:n] + 0.5 * a[n:2 * n] * pz
    py = h[n:] - 0.5 * a[:n] * pz
    return np.concatenate([px, py, [pz]])


def distance(spec: MetricSpec, a, b, opts: ShootingOptions | None = None) -> GeodesicResult:
    """Distance between ``a`` and ``b`` for the sub-Riemannian or ``g_tau`` metric.

    Multi-start shooting from the left-translated, unit-size problem; the
    minimum length over converged starts is returned. A failure result
    (``converged=False``, ``length=nan``) is returned when no start converges.
    """
    opts = opts or ShootingOptions()
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = dimension_of(a)
    G = ModelSpace(n)
    q = G.multiply(G.inverse(a), b)
    rho = float(homogeneous_norm(q))
    if rho == 0.0:
        return GeodesicResult(0.0, np.zeros(2 * n + 1), 0.0, 0, True, opts.tol)
    qs = G.dilate(1.0 / rho, q)
    local = spec.rescaled(rho)
    u, good, err, nstarts = _shoot(qs, local.tau2, opts, n)
    if not np.any(good):
        return GeodesicResult(float("nan"), np.full(2 * n + 1, np.nan), float(np.min(err)),
                              nstarts, False, opts.tol)
    lengths = np.sqrt(2.0 * _energy_of(u, local.tau2, n))
    cand = np.flatnonzero(good)
    # deterministic tie-break: shortest, then lexicographic covector
    order = sorted(cand, key=lambda i: (round(lengths[i], 12), tuple(np.round(u[i], 12))))
    i = order[0]
    # undo the dilation: horizontal momenta scale by rho, the rotation rate pz is invariant
    h = u[i, :-1] * rho
    pz = u[i, -1]
    covec = _pull_back(np.concatenate([h, [pz]]), a, n)
    return GeodesicResult(
        length=float(lengths[i] * rho),
        initial_covector=covec,
        endpoint_error=float(err[i]),
        restarts_used=int(nstarts),
        converged=True,
        tol=opts.tol,
        candidates=[float(lengths[j] * rho) for j in cand],
    )
