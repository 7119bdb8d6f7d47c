"""
Inequality checkers and constant fitters.

Every checker returns an :class:`InequalityReport` with ``margin = rhs - lhs``
and ``passed = margin >= -tol``; ``tol`` is derived from the error estimates
of the numbers that went into the two sides.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffops, heatkernel
from .geodesics import SR, MetricSpec, ShootingOptions, closed_form_distance, distance
from .model_space import ModelSpace

__all__ = [
    "InequalityReport",
    "HarnackParams",
    "FitResult",
    "SolverFailure",
    "check_cd",
    "check_liyau",
    "check_scaled_liyau",
    "check_harnack",
    "fit_gaussian_constants",
    "gaussian_sample",
    "check_global_distance",
    "distance_sample",
    "fit_distance_constants",
    "validate_distance_fit",
    "regime_analysis",
    "dilation_identity_check",
    "random_pairs",
    "vertical_pairs",
    "horizontal_pairs",
]

H1 = ModelSpace(1)
SOLVER_RTOL = 1e-6


class SolverFailure(RuntimeError):
    """A geodesic solve needed by a checker did not converge."""


@dataclass
class InequalityReport:
    name: str
    inputs: dict
    lhs: float
    rhs: float
    tol: float
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    parts: list = field(default_factory=list)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.margin >= -self.tol)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "inputs": _jsonable(self.inputs),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "tol": self.tol,
            "pass": self.passed,
            "provenance": self.provenance,
        }
        if self.notes:
            out["notes"] = list(self.notes)
        if self.parts:
            out["parts"] = [p.to_dict() for p in self.parts]
        return out


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


@dataclass(frozen=True)
class HarnackParams:
    """Coefficients of the scaled Li-Yau inequality ``|grad_tau ln p_u|^2 <= a(u) Delta p_u/p_u + b(u)``."""

    n: int
    tau: float
    s: float
    t: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0 < self.s < self.t:
            raise ValueError("need 0 < s < t")

    @property
    def kappa(self) -> float:
        """``1 + 3/n``."""
        return 1.0 + 3.0 / self.n

    def a(self, u):
        return (1.0 + 3.0 * self.tau ** 2 / (self.n * u)) * self.kappa

    def b(self, u):
        return self.n * self.kappa ** 2 / u * (1.0 + 3.0 * self.tau ** 2 / (self.n * u))

    def int_b_over_a(self) -> float:
        """``int_s^t b/a = (n + 3) ln(t/s)``."""
        return (self.n + 3) * math.log(self.t / self.s)

    def int_a(self) -> float:
        return self.kappa * ((self.t - self.s) + 3.0 * self.tau ** 2 / self.n * math.log(self.t / self.s))

    def int_inv_a(self) -> float:
        c = 3.0 * self.tau ** 2 / self.n
        return ((self.t - self.s) - c * math.log((self.t + c) / (self.s + c))) / self.kappa

    def exponent(self) -> float:
        """Coefficient of ``d_tau^2`` in the Harnack bound (Cauchy-Schwarz form)."""
        gap = self.t - self.s
        return self.kappa * (1.0 / (4.0 * gap) + 3.0 / self.n * self.tau ** 2 * math.log(self.t / self.s) / (4.0 * gap ** 2))

    def exponent_sharp(self) -> float:
        """Coefficient before the Cauchy-Schwarz step, ``1 / (4 int_s^t du/a)``."""
        return 1.0 / (4.0 * self.int_inv_a())


@dataclass
class FitResult:
    what: str
    constants: dict
    feasible: bool
    residuals: dict = field(default_factory=dict)
    sample: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = list(_flat_values(self.constants))
        if self.feasible and not (all(v >= 0 for v in vals) and any(v > 0 for v in vals)):
            raise ValueError("fitted constants must be non-negative, not all zero, when feasible")

    def to_dict(self) -> dict:
        return {
            "what": self.what,
            "constants": _jsonable(self.constants),
            "feasible": self.feasible,
            "residuals": _jsonable(self.residuals),
            "sample": _jsonable(self.sample),
        }


def _flat_values(d):
    for v in d.values():
        if isinstance(v, dict):
            yield from _flat_values(v)
        else:
            yield v


# ------------------------------------------------------------ curvature-dimension

def check_cd(f, p, nu: float, tol: float = 1e-10) -> InequalityReport:
    """Curvature-dimension inequality at ``p`` as ``lhs = 0 <= rhs = residual``."""
    res = diffops.cd_residual(f, p, nu)
    tol = tol + 10.0 * res.est_error
    return InequalityReport(
        name="curvature-dimension",
        inputs={"f": repr(f), "p": list(map(float, p)), "nu": float(nu)},
        lhs=0.0,
        rhs=float(res.value),
        tol=tol,
        provenance={"residual": res.scheme, "est_error": res.est_error},
    )


# -------------------------------------------------------------------- Li-Yau

def _bundle_tol(b: heatkernel.HeatKernelBundle, terms) -> float:
    eps = max(b.quad_error, 1e-15)
    return eps * (sum(abs(v) for v in terms) + 1.0 / b.t)


def check_liyau(t: float, y, n: int = 1, x=None, tol_factor: float = 10.0, bundle=None) -> InequalityReport:
    """``|grad ln p|^2 + (n/3) t (T ln p)^2 <= (1 + 3/n) Delta p/p + n (1 + 3/n)^2 / t``.

    ``Delta p / p`` is read off as ``d_t ln p`` (heat equation).
    """
    x = H1.origin if x is None else np.asarray(x, dtype=float)
    b = bundle or heatkernel.evaluate(t, x, y)
    kappa = 1.0 + 3.0 / n
    grad2 = b.grad_norm2
    vert = n / 3.0 * t * b.reeb_log ** 2
    lhs = grad2 + vert
    rhs = kappa * b.dt_log + n * kappa ** 2 / t
    tol = tol_factor * _bundle_tol(b, [2 * grad2, 2 * vert, kappa * b.dt_log, n * kappa ** 2 / t])
    return InequalityReport(
        name="li-yau",
        inputs={"t": float(t), "x": x, "y": np.asarray(y, dtype=float), "n": n},
        lhs=lhs,
        rhs=rhs,
        tol=tol,
        provenance={"heat_kernel": "quadrature", "quad_error": b.quad_error},
    )


def check_scaled_liyau(t: float, y, tau: float, n: int = 1, x=None, tol_factor: float = 10.0,
                       bundle=None) -> InequalityReport:
    """``|grad ln p|^2 + tau^2 (T ln p)^2 <= (1 + 3tau^2/(nt))[(1 + 3/n) Delta p/p + n(1 + 3/n)^2/t]``.

    Also confirms that the right side equals ``a(t) Delta p/p + b(t)``.
    """
    x = H1.origin if x is None else np.asarray(x, dtype=float)
    b = bundle or heatkernel.evaluate(t, x, y)
    kappa = 1.0 + 3.0 / n
    grad2 = b.grad_norm2
    vert = tau ** 2 * b.reeb_log ** 2
    lhs = grad2 + vert
    scale = 1.0 + 3.0 * tau ** 2 / (n * t)
    rhs = scale * kappa * b.dt_log + n * kappa ** 2 / t * scale
    hp_a = (1.0 + 3.0 * tau ** 2 / (n * t)) * kappa
    hp_b = n * kappa ** 2 / t * (1.0 + 3.0 * tau ** 2 / (n * t))
    alt = hp_a * b.dt_log + hp_b
    notes = []
    if abs(alt - rhs) > 1e-12 * max(1.0, abs(rhs), abs(hp_a * b.dt_log), hp_b):
        notes.append(f"a(t), b(t) form disagrees with the expanded form: {alt!r} vs {rhs!r}")
    tol = tol_factor * _bundle_tol(b, [2 * grad2, 2 * vert, scale * kappa * b.dt_log, hp_b])
    return InequalityReport(
        name="scaled-li-yau",
        inputs={"t": float(t), "x": x, "y": np.asarray(y, dtype=float), "tau": float(tau), "n": n},
        lhs=lhs,
        rhs=rhs,
        tol=tol,
        provenance={"heat_kernel": "quadrature", "quad_error": b.quad_error, "a_b_form": alt},
        notes=notes,
    )


# ------------------------------------------------------------------- Harnack

def check_harnack(s: float, t: float, x, y, z, tau: float, n: int = 1,
                  opts: ShootingOptions | None = None) -> InequalityReport:
    """``p(s,x,y) <= p(t,x,z) (t/s)^{n+3} exp(c d_tau(y,z)^2)`` compared in log form.

    ``lhs = ln p(s,x,y)``, ``rhs = ln p(t,x,z) + (n+3) ln(t/s) + c d_tau^2`` with
    ``c = HarnackParams.exponent()``. The distance is taken between the two
    spatial arguments being compared, ``y`` and ``z``.
    """
    hp = HarnackParams(n=n, tau=tau, s=s, t=t)
    if not tau > 0:
        raise ValueError("tau must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    bs = heatkernel.evaluate(s, x, y)
    bt = heatkernel.evaluate(t, x, z)
    g = distance(MetricSpec(tau), y, z, opts)
    if not g.converged:
        raise SolverFailure(f"d_tau({y.tolist()}, {z.tolist()}) did not converge")
    c = hp.exponent()
    lhs = bs.log_p
    rhs = bt.log_p + hp.int_b_over_a() + c * g.length ** 2
    tol = 10.0 * (max(bs.quad_error, 1e-15) + max(bt.quad_error, 1e-15)) \
        + 2.0 * c * g.length ** 2 * SOLVER_RTOL + 1e-12
    return InequalityReport(
        name="harnack",
        inputs={"s": float(s), "t": float(t), "x": x, "y": y, "z": z, "tau": float(tau), "n": n},
        lhs=lhs,
        rhs=rhs,
        tol=tol,
        provenance={
            "p_s": "quadrature", "p_t": "quadrature", "d_tau": "shooting",
            "d_tau_value": g.length, "d_tau_endpoint_error": g.endpoint_error,
            "exponent": c, "exponent_sharp": hp.exponent_sharp(),
        },
        notes=["sides compared as logarithms",
               "distance taken between the compared points y and z"],
    )


# ------------------------------------------------------------ Gaussian bounds

def gaussian_sample(times, targets, n: int = 1):
    """``(t, y, log p(t,0,y), d(0,y))`` rows for the Gaussian-bound fit."""
    rows = []
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    dists = np.array([closed_form_distance(H1.origin, q) for q in targets])
    for t in times:
        logp = np.array([heatkernel.evaluate(t, H1.origin, q).log_p for q in targets])
        for q, lp, d in zip(targets, logp, dists):
            rows.append((float(t), q, float(lp), float(d)))
    return rows


def fit_gaussian_constants(sample, eps_list=(0.1, 0.5, 1.0), n: int = 1,
                           ball_samples: int = 400_000, seed: int = 0) -> FitResult:
    """Smallest ``C >= 1`` per ``eps`` with

        C^-1 V(t)^-1 exp(-(1+3/n) d^2/((4-eps)t)) <= p(t,0,y) <= C V(t)^-1 exp(-d^2/((4+eps)t))

    on every sample row, where ``V(t)`` is the ball volume at radius ``sqrt t``.
    """
    c1, c1_err = heatkernel.unit_ball_volume(ball_samples, seed)
    kappa = 1.0 + 3.0 / n
    consts, resid = {}, {}
    t = np.array([r[0] for r in sample])
    logp = np.array([r[2] for r in sample])
    d = np.array([r[3] for r in sample])
    logv = math.log(c1) + (n + 1) * np.log(t)
    for eps in eps_list:
        if not 0 < eps <= 1:
            raise ValueError("eps must be in (0, 1]")
        lower = -kappa * d ** 2 / ((4.0 - eps) * t) - logv - logp  # log C needed by the lower bound
        upper = logp + logv + d ** 2 / ((4.0 + eps) * t)  # log C needed by the upper bound
        need = np.maximum(lower, upper)
        logc = max(0.0, float(np.max(need))) if need.size else 0.0
        key = f"{eps:g}"
        consts[key] = math.exp(logc)
        i = int(np.argmax(need)) if need.size else -1
        resid[key] = {
            "log_C": logc,
            "binding": "lower" if i >= 0 and lower[i] >= upper[i] else "upper",
            "binding_row": {"t": float(t[i]), "y": sample[i][1].tolist()} if i >= 0 else None,
            "max_lower_log": float(np.max(lower)) if need.size else None,
            "max_upper_log": float(np.max(upper)) if need.size else None,
        }
    # on-diagonal constant: p(t/2, 0, 0) >= C_0 / V(t)
    times = sorted(set(map(float, t)))
    c0 = min(math.exp(heatkernel.evaluate(u / 2.0, H1.origin, H1.origin).log_p
                      + math.log(c1) + (n + 1) * math.log(u)) for u in times) if times else float("nan")
    feasible = all(np.isfinite(v) for v in consts.values())
    return FitResult(
        what="gaussian",
        constants={"C": consts, "C0": c0},
        feasible=feasible,
        residuals=resid,
        sample={"rows": len(sample), "times": sorted(set(map(float, t))), "c1": c1,
                "c1_stderr": c1_err, "ball_samples": ball_samples, "seed": seed},
    )


# ------------------------------------------------------- global distance bound

def check_global_distance(x, y, tau: float, A: float, B: float, opts=None) -> InequalityReport:
    """``d_tau <= d`` and ``d <= A d_tau + B sqrt(tau) d_tau^{1/2}``; the report's
    margin is the smaller of the two, each part is attached."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = distance(SR, x, y, opts)
    dt = distance(MetricSpec(tau), x, y, opts)
    if not (d.converged and dt.converged):
        raise SolverFailure("distance solve failed in check_global_distance")
    tol = SOLVER_RTOL * max(d.length, dt.length) + 1e-12
    inputs = {"x": x, "y": y, "tau": float(tau), "A": float(A), "B": float(B)}
    prov = {"d": "shooting", "d_tau": "shooting", "d_value": d.length, "d_tau_value": dt.length}
    first = InequalityReport("distance-lower", inputs, dt.length, d.length, tol, prov)
    bound = A * dt.length + B * math.sqrt(tau * dt.length)
    second = InequalityReport("distance-upper", inputs, d.length, bound, tol, prov)
    worst = min((first, second), key=lambda r: r.margin + r.tol)
    return InequalityReport("global-distance", inputs, worst.lhs, worst.rhs, tol, prov,
                            parts=[first, second])


def _pair_rows(job):
    k, a, b, taus, opts = job
    d = distance(SR, a, b, opts)
    if not d.converged:
        raise SolverFailure(f"sub-Riemannian distance failed for pair {k}")
    rows = []
    for tau in taus:
        g = distance(MetricSpec(tau), a, b, opts)
        if not g.converged:
            raise SolverFailure(f"d_tau failed for pair {k}, tau={tau}")
        rows.append((k, float(tau), d.length, g.length))
    return rows


def distance_sample(pairs, taus, opts=None, workers: int = 1):
    """Rows ``(pair index, tau, d, d_tau)`` for every pair and scale.

    With ``workers > 1`` pairs are solved in a process pool; rows keep the
    input order, so the output does not depend on the worker count.
    """
    jobs = [(k, np.asarray(a, dtype=float), np.asarray(b, dtype=float), tuple(map(float, taus)), opts)
            for k, (a, b) in enumerate(pairs)]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_pair_rows, jobs))
    else:
        chunks = [_pair_rows(j) for j in jobs]
    return [r for chunk in chunks for r in chunk]


def _pareto(a, b):
    """Indices of constraints ``A a_i + B b_i >= 1`` not implied by another one."""
    order = np.lexsort((b, a))  # increasing a, then b
    keep = []
    best_b = np.inf
    for i in order:
        if b[i] < best_b:
            keep.append(i)
            best_b = b[i]
    return np.array(keep, dtype=int)


def _lp_vertices(a, b, A_min):
    """Minimise ``A + B`` subject to ``A a_i + B b_i >= 1``, ``A >= A_min``, ``B >= 0``
    by enumerating intersections of constraint pairs (2 unknowns)."""
    m = a.size
    # boundary lines written as alpha A + beta B = gamma
    lines = [(a[i], b[i], 1.0) for i in range(m)] + [(1.0, 0.0, A_min), (0.0, 1.0, 0.0)]
    best = None
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            a1, b1, c1 = lines[i]
            a2, b2, c2 = lines[j]
            det = a1 * b2 - a2 * b1
            if abs(det) < 1e-300:
                continue
            A = (c1 * b2 - c2 * b1) / det
            B = (a1 * c2 - a2 * c1) / det
            if A < A_min * (1 - 1e-15) or B < -1e-15:
                continue
            if m and np.min(A * a + B * b) < 1.0 - 1e-12:
                continue
            val = A + B
            if best is None or val < best[0] - 1e-15:
                best = (val, max(A, A_min), max(B, 0.0))
    return best


def fit_distance_constants(rows, A_min: float = 1.0) -> FitResult:
    """Smallest ``A + B`` (with ``A >= A_min``, ``B >= 0``) such that
    ``d <= A d_tau + B sqrt(tau d_tau)`` on every row ``(k, tau, d, d_tau)``."""
    tau = np.array([r[1] for r in rows], dtype=float)
    d = np.array([r[2] for r in rows], dtype=float)
    dt = np.array([r[3] for r in rows], dtype=float)
    use = d > 0
    a = dt[use] / d[use]
    b = np.sqrt(tau[use] * dt[use]) / d[use]
    if np.any((a <= 0) & (b <= 0)):
        return FitResult("global", {"A": float("inf"), "B": float("inf")}, False,
                         {"reason": "a constraint with zero d_tau and positive d"}, {"rows": len(rows)})
    keep = _pareto(a, b)
    best = _lp_vertices(a[keep], b[keep], A_min)
    if best is None:
        return FitResult("global", {"A": float("inf"), "B": float("inf")}, False,
                         {"reason": "no feasible vertex"}, {"rows": len(rows)})
    _, A, B = best
    slack = A * a + B * b - 1.0
    binding = np.flatnonzero(slack <= 1e-9)
    return FitResult(
        what="global",
        constants={"A": float(A), "B": float(B) if B > 0 else 0.0},
        feasible=True,
        residuals={"min_slack": float(slack.min()) if slack.size else None,
                   "binding_rows": [int(np.flatnonzero(use)[i]) for i in binding],
                   "constraints": int(a.size), "pareto_constraints": int(keep.size)},
        sample={"rows": len(rows), "taus": sorted(set(map(float, tau)))},
    )


def validate_distance_fit(rows, A: float, B: float, rtol: float = SOLVER_RTOL):
    """Rows violating ``d <= A d_tau + B sqrt(tau d_tau)`` beyond the solver tolerance."""
    bad = []
    for r in rows:
        _, tau, d, dt = r
        if d > A * dt + B * math.sqrt(tau * dt) + rtol * d:
            bad.append(r)
    return bad


# --------------------------------------------------------------- scaling checks

def regime_analysis(a, b, tau: float, small=(1e-3, 1e-2), large=(1e2, 1e3), points: int = 5,
                    opts=None) -> dict:
    """Log-log slope of ``d`` against ``d_tau`` along dilations of a fixed pair,
    one least-squares slope per decade."""
    G = ModelSpace((len(a) - 1) // 2)
    out = {"tau": float(tau), "pair": [list(map(float, a)), list(map(float, b))], "decades": {}}
    for label, (lo, hi) in (("small", small), ("large", large)):
        lams = np.geomspace(lo, hi, points)
        rows = []
        for lam in lams:
            pa, pb = G.dilate(lam, a), G.dilate(lam, b)
            d = distance(SR, pa, pb, opts)
            dt = distance(MetricSpec(tau), pa, pb, opts)
            if not (d.converged and dt.converged):
                raise SolverFailure(f"regime analysis solve failed at lambda={lam:g}")
            rows.append({"lambda": float(lam), "d": d.length, "d_tau": dt.length})
        x = np.log([r["d_tau"] for r in rows])
        y = np.log([r["d"] for r in rows])
        slope = float(np.polyfit(x, y, 1)[0])
        out["decades"][label] = {"range": [lo, hi], "slope": slope, "rows": rows}
    return out


def dilation_identity_check(a, b, lam: float, tau: float, opts=None, rtol: float = 1e-6):
    """``d(D a, D b) = lam d(a, b)`` and ``d_tau(D a, D b) = lam d_{tau/lam}(a, b)``
    for the dilation ``D`` by ``lam``; two reports with ``lhs = |difference|``
    and ``rhs = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    G = ModelSpace((a.size - 1) // 2)
    da, db = G.dilate(lam, a), G.dilate(lam, b)
    reports = []
    for label, scaled, base in (
        ("sr", SR, SR),
        ("tau", MetricSpec(tau), MetricSpec(tau / lam)),
    ):
        left = distance(scaled, da, db, opts)
        right = distance(base, a, b, opts)
        if not (left.converged and right.converged):
            raise SolverFailure("dilation identity solve failed")
        diff = abs(left.length - lam * right.length)
        reports.append(InequalityReport(
            name=f"dilation-{label}",
            inputs={"a": a, "b": b, "lambda": float(lam), "tau": float(tau)},
            lhs=diff, rhs=0.0, tol=rtol * max(left.length, 1e-300),
            provenance={"scaled": left.length, "base_times_lambda": lam * right.length},
        ))
    return tuple(reports)


# ------------------------------------------------------------------ samples

def random_pairs(count: int, seed: int, box: float = 3.0):
    """``count`` pairs ``(0, q)`` with ``q`` uniform in ``[-box, box]^3``.

    Left-invariance makes the base point irrelevant, so fixing it at the
    origin loses nothing.
    """
    rng = np.random.default_rng(seed)
    q = rng.uniform(-box, box, size=(count, 3))
    return [(H1.origin, row) for row in q]


def vertical_pairs(lams=(1e-3, 1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3)):
    """Dilations of the vertical pair ``(0, (0, 0, 1))``; these carry the
    small-scale square-root behaviour that the ``B`` term has to absorb."""
    return [(H1.origin, H1.dilate(lam, np.array([0.0, 0.0, 1.0]))) for lam in lams]


def horizontal_pairs(radii=(0.1, 1.0, 10.0)):
    return [(H1.origin, np.array([r, 0.0, 0.0])) for r in radii]
