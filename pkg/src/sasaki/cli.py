"""
Command-line front end.

    sasaki distance --sr 0,0,0 0,0,1
    sasaki verify harnack --count 10 --seed 7
    sasaki fit global
    sasaki sweep heat --grid 0.1:10:20

Settings are resolved as defaults < ``SASAKI_SEED`` < ``--config`` file <
command-line flags. Reports are JSON (sorted keys, ``schema_version``; the
``_timestamp`` entry sits alone on the second line so files can be compared
after dropping it) plus a CSV summary.

Exit codes: 0 all checks pass, 1 an inequality or fit failed, 2 usage
error, 3 a numerical solve did not converge.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import heatkernel, verify
from .geodesics import SR, IntegrationError, MetricSpec, ShootingOptions, distance
from .model_space import ModelSpace
from .polynomial import Polynomial, random_polynomial

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
HARNACK_TAUS = (0.1, 1.0, 10.0)
NUMERIC_ERRORS = (verify.SolverFailure, heatkernel.QuadratureError, IntegrationError, FloatingPointError)


class UsageError(ValueError):
    pass


# ------------------------------------------------------------------ config

@dataclasses.dataclass
class RunConfig:
    """Every tunable of a run; echoed into report headers."""

    n: int = 1
    seed: int = 0
    count: int | None = None  # suite-specific default when None
    heldout: int = 50
    workers: int = 1
    out: str = "reports"
    gate: bool = True
    mc_paths: int = 100_000
    quad_rtol: float = 1e-12
    solver_tol: float = 1e-9
    tol_factor: float = 10.0
    t_min: float = 0.05
    t_max: float = 5.0
    t_points: int = 10
    taus: tuple | None = None  # suite-specific default when None
    eps: tuple = (0.1, 0.5, 1.0)
    regime_tau: float = 1.0

    def validate(self):
        for name in ("quad_rtol", "solver_tol", "tol_factor", "t_min", "t_max", "regime_tau"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.n < 1:
            raise UsageError("n must be >= 1")
        if self.workers < 1 or self.t_points < 0 or self.heldout < 0:
            raise UsageError("workers must be >= 1, counts >= 0")
        if self.count is not None and self.count < 0:
            raise UsageError("count must be >= 0")
        if any(not t > 0 for t in (self.taus or ())):
            raise UsageError("tau values must be positive")
        if any(not 0 < e <= 1 for e in self.eps):
            raise UsageError("eps values must lie in (0, 1]")
        return self

    def shooting(self) -> ShootingOptions:
        return ShootingOptions(tol=self.solver_tol, seed=self.seed)

    def tau_list(self, default):
        return tuple(default) if self.taus is None else tuple(self.taus)

    def t_grid(self):
        return _log_grid(self.t_min, self.t_max, self.t_points)

    def to_dict(self):
        # worker count and output directory are left out: neither may change the content
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self).items()
                if k not in ("workers", "out")}


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"bad boolean {text!r}")


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


_KEYS = {
    "n": int, "seed": int, "count": _opt_int, "heldout": int, "workers": int, "out": str,
    "gate": _bool, "mc_paths": int, "quad_rtol": float, "solver_tol": float,
    "tol_factor": float, "t_min": float, "t_max": float, "t_points": int,
    "taus": _floats, "eps": _floats, "regime_tau": float,
}


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _KEYS[key](val)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return values


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    env = os.environ.get("SASAKI_SEED")
    if env:
        try:
            cfg.seed = int(env)
        except ValueError as exc:
            raise UsageError(f"SASAKI_SEED must be an integer, got {env!r}") from exc
    if getattr(args, "config", None):
        for k, v in read_config(args.config).items():
            setattr(cfg, k, v)
    for key in _KEYS:
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    return cfg.validate()


# ------------------------------------------------------------------- parsing

def parse_point(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"malformed point {text!r}") from exc
    if len(vals) < 3 or len(vals) % 2 == 0 or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"point {text!r} needs 2n+1 finite coordinates")
    return np.array(vals)


def parse_grid(text: str):
    """``lo:hi:count`` (geometric) or a comma list; empty text is an empty grid."""
    text = (text or "").strip()
    if not text:
        return np.array([])
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid {text!r} must be lo:hi:count")
        try:
            lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise UsageError(f"bad grid {text!r}") from exc
        if not (lo > 0 and hi > 0 and num >= 0):
            raise UsageError(f"grid {text!r} needs positive bounds")
        return _log_grid(lo, hi, num)
    return np.array(_floats(text))


def _log_grid(lo, hi, num):
    if num == 0:
        return np.array([])
    if num == 1:
        return np.array([float(lo)])
    return np.geomspace(lo, hi, num)


# ----------------------------------------------------------------- reports

def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serialisable: {type(v)}")


def render_report(body: dict, timestamp: str | None = None) -> str:
    doc = dict(body)
    doc["schema_version"] = SCHEMA_VERSION
    doc["_timestamp"] = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return json.dumps(doc, sort_keys=True, indent=2, default=_json_default, allow_nan=True) + "\n"


def strip_timestamp(text: str) -> str:
    return "".join(line for line in text.splitlines(keepends=True) if '"_timestamp"' not in line)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(v) for v in r])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(repr(float(x)) for x in v)
    return v


def _write(cfg: RunConfig, stem: str, report: str | None, table: str | None):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if report is not None:
        p = out / f"{stem}.json"
        p.write_text(report, encoding="utf-8")
        paths.append(p)
    if table is not None:
        p = out / f"{stem}.csv"
        p.write_text(table, encoding="utf-8")
        paths.append(p)
    return paths


# ------------------------------------------------------------------ distance

def cmd_distance(args) -> int:
    cfg = resolve_config(args)
    a, b = parse_point(args.a), parse_point(args.b)
    if a.size != b.size:
        raise UsageError("points live in different dimensions")
    if args.tau is not None and not args.tau > 0:
        raise UsageError("--tau must be positive")
    spec = SR if args.tau is None else MetricSpec(args.tau)
    res = distance(spec, a, b, cfg.shooting())
    record = {
        "metric": spec.label(),
        "a": a.tolist(),
        "b": b.tolist(),
        "length": res.length,
        "initial_covector": np.asarray(res.initial_covector).tolist(),
        "endpoint_error": res.endpoint_error,
        "converged": res.converged,
        "restarts_used": res.restarts_used,
    }
    print(f"length {res.length!r}")
    print("initial_covector " + " ".join(repr(float(v)) for v in record["initial_covector"]))
    print(f"endpoint_error {res.endpoint_error!r}")
    if args.json:
        Path(args.json).write_text(render_report({"command": "distance", "result": record}), encoding="utf-8")
    return EXIT_OK if res.converged else EXIT_NUMERIC


# -------------------------------------------------------------------- verify

_LIYAU_TARGETS = (
    (0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (2.0, 0.0, 0.0), (0.0, 0.0, 0.2), (0.0, 0.0, 1.5),
    (0.0, 0.0, -0.5), (1.0, 0.0, 0.2), (0.0, -1.0, 1.0), (0.7, 0.7, -0.3), (-1.5, 0.5, 2.0),
)


def _instance(job):
    """Run one verification instance; numerical failures are recorded, not raised."""
    kind, kw = job
    try:
        if kind == "cd":
            f = Polynomial(kw["nvars"], {tuple(e): Fraction(c) for e, c in kw["terms"]})
            reps = [verify.check_cd(f, kw["p"], nu) for nu in kw["nus"]]
        elif kind == "liyau":
            b = heatkernel.evaluate(kw["t"], heatkernel.H1.origin, kw["y"], epsrel=kw["quad_rtol"])
            reps = [verify.check_liyau(kw["t"], kw["y"], tol_factor=kw["tol_factor"], bundle=b)]
            reps += [verify.check_scaled_liyau(kw["t"], kw["y"], tau, tol_factor=kw["tol_factor"], bundle=b)
                     for tau in kw["taus"]]
        elif kind == "harnack":
            reps = [verify.check_harnack(kw["s"], kw["t"], kw["x"], kw["y"], kw["z"], kw["tau"],
                                         opts=kw["opts"])]
        else:
            raise ValueError(kind)
        return {"reports": [r.to_dict() for r in reps]}
    except NUMERIC_ERRORS as exc:
        return {"error": f"{type(exc).__name__}: {exc}", "job": {"kind": kind, **_plain(kw)}}


def _plain(kw):
    out = {}
    for k, v in kw.items():
        if isinstance(v, ShootingOptions):
            v = dataclasses.asdict(v)
        out[k] = v
    return out


def _run_jobs(jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_instance, jobs))
    return [_instance(j) for j in jobs]


def _cd_jobs(cfg):
    rng = np.random.default_rng(cfg.seed)
    count = 20 if cfg.count is None else cfg.count
    n = cfg.n
    nvars = 2 * n + 1
    nus = (0.1, 1.0, 10.0)
    jobs = []
    z = Polynomial.variable(nvars, 2 * n)
    jobs.append(("cd", {"nvars": nvars, "terms": _terms(z), "p": [0.0] * nvars, "nus": nus}))
    for _ in range(count):
        f = random_polynomial(n, 5, rng)
        for p in rng.uniform(-2.0, 2.0, size=(5, nvars)):
            jobs.append(("cd", {"nvars": nvars, "terms": _terms(f), "p": p.tolist(), "nus": nus}))
    return jobs


def _terms(f):
    return [[list(e), str(c)] for e, c in sorted(f.terms.items())]


def _liyau_jobs(cfg):
    return [("liyau", {"t": float(t), "y": list(y), "taus": list(cfg.tau_list(HARNACK_TAUS)),
                       "tol_factor": cfg.tol_factor, "quad_rtol": cfg.quad_rtol})
            for t in cfg.t_grid() for y in _LIYAU_TARGETS]


def _harnack_jobs(cfg):
    rng = np.random.default_rng(cfg.seed)
    count = 20 if cfg.count is None else cfg.count
    opts = cfg.shooting()
    jobs = [("harnack", {"s": 1.0, "t": 2.0, "x": [0.0, 0.0, 0.0], "y": [0.5, 0.0, 0.1],
                         "z": [0.5, 0.0, 0.1], "tau": 1.0, "opts": opts})]
    for _ in range(count):
        s = float(rng.uniform(0.1, 1.0))
        t = float(s * rng.uniform(1.25, 4.0))
        x, y, z = (rng.uniform(-1.0, 1.0, size=3).tolist() for _ in range(3))
        tau = float(rng.choice(cfg.tau_list(HARNACK_TAUS)))
        jobs.append(("harnack", {"s": s, "t": t, "x": x, "y": y, "z": z, "tau": tau, "opts": opts}))
    return jobs


def _instance_suite(cfg, kind, jobs):
    results = _run_jobs(jobs, cfg.workers)
    instances, rows = [], []
    failed = errors = 0
    for k, r in enumerate(results):
        if "error" in r:
            errors += 1
            instances.append({"index": k, "error": r["error"], "job": r["job"]})
            rows.append([k, kind, "", "", "", "", "error"])
            continue
        for rep in r["reports"]:
            failed += not rep["pass"]
            instances.append({"index": k, **rep})
            rows.append([k, rep["name"], rep["lhs"], rep["rhs"], rep["margin"], rep["tol"],
                         "pass" if rep["pass"] else "fail"])
    summary = {"instances": len(jobs), "reports": len(rows) - errors, "failed": failed, "errors": errors}
    header = ["index", "name", "lhs", "rhs", "margin", "tol", "status"]
    return {"summary": summary, "instances": instances}, render_csv(header, rows), failed, errors


def _gate(cfg):
    if not cfg.gate:
        return {"skipped": True}
    return heatkernel.validation_gate(paths=cfg.mc_paths, seed=cfg.seed)


def _gaussian(cfg):
    rng = np.random.default_rng(cfg.seed)
    count = 50 if cfg.count is None else cfg.count
    targets = rng.uniform(-3.0, 3.0, size=(max(count, 1), 3))
    targets[0] = 0.0
    times = _log_grid(0.1, 10.0, cfg.t_points)
    sample = verify.gaussian_sample(times, targets[:count] if count else targets[:0])
    fit = verify.fit_gaussian_constants(sample, cfg.eps, n=cfg.n, seed=cfg.seed)
    rows = [[eps, c, fit.residuals[eps]["binding"]] for eps, c in sorted(fit.constants["C"].items())]
    table = render_csv(["eps", "C", "binding"], rows)
    return fit, table


def _global(cfg, validate=True):
    taus = cfg.tau_list(np.geomspace(0.01, 100.0, 5))
    count = 30 if cfg.count is None else cfg.count
    opts = cfg.shooting()
    train = verify.random_pairs(count, cfg.seed) + verify.vertical_pairs() + verify.horizontal_pairs()
    rows = verify.distance_sample(train, taus, opts, workers=cfg.workers)
    fit = verify.fit_distance_constants(rows)
    fit.sample["taus"] = [float(t) for t in taus]
    fit.sample["training_pairs"] = len(train)
    checks = []
    if validate and fit.feasible:
        A, B = fit.constants["A"], fit.constants["B"]
        held = verify.distance_sample(verify.random_pairs(cfg.heldout, cfg.seed + 1), taus, opts,
                                      workers=cfg.workers)
        for k, tau, d, dt in held:
            bound = A * dt + B * math.sqrt(tau * dt)
            checks.append(verify.InequalityReport(
                "distance-heldout", {"pair": k, "tau": tau, "A": A, "B": B}, d, bound,
                verify.SOLVER_RTOL * d + 1e-12, {"d": "shooting", "d_tau": "shooting"}))
            checks.append(verify.InequalityReport(
                "distance-lower", {"pair": k, "tau": tau}, dt, d,
                verify.SOLVER_RTOL * d + 1e-12, {"d": "shooting", "d_tau": "shooting"}))
    return fit, checks


def cmd_verify(args) -> int:
    cfg = resolve_config(args)
    suite = args.suite
    if suite in ("liyau", "harnack", "gaussian") and cfg.n != 1:
        raise UsageError("heat-kernel suites require n = 1")
    body = {"command": "verify", "suite": suite, "config": cfg.to_dict()}
    failed = errors = 0
    table = None
    if suite in ("liyau", "harnack", "gaussian"):
        gate = _gate(cfg)
        body["gate"] = gate
        if not gate.get("skipped") and not gate["pass"]:
            body["summary"] = {"gate_failed": True}
            _emit(cfg, f"verify-{suite}", body, None)
            return EXIT_FAIL
    if suite in ("cd", "liyau", "harnack"):
        jobs = {"cd": _cd_jobs, "liyau": _liyau_jobs, "harnack": _harnack_jobs}[suite](cfg)
        extra, table, failed, errors = _instance_suite(cfg, suite, jobs)
        body.update(extra)
    elif suite == "gaussian":
        fit, table = _gaussian(cfg)
        body["fit"] = fit.to_dict()
        failed = int(not fit.feasible or any(c < 1 for c in fit.constants["C"].values()))
        body["summary"] = {"feasible": fit.feasible, "failed": failed, "errors": 0}
    elif suite == "global":
        try:
            fit, checks = _global(cfg)
        except NUMERIC_ERRORS as exc:
            body["summary"] = {"errors": 1, "error": f"{type(exc).__name__}: {exc}"}
            _emit(cfg, f"verify-{suite}", body, None)
            return EXIT_NUMERIC
        body["fit"] = fit.to_dict()
        body["instances"] = [c.to_dict() for c in checks]
        failed = sum(not c.passed for c in checks)
        failed += int(not fit.feasible or fit.constants["A"] < 1.0)
        body["summary"] = {"feasible": fit.feasible, "heldout_checks": len(checks), "failed": failed,
                           "errors": 0}
        table = render_csv(["index", "name", "lhs", "rhs", "margin", "tol", "status"],
                           [[k, c.name, c.lhs, c.rhs, c.margin, c.tol, "pass" if c.passed else "fail"]
                            for k, c in enumerate(checks)])
    elif suite == "regimes":
        rows = []
        body["instances"] = []
        for label, pair, want in (("vertical", ([0.0] * 3, [0.0, 0.0, 1.0]), {"small": 0.5, "large": 1.0}),
                                  ("horizontal", ([0.0] * 3, [1.0, 0.0, 0.0]), {"small": 1.0, "large": 1.0})):
            try:
                ra = verify.regime_analysis(np.array(pair[0]), np.array(pair[1]), cfg.regime_tau,
                                            opts=cfg.shooting())
            except NUMERIC_ERRORS as exc:
                errors += 1
                body["instances"].append({"family": label, "error": str(exc)})
                continue
            for dec, info in sorted(ra["decades"].items()):
                ok = abs(info["slope"] - want[dec]) <= 0.1
                failed += not ok
                rows.append([label, dec, info["range"][0], info["range"][1], info["slope"], want[dec],
                             "pass" if ok else "fail"])
            body["instances"].append({"family": label, **ra})
        body["summary"] = {"failed": failed, "errors": errors}
        table = render_csv(["family", "decade", "lambda_lo", "lambda_hi", "slope", "expected", "status"], rows)
    _emit(cfg, f"verify-{suite}", body, table)
    if errors:
        return EXIT_NUMERIC
    return EXIT_FAIL if failed else EXIT_OK


def _emit(cfg, stem, body, table):
    paths = _write(cfg, stem, render_report(body), table)
    s = body.get("summary", {})
    print(f"{stem}: " + ", ".join(f"{k}={v}" for k, v in sorted(s.items())))
    for p in paths:
        print(f"wrote {p}")


# ----------------------------------------------------------------------- fit

def cmd_fit(args) -> int:
    cfg = resolve_config(args)
    body = {"command": "fit", "what": args.what, "config": cfg.to_dict()}
    try:
        if args.what == "gaussian":
            if cfg.n != 1:
                raise UsageError("heat-kernel fits require n = 1")
            fit, table = _gaussian(cfg)
        else:
            fit, _ = _global(cfg, validate=False)
            table = render_csv(["A", "B"], [[fit.constants["A"], fit.constants["B"]]])
    except NUMERIC_ERRORS as exc:
        body["error"] = f"{type(exc).__name__}: {exc}"
        _emit(cfg, f"fit-{args.what}", body, None)
        return EXIT_NUMERIC
    body["fit"] = fit.to_dict()
    body["summary"] = {"feasible": fit.feasible}
    _emit(cfg, f"fit-{args.what}", body, table)
    return EXIT_OK if fit.feasible else EXIT_FAIL


# --------------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    grid = parse_grid(args.grid) if args.grid is not None else cfg.t_grid()
    grid = np.sort(grid)
    point = parse_point(args.point) if args.point else None
    q = args.quantity
    rows = []
    status = EXIT_OK
    if q == "heat":
        y = np.zeros(3) if point is None else point
        if y.size != 3:
            raise UsageError("heat sweeps live on H^1")
        header = ["t", "x", "y", "z", "p", "log_p", "quad_error", "source"]
        for t in grid:
            b = heatkernel.evaluate(float(t), heatkernel.H1.origin, y, epsrel=cfg.quad_rtol)
            rows.append([float(t), *y.tolist(), b.p, b.log_p, b.quad_error, "quadrature"])
    elif q == "liyau-margin":
        targets = [point] if point is not None else [np.array(v) for v in _LIYAU_TARGETS]
        header = ["t", "x", "y", "z", "lhs", "rhs", "margin", "tol", "source"]
        for t in grid:
            for y in targets:
                r = verify.check_liyau(float(t), y, tol_factor=cfg.tol_factor)
                rows.append([float(t), *np.asarray(y, float).tolist(), r.lhs, r.rhs, r.margin, r.tol, "quadrature"])
                if not r.passed:
                    status = EXIT_FAIL
    else:
        base = np.array([0.0, 0.0, 1.0]) if point is None else point
        G = ModelSpace((base.size - 1) // 2)
        header = ["lambda", "tau", "d", "d_tau", "ratio", "source"]
        for lam in grid:
            if not lam > 0:
                raise UsageError("dilation factors must be positive")
            qpt = G.dilate(float(lam), base)
            d = distance(SR, G.origin, qpt, cfg.shooting())
            for tau in sorted(cfg.tau_list(HARNACK_TAUS)):
                g = distance(MetricSpec(tau), G.origin, qpt, cfg.shooting())
                if not (d.converged and g.converged):
                    status = EXIT_NUMERIC
                ratio = d.length / g.length if g.length > 0 else float("nan")
                rows.append([float(lam), float(tau), d.length, g.length, ratio, "shooting"])
    table = render_csv(header, rows)
    paths = _write(cfg, f"sweep-{q}", None, table)
    print(f"sweep-{q}: rows={len(rows)}")
    for p in paths:
        print(f"wrote {p}")
    return status


# --------------------------------------------------------------------- main

def _common(p: argparse.ArgumentParser, tau: bool = True):
    p.add_argument("--config", help="key = value file (keys: " + ", ".join(sorted(_KEYS)) + ")")
    p.add_argument("--seed", type=int, help="Random seed (default: $SASAKI_SEED or 0).")
    p.add_argument("--out", help="Output directory for reports (default: reports).")
    p.add_argument("--workers", type=int, help="Worker processes; output order does not depend on it.")
    p.add_argument("--count", type=int, help="Number of random instances for the suite.")
    p.add_argument("--heldout", type=int, help="Held-out pairs for the distance fit validation.")
    p.add_argument("--n", type=int, help="CR dimension (heat-kernel commands need 1).")
    if tau:
        p.add_argument("--tau", dest="taus", type=_floats_arg, help="Comma list of tau values.")
    p.add_argument("--eps", type=_floats_arg, help="Comma list of eps values for the Gaussian fit.")
    p.add_argument("--t-min", dest="t_min", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--t-points", dest="t_points", type=int)
    p.add_argument("--solver-tol", dest="solver_tol", type=float, help="Shooting endpoint tolerance.")
    p.add_argument("--quad-rtol", dest="quad_rtol", type=float, help="Quadrature relative tolerance.")
    p.add_argument("--tol-factor", dest="tol_factor", type=float,
                   help="Multiple of the propagated quadrature error used as tolerance.")
    p.add_argument("--mc-paths", dest="mc_paths", type=int, help="Paths for the Monte Carlo gate.")
    p.add_argument("--no-gate", dest="gate", action="store_const", const=False,
                   help="Skip the heat-kernel validation gate.")


def _floats_arg(text):
    try:
        return _floats(text)
    except UsageError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sasaki", description="Numerical checks on the Heisenberg group.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("distance", help="Distance between two points (use -- before negative coordinates).")
    _common(d, tau=False)
    g = d.add_mutually_exclusive_group(required=True)
    g.add_argument("--sr", action="store_true", help="Sub-Riemannian distance.")
    g.add_argument("--tau", dest="tau", type=float, help="Scaled Riemannian distance with this tau.")
    d.add_argument("--json", help="Also write the record to this JSON file.")
    d.add_argument("a", help="Point x1,..,xn,y1,..,yn,z")
    d.add_argument("b", help="Point x1,..,xn,y1,..,yn,z")
    d.set_defaults(func=cmd_distance)

    v = sub.add_parser("verify", help="Run a verification suite.")
    _common(v)
    v.add_argument("suite", choices=["cd", "liyau", "harnack", "gaussian", "global", "regimes"])
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("fit", help="Fit the constants of an inequality.")
    _common(f)
    f.add_argument("what", choices=["gaussian", "global"])
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("sweep", help="Long-format CSV over a grid.")
    _common(s)
    s.add_argument("quantity", choices=["heat", "liyau-margin", "distance-ratio"])
    s.add_argument("--grid", help="lo:hi:count (geometric) or comma list; t for heat/liyau-margin, "
                                  "dilation factor for distance-ratio.")
    s.add_argument("--point", help="Target point (heat, liyau-margin) or base pair end (distance-ratio).")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sasaki: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"sasaki: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
