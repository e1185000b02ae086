"""Acceptance checks behind ``lhy-lab verify-all``.

Each check returns a plain dict with ``id``, ``name``, ``passed`` and the
measured values. No wall-clock data enters the results, so two runs with
the same configuration serialise to identical bytes.
"""

import hashlib
import json
import math
from fractions import Fraction

import numpy as np

from . import coefficients, energy, fock_oracle, localization, scattering

CRITERIA = {
    1: "lhy constant",
    2: "riemann sum convergence",
    3: "square-well scattering length",
    4: "neumann eigenvalue rate",
    5: "interaction integral rate",
    6: "coefficient norm exponents",
    7: "fock oracle identities",
    8: "weyl and bogoliubov conjugation",
    9: "energy trend",
    10: "localization checks",
    11: "determinism",
}


def fit_exponent(rows):
    """Least-squares slope of ``log value`` against ``log N``.

    Parameters
    ----------
    rows : sequence of (N, value)
        At least three rows with positive ``N`` and ``value``.

    Returns
    -------
    dict with ``slope``, ``intercept`` and ``r2``.
    """
    rows = list(rows)
    if len(rows) < 3:
        raise ValueError(f"fit_exponent needs at least 3 rows, got {len(rows)}")
    for i, (n, v) in enumerate(rows):
        if not (n > 0 and v > 0):
            raise ValueError(f"row {i} (N={n!r}, value={v!r}) is not positive")
    x = np.log([float(n) for n, _ in rows])
    y = np.log([float(v) for _, v in rows])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


class Pipeline:
    """Scattering solutions and coefficient tables shared between checks."""

    def __init__(self, config):
        self.config = config
        self._solutions = {}
        self._tables = {}

    def solution(self, N):
        if N not in self._solutions:
            c = self.config
            self._solutions[N] = scattering.solve_neumann(c.potential(), c.ell, N, c.kappa)
        return self._solutions[N]

    def table(self, N):
        if N not in self._tables:
            c = self.config
            part = coefficients.MomentumPartition(N, c.kappa, c.eps)
            self._tables[N] = coefficients.build_table(self.solution(N), part,
                                                       max_shell=c.max_shell, max_rows=c.max_rows)
        return self._tables[N]


def _result(cid, passed, **values):
    return {"id": cid, "name": CRITERIA[cid], "passed": bool(passed), "values": values}


def criterion_1(config, pipe=None):
    tol = config.tol("lhy_integral")
    a = config.get("lhy", "a")
    res = energy.lhy_integral(a)
    closed = 512.0 * math.sqrt(math.pi) / 15.0 * a**2.5
    rel = abs(res["quadrature"] - closed) / closed
    return _result(1, rel < tol, quadrature=res["quadrature"], closed_form=res["closed_form"],
                   reference=closed, relative_error=rel, tolerance=tol)


def criterion_2(config, pipe=None):
    a = config.get("lhy", "a")
    hs = config.get("lhy", "h_sequence")
    dev = [energy.lhy_riemann_sum(a, h=h, cutoff=config.get("lhy", "cutoff")).deviation for h in hs]
    monotone = all(d2 < d1 for d1, d2 in zip(dev, dev[1:]))
    final = config.tol("riemann_final")
    return _result(2, monotone and dev[-1] < final, h=list(hs), deviation=dev,
                   monotone=monotone, final_tolerance=final)


def square_well_length(v0, radius):
    """Closed-form scattering length of ``-Laplacian + V/2`` for a square well."""
    k = math.sqrt(v0 / 2.0)
    return radius - math.tanh(k * radius) / k


def criterion_3(config, pipe=None):
    tol = config.tol("scattering_length")
    rows = []
    for v0, r in config.get("scattering", "wells"):
        num = scattering.scattering_length(scattering.Potential.square_well(v0, r))
        ref = square_well_length(v0, r)
        rows.append({"v0": v0, "radius": r, "numeric": num, "closed_form": ref,
                     "relative_error": abs(num - ref) / abs(ref)})
    return _result(3, all(x["relative_error"] < tol for x in rows), wells=rows, tolerance=tol)


def _ball_rows(config, pipe):
    key = "_ball_rows"
    if pipe is not None and hasattr(pipe, key):
        return getattr(pipe, key)
    pot = config.potential()
    rows = [scattering.ball_checks(pot, rb) for rb in config.get("scattering", "ball_radii")]
    if pipe is not None:
        setattr(pipe, key, rows)
    return rows


def _rate(rows, name):
    fit = fit_exponent([(r["ball_radius"], abs(r[name])) for r in rows])
    return -fit["slope"], fit


def criterion_4(config, pipe=None):
    rows = _ball_rows(config, pipe)
    rate, fit = _rate(rows, "lambda_error")
    tol = config.tol("ball_rate")
    return _result(4, rate >= tol, ball_radii=[r["ball_radius"] for r in rows],
                   errors=[r["lambda_error"] for r in rows], rate=rate, r2=fit["r2"], minimum_rate=tol)


def criterion_5(config, pipe=None):
    rows = _ball_rows(config, pipe)
    rate, fit = _rate(rows, "vf_error")
    tol = config.tol("ball_rate")
    return _result(5, rate >= tol, ball_radii=[r["ball_radius"] for r in rows],
                   errors=[r["vf_error"] for r in rows], rate=rate, r2=fit["r2"], minimum_rate=tol)


def criterion_6(config, pipe=None):
    pipe = pipe or Pipeline(config)
    k, e = config.kappa, config.eps
    targets = {"sigma_L_sq": (1.5 * k, config.tol("slope_sigma_l")),
               "eta_H_sq": (3 * k - 1 + e, config.tol("slope_eta_h")),
               "sigma_L_H1_sq": (2.5 * k, config.tol("slope_sigma_l_h1"))}
    Ns = config.get("model", "n_values")
    norms = [coefficients.norm_table(pipe.table(N)) for N in Ns]
    out, ok = {}, True
    for name, (target, tol) in targets.items():
        fit = fit_exponent([(N, nt[name]) for N, nt in zip(Ns, norms)])
        passed = abs(fit["slope"] - target) <= tol
        ok &= passed
        out[name] = {"values": [nt[name] for nt in norms], "slope": fit["slope"], "r2": fit["r2"],
                     "target": target, "tolerance": tol, "passed": passed}
    return _result(6, ok, n_values=list(Ns), fits=out)


def oracle_report(config):
    """Fock-space identities on seeded random configurations."""
    o = config.section("oracle")
    rng = np.random.default_rng(o["seed"])
    worst = {"norm": 0.0, "number": 0.0, "number_sq": 0.0, "number_sector": 0.0,
             "kinetic": 0.0, "cubic": 0.0, "pair": 0.0}
    exact = True
    invariant = True
    sectors = []
    for _ in range(o["configurations"]):
        N = Fraction(int(rng.integers(1, 10)), int(rng.integers(1, 4)))
        phase = fock_oracle.random_configuration(rng, o["max_orbits"], exact=True, N=N)
        keys = sorted(phase.eta)
        c = {key: 0.25 + 0.5 * float(rng.random()) for key in keys}
        gamma = {key: 1.0 + float(rng.random()) for key in keys}
        nr = fock_oracle.verify_norm_formula(phase)
        ex = fock_oracle.verify_expectations(phase, c=c, gamma=gamma, n0_over_n=0.75)
        exact &= nr["exact"]
        invariant &= ex["sector_invariant"]
        sectors.append(len(nr["sectors"]) - 1)
        scale = max(1.0, abs(float(nr["closed"])))
        worst["norm"] = max(worst["norm"], nr["residual"] / scale)
        for name in ("number", "number_sq"):
            worst[name] = max(worst[name], ex[name]["residual"] / max(1.0, abs(ex[name]["closed"])))
        worst["number_sector"] = max(worst["number_sector"], ex["number"]["sector_residual"])
        worst["kinetic"] = max(worst["kinetic"], ex["kinetic"]["residual"] / max(1.0, abs(ex["kinetic"]["closed"])))
        worst["cubic"] = max(worst["cubic"], ex["cubic"]["residual"] / max(1.0, abs(ex["cubic"]["closed"])))
        worst["pair"] = max(worst["pair"], ex["pair_max"])
    hist = {str(m): sectors.count(m) for m in sorted(set(sectors))}
    return {"residuals": worst, "exact_arithmetic": exact, "sector_invariant": invariant,
            "configurations": o["configurations"], "top_sector_histogram": hist, "seed": o["seed"]}


def criterion_7(config, pipe=None):
    rep = oracle_report(config)
    tol = config.tol("oracle_exact")
    r = rep["residuals"]
    ok = (r["norm"] < tol and r["number"] < tol and r["kinetic"] < tol and rep["sector_invariant"]
          and r["pair"] == 0.0)
    return _result(7, ok, tolerance=tol, **rep)


def conjugation_report(config):
    o = config.section("oracle")
    w = fock_oracle.weyl_check(o["n0"], o["cap"])
    b = fock_oracle.bogoliubov_check(o["nu"], cap=max(60, o["cap"] - 4))
    n = fock_oracle.numpar_check(o["nu"], cap=o["numpar_cap"])
    return {"weyl": w["residual"], "bogoliubov": b["residual"], "numpar": n["residual"],
            "numpar_bound": n["bound"], "cap": o["cap"], "weyl_max_occupation": w["max_occupation"]}


def criterion_8(config, pipe=None):
    rep = conjugation_report(config)
    tol = config.tol("conjugation")
    return _result(8, rep["weyl"] < tol and rep["bogoliubov"] < tol, tolerance=tol, **rep)


def criterion_9(config, pipe=None):
    pipe = pipe or Pipeline(config)
    Ns = config.get("model", "energy_n_values")
    rows = []
    for N in Ns:
        eb = energy.energy_breakdown(pipe.table(N), pipe.solution(N), window=config.window)
        rows.append({"N": N, "relative_residual": eb.relative_residual, "grouping_gap": eb.grouping_gap,
                     "total": eb.total, "prediction": eb.prediction})
    mags = [abs(r["relative_residual"]) for r in rows]
    ok = all(m2 < m1 for m1, m2 in zip(mags, mags[1:]))
    return _result(9, ok, rows=rows, magnitudes=mags)


def localization_report(config):
    o = config.section("localize")
    return localization.appendix_checks(o["box"], o["margin"], o["grid"], o["legendre_points"])


def criterion_10(config, pipe=None):
    rep = localization_report(config)
    tol = config.tol("partition")
    part_ok = all(v["residual"] < tol for v in rep["partition"].values())
    kin_ok = all(v["margin"] > 0 and v["measured_constant"] <= v["declared_constant"]
                 for v in rep["kinetic"].values())
    leg = rep["legendre_quadratic"]
    leg_ok = leg["max_deviation"] < leg["grid_bound"]
    return _result(10, part_ok and kin_ok and leg_ok, tolerance=tol, partition_ok=part_ok,
                   kinetic_ok=kin_ok, legendre_ok=leg_ok, report=rep)


FAST = (1, 2, 3, 7, 8, 10)


def digest(results):
    return hashlib.sha256(dumps(results).encode()).hexdigest()


def criterion_11(config, pipe=None, previous=None):
    """In-process repeat of the fast checks, compared byte for byte."""
    first = previous if previous is not None else [CHECKS[i](config) for i in FAST]
    second = [CHECKS[i](config) for i in FAST]
    d1, d2 = digest(first), digest(second)
    return _result(11, d1 == d2, repeated=list(FAST), digest=d2)


CHECKS = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
          6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def run_all(config, only=None):
    """Run the checks in order (``only`` selects a subset of ids)."""
    pipe = Pipeline(config)
    ids = sorted(CRITERIA) if only is None else sorted(only)
    results = []
    for cid in ids:
        if cid == 11:
            prev = [r for r in results if r["id"] in FAST]
            prev = prev if len(prev) == len(FAST) else None
            results.append(criterion_11(config, pipe, prev))
        else:
            results.append(CHECKS[cid](config, pipe))
    return results


def clean(obj):
    """JSON-ready copy: numpy scalars to Python, tuples to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(obj):
    return json.dumps(clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def summary_line(result):
    status = "PASS" if result["passed"] else "FAIL"
    return f"criterion {result['id']:2d} {result['name']}: {status}"

