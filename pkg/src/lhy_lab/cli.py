"""Command-line entry point ``lhy-lab``.

Every subcommand reads an INI configuration (the shipped default unless
``--config`` is given), writes its artifacts below the output directory
and prints a JSON summary on stdout. Exit codes: 0 success, 2 configuration
error, 3 certificate refusal, 4 acceptance failure.
"""

import argparse
import configparser
import csv
import io
import os
import sys
from dataclasses import dataclass, field
from importlib import resources

from . import acceptance, coefficients, energy, lattice, scattering
from .acceptance import dumps, fit_exponent

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_CERTIFICATE, EXIT_ACCEPTANCE = 0, 2, 3, 4
SUBCOMMANDS = ("scatter", "coeffs", "energy", "lhy", "cubic", "sweep", "oracle", "localize", "verify-all")

__all__ = ["ConfigError", "RunConfig", "load_config", "fit_exponent", "run", "main"]


class ConfigError(ValueError):
    """Invalid configuration; ``code`` tells the failure kinds apart."""

    CODES = ("missing-file", "parse-error", "unknown-section", "unknown-key", "bad-value", "constraint")

    def __init__(self, message, code, key=None):
        super().__init__(message)
        if code not in self.CODES:
            raise ValueError(f"unknown config error code {code!r}")
        self.code = code
        self.key = key


def _float(text):
    return float(text)


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _floats(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(float(t) for t in items)


def _pairs(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        a, b = item.split(":")
        out.append((float(a), float(b)))
    return tuple(out)


def _text(text):
    return text.strip()


SCHEMA = {
    "potential": {"kind": _text, "v0": _float, "radius": _float, "file": _text},
    "model": {"kappa": _float, "eps": _float, "ell": _float, "n_values": _floats,
              "energy_n_values": _floats},
    "lattice": {"max_shell": _int, "window": _int, "max_rows": _int},
    "lhy": {"a": _float, "h_sequence": _floats, "cutoff": _float},
    "scattering": {"wells": _pairs, "ball_radii": _floats},
    "oracle": {"seed": _int, "configurations": _int, "max_orbits": _int, "cap": _int, "n0": _float,
               "nu": _float, "numpar_cap": _int},
    "localize": {"box": _float, "margin": _float, "grid": _int, "legendre_points": _int},
    "tolerances": {"lhy_integral": _float, "riemann_final": _float, "scattering_length": _float,
                   "ball_rate": _float, "slope_sigma_l": _float, "slope_eta_h": _float,
                   "slope_sigma_l_h1": _float, "oracle_exact": _float, "conjugation": _float,
                   "partition": _float},
    "output": {"directory": _text},
}


def _default_text():
    return resources.files("lhy_lab").joinpath("data", "default.ini").read_text(encoding="utf-8")


def _parse_ini(text, source):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}", "parse-error") from None
    return cp


@dataclass
class RunConfig:
    """Validated configuration values, keyed by section and key."""

    values: dict
    source: str = "<default>"
    overrides: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.values[section][key]

    def section(self, name):
        return dict(self.values[name])

    def tol(self, key):
        return self.values["tolerances"][key]

    @property
    def kappa(self):
        return self.get("model", "kappa")

    @property
    def eps(self):
        return self.get("model", "eps")

    @property
    def ell(self):
        return self.get("model", "ell")

    @property
    def max_shell(self):
        return self.get("lattice", "max_shell") or None

    @property
    def window(self):
        return self.get("lattice", "window") or None

    @property
    def max_rows(self):
        return self.get("lattice", "max_rows")

    def potential(self):
        p = self.values["potential"]
        if p["kind"] == "square-well":
            return scattering.Potential.square_well(p["v0"], p["radius"])
        path = p["file"]
        if not os.path.isabs(path) and self.source not in ("<default>",):
            path = os.path.join(os.path.dirname(os.path.abspath(self.source)), path)
        return scattering.Potential.from_file(path)

    def replace(self, section, key, value):
        vals = {s: dict(v) for s, v in self.values.items()}
        vals[section][key] = value
        cfg = RunConfig(vals, self.source)
        validate(cfg)
        return cfg


def _read_values(cp, source, base=None):
    values = {s: dict(v) for s, v in (base or {}).items()}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]", "unknown-section", section)
        for key, raw in cp.items(section):
            path = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {path}", "unknown-key", path)
            try:
                values.setdefault(section, {})[key] = SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: cannot parse {path} = {raw!r} ({exc})", "bad-value", path) from None
    return values


def _constraint(ok, message, key):
    if not ok:
        raise ConfigError(message, "constraint", key)


def validate(cfg):
    v = cfg.values
    for section, keys in SCHEMA.items():
        for key in keys:
            if key not in v.get(section, {}):
                raise ConfigError(f"missing key {section}.{key}", "bad-value", f"{section}.{key}")
    k, e, ell = v["model"]["kappa"], v["model"]["eps"], v["model"]["ell"]
    _constraint(0.5 < k < 2.0 / 3.0, f"model.kappa = {k} must lie in (1/2, 2/3)", "model.kappa")
    _constraint(e > 0, f"model.eps = {e} must be positive", "model.eps")
    _constraint(3 * k - 2 + 4 * e < 0, f"3 kappa - 2 + 4 eps = {3 * k - 2 + 4 * e:.4g} must be negative",
                "model.eps")
    _constraint(0 < ell < 0.5, f"model.ell = {ell} must lie in (0, 1/2)", "model.ell")
    for key in ("n_values", "energy_n_values"):
        ns = v["model"][key]
        _constraint(len(ns) > 0 and all(n > 0 for n in ns), f"model.{key} must be positive", f"model.{key}")
        _constraint(list(ns) == sorted(ns) and len(set(ns)) == len(ns),
                    f"model.{key} must be strictly ascending", f"model.{key}")
    p = v["potential"]
    _constraint(p["kind"] in ("square-well", "tabulated-radial"),
                f"potential.kind = {p['kind']!r} must be square-well or tabulated-radial", "potential.kind")
    if p["kind"] == "square-well":
        _constraint(p["v0"] >= 0, "potential.v0 must be non-negative", "potential.v0")
        _constraint(p["radius"] > 0, "potential.radius must be positive", "potential.radius")
    else:
        _constraint(bool(p["file"]), "potential.file is required for tabulated-radial", "potential.file")
    for key in ("max_shell", "window"):
        _constraint(v["lattice"][key] >= 0, f"lattice.{key} must be non-negative", f"lattice.{key}")
    _constraint(v["lattice"]["max_rows"] > 0, "lattice.max_rows must be positive", "lattice.max_rows")
    _constraint(v["lhy"]["a"] > 0, "lhy.a must be positive", "lhy.a")
    _constraint(all(0 < h < 1 for h in v["lhy"]["h_sequence"]) and len(v["lhy"]["h_sequence"]) > 0,
                "lhy.h_sequence entries must lie in (0, 1)", "lhy.h_sequence")
    _constraint(v["lhy"]["cutoff"] > 0, "lhy.cutoff must be positive", "lhy.cutoff")
    _constraint(all(a >= 0 and b > 0 for a, b in v["scattering"]["wells"]),
                "scattering.wells must be V0:R pairs with V0 >= 0, R > 0", "scattering.wells")
    _constraint(len(v["scattering"]["ball_radii"]) >= 3 and all(r > 1 for r in v["scattering"]["ball_radii"]),
                "scattering.ball_radii needs at least three radii above 1", "scattering.ball_radii")
    o = v["oracle"]
    _constraint(o["configurations"] > 0, "oracle.configurations must be positive", "oracle.configurations")
    _constraint(1 <= o["max_orbits"] <= 4, "oracle.max_orbits must lie in 1..4", "oracle.max_orbits")
    _constraint(o["cap"] >= 4 * max(o["n0"], 10), "oracle.cap must be at least 4 max(n0, 10)", "oracle.cap")
    _constraint(o["n0"] > 0, "oracle.n0 must be positive", "oracle.n0")
    _constraint(o["numpar_cap"] >= 8, "oracle.numpar_cap must be at least 8", "oracle.numpar_cap")
    loc = v["localize"]
    _constraint(loc["box"] > 0 and 0 < loc["margin"] < loc["box"] / 2,
                "localize.margin must lie in (0, box/2)", "localize.margin")
    _constraint(loc["grid"] >= 16 and loc["legendre_points"] >= 3, "localize grids too small", "localize.grid")
    for key, val in v["tolerances"].items():
        _constraint(val > 0, f"tolerances.{key} must be positive", f"tolerances.{key}")
    return cfg


def load_config(path=None):
    """Parse and validate a configuration file.

    Keys missing from ``path`` take their shipped default values; unknown
    sections or keys are errors. ``path=None`` loads the shipped default.
    """
    base = _read_values(_parse_ini(_default_text(), "<default>"), "<default>")
    if path is None:
        return validate(RunConfig(base))
    if not os.path.isfile(path):
        raise ConfigError(f"configuration file {path!r} not found", "missing-file", None)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    values = _read_values(_parse_ini(text, path), path, base)
    return validate(RunConfig(values, path))


# ---------------------------------------------------------------------------
# artifact writers


def write_json(path, obj):
    payload = {"schema": SCHEMA_VERSION}
    payload.update(acceptance.clean(obj))
    text = dumps(payload)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    text = csv_text(header, rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


def _tag(N):
    return f"{float(N):.6g}".replace("+", "")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_scatter(cfg, args, out):
    rows = []
    for N in _n_list(cfg, args, "n_values", single=True):
        sol = scattering.solve_neumann(cfg.potential(), cfg.ell, N, cfg.kappa)
        path = os.path.join(out, f"scatter_N{_tag(N)}.csv")
        sol.to_csv(path)
        rows.append({"N": N, "a": sol.a_scat, "lambda": sol.lambda_ell, "ball_radius": sol.ball_radius,
                     "ode_residual": scattering.ode_residual(sol),
                     "neumann_slope": scattering.neumann_slope(sol),
                     "int_Vf": sol.integral("Vf"), "eta_zero": scattering.eta_zero(sol),
                     "csv": os.path.basename(path)})
    return {"command": "scatter", "rows": rows}


def _cmd_coeffs(cfg, args, out):
    pipe = acceptance.Pipeline(cfg)
    rows = []
    for N in _n_list(cfg, args, "n_values", single=True):
        tab = pipe.table(N)
        path = os.path.join(out, f"coeffs_N{_tag(N)}.csv")
        tab.to_csv(path)
        norms = coefficients.norm_table(tab)
        write_json(os.path.join(out, f"norms_N{_tag(N)}.json"), {"N": N, "norms": norms})
        rows.append({"N": N, "rows": int(len(tab.n)), "thresholds": list(tab.partition.thresholds),
                     "norms": norms, "csv": os.path.basename(path)})
    return {"command": "coeffs", "rows": rows}


def _cmd_energy(cfg, args, out):
    pipe = acceptance.Pipeline(cfg)
    rows = []
    for N in _n_list(cfg, args, "energy_n_values"):
        eb = energy.energy_breakdown(pipe.table(N), pipe.solution(N), window=cfg.window)
        rows.append(eb.as_dict())
    write_json(os.path.join(out, "energy.json"), {"rows": rows})
    return {"command": "energy", "rows": rows}


def _cmd_lhy(cfg, args, out):
    a = args.a if args.a is not None else cfg.get("lhy", "a")
    hs = _floats(args.h_sequence) if args.h_sequence else cfg.get("lhy", "h_sequence")
    integral = energy.lhy_integral(a)
    table = []
    for h in hs:
        rs = energy.lhy_riemann_sum(a, h=h, cutoff=cfg.get("lhy", "cutoff"))
        table.append([h, rs.normalized, integral["closed_form"], rs.deviation, rs.normalized_certificate, rs.shells])
    write_csv(os.path.join(out, "lhy.csv"),
              ["h", "riemann_sum", "closed_form", "deviation", "certificate", "shells"], table)
    return {"command": "lhy", "a": a, "integral": integral,
            "rows": [dict(zip(["h", "riemann_sum", "closed_form", "deviation", "certificate", "shells"], r))
                     for r in table]}


def _cmd_cubic(cfg, args, out):
    pipe = acceptance.Pipeline(cfg)
    rows = []
    for N in _n_list(cfg, args, "n_values"):
        sums = energy.cubic_closed_sums(pipe.table(N), pipe.solution(N))
        rows.append({"N": N, **sums})
    write_json(os.path.join(out, "cubic.json"), {"rows": rows})
    return {"command": "cubic", "rows": rows}


SWEEP_QUANTITIES = tuple(coefficients.NORM_NAMES) + ("K_sum", "C_sum", "V_sum", "relative_residual")


def _cmd_sweep(cfg, args, out):
    quantity = args.quantity
    if quantity not in SWEEP_QUANTITIES:
        raise ConfigError(f"unknown sweep quantity {quantity!r}; choose from {', '.join(SWEEP_QUANTITIES)}",
                          "bad-value", "--quantity")
    pipe = acceptance.Pipeline(cfg)
    rows = []
    for N in _n_list(cfg, args, "n_values"):
        if quantity in coefficients.NORM_NAMES:
            val = coefficients.norm_table(pipe.table(N))[quantity]
        elif quantity == "relative_residual":
            val = energy.energy_breakdown(pipe.table(N), pipe.solution(N), window=cfg.window).relative_residual
        else:
            val = energy.cubic_closed_sums(pipe.table(N), pipe.solution(N))[quantity]
        rows.append((N, val))
    fit = fit_exponent([(n, abs(v)) for n, v in rows])
    write_csv(os.path.join(out, f"sweep_{quantity}.csv"), ["N", quantity], rows)
    return {"command": "sweep", "quantity": quantity, "rows": [{"N": n, "value": v} for n, v in rows],
            "fit": fit, "fit_uses_absolute_value": True}


def _cmd_oracle(cfg, args, out):
    rep = {"identities": acceptance.oracle_report(cfg), "conjugation": acceptance.conjugation_report(cfg)}
    write_json(os.path.join(out, "oracle.json"), rep)
    return {"command": "oracle", **rep}


def _cmd_localize(cfg, args, out):
    rep = acceptance.localization_report(cfg)
    write_json(os.path.join(out, "localize.json"), rep)
    return {"command": "localize", **rep}


def _cmd_verify_all(cfg, args, out):
    only = None
    if args.only:
        only = [int(x) for x in args.only.split(",")]
        bad = [i for i in only if i not in acceptance.CRITERIA]
        if bad:
            raise ConfigError(f"unknown criteria {bad}", "bad-value", "--only")
    results = acceptance.run_all(cfg, only)
    for r in results:
        print(acceptance.summary_line(r), file=sys.stderr)
    payload = {"command": "verify-all", "criteria": results, "passed": all(r["passed"] for r in results)}
    write_json(os.path.join(out, "verify-all.json"), payload)
    return payload


COMMANDS = {"scatter": _cmd_scatter, "coeffs": _cmd_coeffs, "energy": _cmd_energy, "lhy": _cmd_lhy,
            "cubic": _cmd_cubic, "sweep": _cmd_sweep, "oracle": _cmd_oracle, "localize": _cmd_localize,
            "verify-all": _cmd_verify_all}


def _n_list(cfg, args, key, single=False):
    if getattr(args, "N", None):
        try:
            ns = _floats(args.N)
        except ValueError:
            raise ConfigError(f"cannot parse --N {args.N!r}", "bad-value", "--N") from None
        if not ns or any(n <= 0 for n in ns):
            raise ConfigError("--N values must be positive", "constraint", "--N")
        return tuple(sorted(ns))
    ns = cfg.get("model", key)
    return ns[:1] if single else ns


def build_parser():
    parser = argparse.ArgumentParser(prog="lhy-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI configuration (default: shipped default.ini)")
    parser.add_argument("--out", help="output directory (default: [output] directory)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name in ("scatter", "coeffs", "energy", "cubic", "sweep"):
            p.add_argument("--N", help="comma-separated particle numbers, e.g. 1e3,1e4")
        if name == "lhy":
            p.add_argument("--a", type=float, help="scattering length")
            p.add_argument("--h-sequence", help="comma-separated lattice spacings")
        if name == "sweep":
            p.add_argument("--quantity", required=True, help="norm name, K_sum, C_sum, V_sum or relative_residual")
        if name == "verify-all":
            p.add_argument("--only", help="comma-separated criterion ids")
    return parser


def run(command, config, args=None, out=None):
    """Execute one subcommand; returns ``(exit_status, payload)``."""
    if command not in COMMANDS:
        raise ValueError(f"unknown subcommand {command!r}")
    args = args or argparse.Namespace(N=None, a=None, h_sequence=None, quantity=None, only=None)
    out = out or config.get("output", "directory")
    os.makedirs(out, exist_ok=True)
    payload = COMMANDS[command](config, args, out)
    status = EXIT_OK
    if command == "verify-all" and not payload["passed"]:
        status = EXIT_ACCEPTANCE
    return status, payload


def _diagnostic(kind, exc, **extra):
    diag = {"error": kind, "message": str(exc)}
    diag.update(extra)
    sys.stdout.write(write_json(None, diag))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "lhy" and args.a is not None and not args.a > 0:
            raise ConfigError("--a must be positive", "constraint", "--a")
        status, payload = run(args.command, cfg, args, args.out)
    except ConfigError as exc:
        _diagnostic("config", exc, code=exc.code, key=exc.key)
        return EXIT_CONFIG
    except lattice.CertificateError as exc:
        _diagnostic("certificate", exc, required=exc.required, certificate=exc.certificate)
        return EXIT_CERTIFICATE
    except (lattice.LatticeError, scattering.ScatteringError) as exc:
        _diagnostic("refusal", exc)
        return EXIT_CERTIFICATE
    sys.stdout.write(write_json(None, payload))
    return status


if __name__ == "__main__":
    sys.exit(main())
