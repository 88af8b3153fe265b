"""Command-line interface: ``seedbank-ibd <subcommand> [options]``.

Subcommands
-----------
ibd      equilibrium IBD field on a torus (JSON or CSV)
green    lattice Green function table
asym     exact-vs-predicted tables for the slow seed-bank expansions
zeta     second-moment report
mc       Monte Carlo estimates of the IBD field
single   transition row of the single-colony seed-bank chain
verify   cross-oracle suite with a PASS/FAIL table

Exit codes: 0 success, 1 a verify check failed, 2 invalid input,
3 output could not be written.

Options may also come from a flat ``key=value`` file given with
``--config``; command-line flags take precedence over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .core import (INFINITE, NEAREST_NEIGHBOUR, MigrationKernel, ModelParams,
                   ParameterError, TorusSpec)
from .spectral import COMPONENT_LABELS, TYPO_LEDGER, compute_ibd_field

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    "ibd_agreement": 1e-10,
    "green_identity": 1e-11,
    "u_transcription": 1e-12,
    "abg_relative": 1e-10,
    "contraction_min": 50.0,
    "contraction_max": 200.0,
    "zeta_relative": 0.01,
    "mc_z": 4.0,
}


class UsageError(Exception):
    pass


class EmitError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: ModelParams | None = None
    torus: TorusSpec | None = None
    kernel: MigrationKernel = NEAREST_NEIGHBOUR
    method: str = "spectral"
    format: str = "json"
    output: str | None = None
    seed: int | None = None
    threads: int | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    options: dict = field(default_factory=dict)


# ---------------------------------------------------------------- emission

def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    return "%.12e" % v


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def dumps(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys and every float written as ``%.12e``."""
    obj = _plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps(obj[k], indent + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(_plain(v), (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_cell(v):
    if isinstance(v, float):
        return _fmt_float(v) if math.isfinite(v) else ""
    return v


def table_to_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table["columns"])
    for row in table["rows"]:
        w.writerow([_csv_cell(v) for v in _plain(row)])
    return buf.getvalue()


def emit(report, fmt: str, path: str | None = None):
    """Write ``report`` as JSON or CSV to ``path`` (stdout when None).

    CSV needs a table, i.e. a dict with ``columns`` and ``rows``. Raises
    :class:`EmitError` on I/O failure.
    """
    if fmt == "csv":
        if not (isinstance(report, dict) and "columns" in report and "rows" in report):
            raise UsageError("this report has no CSV form; use --format json")
        text = table_to_csv(report)
    else:
        text = dumps(report) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc}") from exc


def _table(columns, rows) -> dict:
    return {"columns": list(columns), "rows": [list(r) for r in rows]}


def _provenance(cfg: RunConfig) -> dict:
    out = {"version": __version__, "typo_ledger_applied": list(TYPO_LEDGER)}
    if cfg.params is not None:
        out["params"] = cfg.params.as_dict()
    if cfg.torus is not None:
        out["torus"] = {"d": cfg.torus.d,
                        "L": cfg.torus.L if cfg.torus.finite else "inf"}
    return out


# ---------------------------------------------------------------- parsing

def _add_model(p, torus=True, mc=False):
    g = p.add_argument_group("model")
    g.add_argument("-N", type=int, required=False, default=10, help="active size per colony")
    g.add_argument("-M", type=int, default=None, help="dormant size per colony (default N)")
    g.add_argument("--epsilon", default="0", help="active-to-dormant swap fraction")
    g.add_argument("--delta", default="0", help="dormant-to-active swap fraction")
    g.add_argument("--mu", type=float, default=0.01, help="mutation probability")
    g.add_argument("--nu", type=float, default=0.5, help="migration probability")
    if torus:
        g.add_argument("-d", type=int, default=1, help="lattice dimension")
        g.add_argument("-L", default="8", help="torus side, or 'inf'")
        g.add_argument("--kernel", default="nearest",
                       help="'nearest' or a JSON file of [offset, weight] pairs")


def _add_output(p, default_format):
    p.add_argument("--format", choices=("json", "csv"), default=default_format)
    p.add_argument("-o", "--output", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seedbank-ibd",
                                     description="IBD probabilities for a seed-bank stepping stone model")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", default=None, help="file of key=value defaults")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ibd", help="equilibrium IBD field")
    _add_model(p)
    p.add_argument("--method", choices=("spectral", "matrix", "fixed-point"), default="spectral")
    _add_output(p, "json")

    p = sub.add_parser("green", help="lattice Green function table")
    p.add_argument("-d", type=int, default=1)
    p.add_argument("-L", default="8", help="torus side, or 'inf'")
    p.add_argument("--z", default="0.5,0.9,0.99", help="comma-separated z values")
    p.add_argument("--sites", default=None,
                   help="semicolon-separated sites such as '0;1;2' or '0,0;1,0'")
    _add_output(p, "csv")

    p = sub.add_parser("asym", help="exact vs predicted slow seed-bank tables")
    _add_model(p)
    p.add_argument("--ladder", action="store_true",
                   help="emit the d=1 rho-ladder convergence table instead")
    p.add_argument("--r", type=float, default=0.5, help="limit parameter for --ladder")
    p.add_argument("--rhos", default="1e-2,1e-3,1e-4", help="rho ladder for --ladder")
    p.add_argument("--ys", default="0,0.5,1", help="scaled positions for --ladder")
    p.add_argument("--variant", choices=("corrected", "as-printed", "small-s"),
                   default="corrected")
    _add_output(p, "csv")

    p = sub.add_parser("zeta", help="second-moment report")
    _add_model(p)
    _add_output(p, "json")

    p = sub.add_parser("mc", help="Monte Carlo IBD estimates")
    _add_model(p)
    p.add_argument("--n-reps", type=int, default=10**5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--reference", action="store_true",
                   help="include spectral values and z-scores")
    _add_output(p, "json")

    p = sub.add_parser("single", help="single-colony transition row")
    _add_model(p, torus=False)
    p.add_argument("--i", type=int, required=True, help="active type-a count")
    p.add_argument("--j", type=int, required=True, help="dormant type-a count")
    _add_output(p, "csv")

    p = sub.add_parser("verify", help="cross-oracle verification suite")
    p.add_argument("--skip", action="append", default=[], choices=VERIFY_CHECK_GROUPS,
                   help="skip a check group (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="seed for random draws and MC")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                   help="override a tolerance")
    p.add_argument("-o", "--output", default=None, help="JSON output path")
    p.add_argument("--inject-r44-typo", action="store_true", help=argparse.SUPPRESS)
    return parser


def _config_tokens(parser, subcommand: str, path: str) -> list:
    """Translate a key=value file into option tokens for ``subcommand``."""
    subparser = parser._subparsers._group_actions[0].choices[subcommand]
    known = {}
    for action in subparser._actions:
        for opt in action.option_strings:
            known[opt.lstrip("-").replace("-", "_")] = (opt, action)
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise EmitError(f"cannot read config {path}: {exc}") from exc
    tokens = []
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known or key in ("h", "help", "config"):
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        opt, action = known[key]
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes"):
                tokens.append(opt)
            elif value.lower() not in ("0", "false", "no"):
                raise UsageError(f"{path}:{n}: {key} expects a boolean")
        else:
            tokens.extend([opt, value])
    return tokens


def _parse_L(text: str):
    if text.lower() in ("inf", "infinite", "infinity"):
        return INFINITE
    try:
        L = int(text)
    except ValueError as exc:
        raise UsageError(f"L must be an integer or 'inf', got {text!r}") from exc
    if L < 1:
        raise UsageError("L must be positive")
    return L


def _parse_kernel(value: str, d: int) -> MigrationKernel:
    if value == "nearest":
        return NEAREST_NEIGHBOUR
    try:
        pairs = json.loads(Path(value).read_text(encoding="utf-8"))
    except OSError as exc:
        raise EmitError(f"cannot read kernel file {value}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"kernel file {value} is not valid JSON") from exc
    kernel = MigrationKernel(tuple((tuple(np.atleast_1d(z)), w) for z, w in pairs))
    kernel.offsets(d)
    return kernel


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _model(ns, mc: bool = False) -> ModelParams:
    M = ns.N if ns.M is None else ns.M
    params = ModelParams(ns.N, M, ns.epsilon, ns.delta, ns.mu, ns.nu)
    if mc and not params.symmetric_swap:
        raise ParameterError("MC requires symmetric swap (epsilon == delta)")
    return params


def _tolerances(items) -> dict:
    tol = dict(DEFAULT_TOLERANCES)
    for item in items:
        if "=" not in item:
            raise UsageError(f"--tol expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        if k not in tol:
            raise UsageError(f"unknown tolerance {k!r}; known: {', '.join(sorted(tol))}")
        try:
            tol[k] = float(v)
        except ValueError as exc:
            raise UsageError(f"tolerance {k} must be a number") from exc
    return tol


def parse_args(argv=None) -> RunConfig:
    """Parse and validate ``argv`` into a :class:`RunConfig`.

    Raises ``SystemExit(2)`` on any validation failure (argparse errors
    included) and ``SystemExit(3)`` when a referenced file cannot be read.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.config:
            tokens = _config_tokens(parser, ns.subcommand, ns.config)
            i = argv.index(ns.subcommand)
            ns = parser.parse_args(argv[:i + 1] + tokens + argv[i + 1:])
        return _validate(ns)
    except (UsageError, ParameterError) as exc:
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: {exc}\n")
    except EmitError as exc:
        parser.exit(EXIT_IO, f"{parser.prog}: error: {exc}\n")


def _validate(ns) -> RunConfig:
    cmd = ns.subcommand
    cfg = RunConfig(cmd, format=getattr(ns, "format", "json"),
                    output=getattr(ns, "output", None), seed=getattr(ns, "seed", None),
                    threads=getattr(ns, "threads", None))
    if cfg.threads is not None and cfg.threads < 1:
        raise UsageError("--threads must be positive")
    if cmd in ("ibd", "asym", "zeta", "mc"):
        cfg.params = _model(ns, mc=(cmd == "mc"))
        cfg.torus = TorusSpec(ns.d, _parse_L(ns.L))
        cfg.kernel = _parse_kernel(ns.kernel, ns.d)
        if cmd != "asym":
            cfg.torus.require_finite()
    if cmd == "ibd":
        cfg.method = ns.method
    elif cmd == "green":
        cfg.torus = TorusSpec(ns.d, _parse_L(ns.L))
        zs = _floats(ns.z)
        if any(not -1 < z < 1 for z in zs):
            raise UsageError("every z must satisfy |z| < 1")
        cfg.options["z"] = zs
        cfg.options["sites"] = _parse_sites(ns.sites, cfg.torus)
    elif cmd == "asym":
        if cfg.params.N != cfg.params.M:
            raise UsageError("asym needs M = N")
        cfg.options.update(ladder=ns.ladder, r=ns.r, rhos=_floats(ns.rhos),
                           ys=_floats(ns.ys), variant=ns.variant)
        if not ns.ladder:
            cfg.torus.require_finite()
    elif cmd == "mc":
        if ns.n_reps < 1:
            raise UsageError("--n-reps must be positive")
        cfg.options.update(n_reps=ns.n_reps, reference=ns.reference)
    elif cmd == "single":
        M = ns.N if ns.M is None else ns.M
        cfg.params = ModelParams(ns.N, M, ns.epsilon, ns.delta, 0.5, 0.5)
        from .single_colony import FrequencyState
        cfg.options["state"] = FrequencyState(ns.i, ns.j, cfg.params.N, cfg.params.M)
    elif cmd == "verify":
        cfg.tolerances = _tolerances(ns.tol)
        cfg.options.update(skip=sorted(set(ns.skip)), inject_r44_typo=ns.inject_r44_typo)
        if "mc" not in ns.skip and cfg.seed is None:
            raise UsageError("verify needs --seed unless the mc checks are skipped")
        if cfg.seed is None:
            cfg.seed = 0
    return cfg


def _parse_sites(text, torus: TorusSpec) -> list:
    if text is None:
        top = 5 if not torus.finite else min(int(torus.L) - 1, 5)
        return [tuple([k] + [0] * (torus.d - 1)) for k in range(top + 1)]
    sites = []
    for chunk in text.split(";"):
        try:
            x = tuple(int(v) for v in chunk.split(","))
        except ValueError as exc:
            raise UsageError(f"bad site {chunk!r}") from exc
        if len(x) != torus.d:
            raise UsageError(f"site {chunk!r} does not have {torus.d} coordinates")
        sites.append(x)
    return sites


# ---------------------------------------------------------------- commands

def _site_columns(d):
    return [f"x_{i + 1}" for i in range(d)]


def cmd_ibd(cfg: RunConfig):
    fld = compute_ibd_field(cfg.params, cfg.torus, cfg.kernel, method=cfg.method)
    rows = [(list(x), [float(v) for v in psi]) for x, psi in fld.rows()]
    if cfg.format == "csv":
        return _table(_site_columns(cfg.torus.d) + list(COMPONENT_LABELS),
                      [x + psi for x, psi in rows])
    out = _provenance(cfg)
    out.update(method=cfg.method, flags=list(fld.flags),
               field=[{"x": x, "psi": psi} for x, psi in rows],
               psi00=[float(v) for v in fld.psi00])
    return out


def cmd_green(cfg: RunConfig):
    from . import green
    torus = cfg.torus
    rows = []
    for x in cfg.options["sites"]:
        coeff = None
        if torus.finite and torus.d == 1:
            coeff = green.expansion_coeffs_1d(x[0], int(torus.L))
        elif torus.finite:
            coeff = green.expansion_coeffs_torus(x, torus)
        for z in cfg.options["z"]:
            if torus.finite:
                G = (green.green_1d_torus(x[0], z, int(torus.L)) if torus.d == 1
                     else green.green_torus_fourier(x, z, torus))
                dG = green.green_derivative(x, z, torus) if z != 0 or torus.d > 1 else math.nan
            else:
                G = green.green_infinite(x, z, torus.d)
                dG = green.green_derivative(x, z, torus) if torus.d == 1 and z != 0 else math.nan
            rows.append(list(x) + [z, G, dG,
                                   coeff.C if coeff else math.nan,
                                   coeff.Cbar if coeff else math.nan])
    return _table(_site_columns(torus.d) + ["z", "G", "dG", "C_L", "Cbar_L"], rows)


def cmd_asym(cfg: RunConfig):
    from . import asymptotics as asy
    o = cfg.options
    if o["ladder"]:
        rows = asy.line_regime_ladder(o["r"], o["rhos"], o["ys"], o["variant"])
        cols = ["rho", "y", "x", "N", "nu", "L", "psi4", "psi4_limit", "psi4_err",
                "phi2", "phi2_limit", "phi2_err", "phi4", "phi4_limit", "phi4_err"]
        if cfg.format == "json":
            out = _provenance(RunConfig("asym"))
            out["ladder"] = rows
            out["orders"] = _ladder_orders(rows)
            return out
        return _table(cols, [[r[c] for c in cols] for r in rows])
    rows = asy.expansion_table(cfg.params, cfg.torus)
    cols = ["psi4", "psi4_pred", "psi4_relerr", "phi2", "phi2_pred", "phi2_relerr",
            "phi4", "phi4_pred", "phi4_relerr"]
    if cfg.format == "json":
        out = _provenance(cfg)
        out["table"] = rows
        return out
    return _table(_site_columns(cfg.torus.d) + ["geometry"] + cols,
                  [r["x"] + [r["geometry"]] + [r[c] for c in cols] for r in rows])


def _ladder_orders(rows) -> list:
    """Observed orders ``log(err_k / err_{k+1}) / log(rho_k / rho_{k+1})``."""
    out = []
    by_y = {}
    for r in rows:
        by_y.setdefault(r["y"], []).append(r)
    for y, seq in sorted(by_y.items()):
        for a, b in zip(seq, seq[1:]):
            lr = math.log(a["rho"] / b["rho"])
            out.append({"y": y, "rho_from": a["rho"], "rho_to": b["rho"],
                        **{f"{k}_order": math.log(a[f"{k}_err"] / b[f"{k}_err"]) / lr
                           for k in ("psi4", "phi2", "phi4")}})
    return out


def cmd_zeta(cfg: RunConfig):
    from .second_moment import second_moment_report
    rep = second_moment_report(cfg.params, cfg.torus, cfg.kernel)
    out = _provenance(cfg)
    out.update(rep.as_dict())
    return out


def cmd_mc(cfg: RunConfig):
    from .core import enumerate_sites
    from .mc import estimate_ibd_field
    est, se, diag = estimate_ibd_field(cfg.params, cfg.torus, cfg.kernel,
                                       cfg.options["n_reps"], cfg.seed, cfg.threads)
    ref = None
    if cfg.options["reference"]:
        ref = compute_ibd_field(cfg.params, cfg.torus, cfg.kernel).values
    sites = []
    for x in enumerate_sites(cfg.torus):
        entry = {"x": list(x), "estimate": est[x], "stderr": se[x]}
        if ref is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                z = (est[x] - ref[x]) / se[x]
            entry.update(reference=ref[x], z=[float(v) if math.isfinite(v) else None for v in z])
        sites.append(entry)
    out = _provenance(cfg)
    out.update(sites=sites, diagnostics=diag)
    if ref is not None:
        zs = [abs(v) for s in sites for v in s["z"] if v is not None]
        out["max_abs_z"] = max(zs) if zs else 0.0
    return out


def cmd_single(cfg: RunConfig):
    from .single_colony import transition_row
    row = transition_row(cfg.options["state"], cfg.params)
    rows = [[a, b, float(row[a, b])] for a in range(row.shape[0]) for b in range(row.shape[1])]
    if cfg.format == "json":
        out = _provenance(cfg)
        out.pop("params")
        st = cfg.options["state"]
        out.update(N=cfg.params.N, M=cfg.params.M, epsilon=float(cfg.params.epsilon),
                   delta=float(cfg.params.delta), state=[st.i, st.j],
                   row=[{"i": a, "j": b, "p": p} for a, b, p in rows])
        return out
    return _table(["i_next", "j_next", "probability"], rows)


# ---------------------------------------------------------------- verify

VERIFY_CHECK_GROUPS = ("ibd", "green", "u", "abg", "delta", "zeta", "sanity", "mc")


@dataclass
class CheckResult:
    name: str
    group: str
    value: float
    tolerance: str
    passed: bool

    def as_dict(self):
        return {"name": self.name, "group": self.group, "value": self.value,
                "tolerance": self.tolerance, "passed": self.passed}


def _r44_typo(params, P, Q):
    """Polynomials with a deliberately corrupted ``r44`` (verification fixture)."""
    from .spectral import r_values
    r0, r14, r24, r34, r44 = r_values(params, P, Q)
    return r0, r14, r24, r34, r44 * (1 + params.m * params.dlt * (1 - params.eps))


def _draw_params(rng, slow=False):
    mu = 10 ** rng.uniform(-2, math.log10(0.3))
    nu = rng.uniform(0.05, 0.95)
    N = int(rng.integers(2, 51))
    e = 0 if slow else round(rng.uniform(0, 0.4), 2)
    return ModelParams(N, N, e, e, mu, nu)


def _verify_ibd(cfg, rng, r_func):
    tol = cfg.tolerances["ibd_agreement"]
    worst = {"spectral_vs_matrix": 0.0, "spectral_vs_fixed_point": 0.0,
             "matrix_vs_fixed_point": 0.0}
    fields = []
    for d, L, n in ((1, 8, 3), (2, 4, 2)):
        torus = TorusSpec(d, L)
        for _ in range(n):
            p = _draw_params(rng)
            s = compute_ibd_field(p, torus, method="spectral", r_func=r_func).values
            m = compute_ibd_field(p, torus, method="matrix").values
            f = compute_ibd_field(p, torus, method="fixed-point").values
            worst["spectral_vs_matrix"] = max(worst["spectral_vs_matrix"], np.abs(s - m).max())
            worst["spectral_vs_fixed_point"] = max(worst["spectral_vs_fixed_point"],
                                                   np.abs(s - f).max())
            worst["matrix_vs_fixed_point"] = max(worst["matrix_vs_fixed_point"],
                                                 np.abs(m - f).max())
            fields.extend([s, m, f])
    out = [CheckResult(f"ibd_{k}", "ibd", float(v), f"<= {tol:g}", bool(v <= tol))
           for k, v in worst.items()]
    return out, fields


def _verify_green(cfg, rng):
    from . import green
    tol = cfg.tolerances["green_identity"]
    torus = TorusSpec(2, 6)
    worst_sum = worst_conv = worst_1d = 0.0
    for _ in range(5):
        z, zp = rng.uniform(-0.95, 0.95, size=2)
        x = tuple(int(v) for v in rng.integers(0, 6, size=2))
        total = green.green_torus_field(z, torus).sum()
        worst_sum = max(worst_sum, abs(total - 1 / (1 - z)) * (1 - z))
        lhs, rhs = green.convolution_identity_check(x, z, zp, torus)
        worst_conv = max(worst_conv, abs(lhs - rhs) / max(1.0, abs(rhs)))
        x1 = int(rng.integers(0, 6))
        c = green.green_1d_torus(x1, z, 12)
        f = green.green_torus_fourier((x1,), z, TorusSpec(1, 12))
        zi = float(rng.uniform(-0.8, 0.8))
        ci = green.green_1d_infinite(x1, zi)
        si = green.green_series_1d(x1, zi, lmax=400)
        worst_1d = max(worst_1d, abs(c - f) / max(1.0, abs(c)), abs(ci - si) / max(1.0, abs(ci)))
    return [CheckResult(n, "green", float(v), f"<= {tol:g}", bool(v <= tol))
            for n, v in (("green_total_mass", worst_sum), ("green_convolution", worst_conv),
                         ("green_1d_closed_vs_fourier_vs_series", worst_1d))]


def _verify_u(cfg, rng):
    from .second_moment import u_matrix, u_matrix_exact
    tol = cfg.tolerances["u_transcription"]
    worst = 0.0
    for _ in range(20):
        N = int(rng.integers(2, 51))
        M = int(rng.integers(2, 51))
        e = round(float(rng.uniform(0, 0.4)), 3)
        dlt = Fraction(str(e)) * N / M
        if dlt >= 1:
            dlt = Fraction(0)
            e = 0
        p = ModelParams(N, M, e, dlt, 10 ** rng.uniform(-3, math.log10(0.3)),
                        rng.uniform(0.05, 0.95))
        Ue = u_matrix_exact(p)
        worst = max(worst, np.abs(u_matrix(p) - Ue).max() / np.abs(Ue).max())
    return [CheckResult("u_closed_form_vs_inverse", "u", float(worst), f"<= {tol:g}",
                        bool(worst <= tol))]


def _verify_abg(cfg, rng):
    from .asymptotics import abg_field_green, abg_field_spectral
    tol = cfg.tolerances["abg_relative"]
    worst = 0.0
    for d, L in ((1, 8), (2, 4)):
        torus = TorusSpec(d, L)
        p = _draw_params(rng, slow=True)
        s = abg_field_spectral(p, torus)
        g = abg_field_green(p, torus)
        for a, b in ((s.alpha, g.alpha), (s.beta, g.beta), (s.gamma, g.gamma)):
            worst = max(worst, np.abs(a - b).max() / max(1.0, np.abs(a).max()))
    return [CheckResult("abg_spectral_vs_green", "abg", float(worst), f"<= {tol:g}",
                        bool(worst <= tol))]


def delta_contraction(L=8, mu=0.05, nu=0.5, N=10, deltas=(1e-2, 1e-3)):
    """Residuals of the first-order small-delta expansion and their ratio."""
    from .asymptotics import psi_small_delta_field
    torus = TorusSpec(1, L)
    res = []
    for dl in deltas:
        p = ModelParams(N, N, dl, dl, mu, nu)
        exact = compute_ibd_field(p, torus).values
        res.append(float(np.abs(exact - psi_small_delta_field(dl, p, torus)).max()))
    return res, res[0] / res[1]


def _verify_delta(cfg):
    lo, hi = cfg.tolerances["contraction_min"], cfg.tolerances["contraction_max"]
    _, factor = delta_contraction()
    return [CheckResult("delta_expansion_contraction", "delta", factor,
                        f"in [{lo:g}, {hi:g}]", bool(lo <= factor <= hi))]


def _verify_zeta(cfg):
    import warnings
    from .second_moment import zeta_closed_form, zeta_empirical, zeta_quadratic_fit
    tol = cfg.tolerances["zeta_relative"]
    p = ModelParams(10, 10, 0.1, 0.1, 0.05, 0.5)
    torus = TorusSpec(1, 200)
    zc = zeta_closed_form(p, torus)[3]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ze = zeta_empirical(p, torus)[0][3]
    zf = zeta_quadratic_fit(p, torus)[3]
    return [CheckResult("zeta_empirical_vs_closed", "zeta", float(abs(ze - zc) / abs(zc)),
                        f"<= {tol:g}", bool(abs(ze - zc) <= tol * abs(zc))),
            CheckResult("zeta_fit_vs_closed", "zeta", float(abs(zf - zc) / abs(zc)),
                        f"<= {tol:g}", bool(abs(zf - zc) <= tol * abs(zc)))]


def _verify_sanity(fields):
    lo = min(float(f.min()) for f in fields) if fields else 0.0
    hi = max(float(f.max()) for f in fields) if fields else 0.0
    p = ModelParams(10, 10, 0, 0, 1e-6, 0.5)
    from .spectral import psi00
    p4 = float(psi00(p, TorusSpec(1, 4))[3])
    pred = 2 * 10 * 4 * 1e-6
    ratio = (1 - p4) / pred
    return [CheckResult("probabilities_in_unit_interval", "sanity", hi if lo >= 0 else lo,
                        "in [0, 1]", bool(lo >= -1e-15 and hi <= 1 + 1e-15)),
            CheckResult("low_mutation_origin", "sanity", abs(ratio - 1),
                        "<= 0.05", bool(abs(1 - p4) <= 1e-3 and abs(ratio - 1) <= 0.05))]


def _verify_mc(cfg):
    from .mc import estimate_ibd_field
    zmax = cfg.tolerances["mc_z"]
    p = ModelParams(10, 10, 0.1, 0.1, 0.05, 0.3)
    torus = TorusSpec(1, 4)
    est, se, diag = estimate_ibd_field(p, torus, n_reps=20000, seed=cfg.seed,
                                       threads=cfg.threads)
    ref = compute_ibd_field(p, torus).values
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (est - ref) / np.where(se > 0, se, 1), 0.0)
    worst = float(np.abs(z).max())
    return [CheckResult("mc_vs_spectral_max_abs_z", "mc", worst, f"< {zmax:g}",
                        bool(worst < zmax and diag["truncated"] == 0))]


def run_verify(cfg: RunConfig, r_func=None, stream=None) -> int:
    """Run the cross-oracle suite, print a PASS/FAIL table and emit JSON.

    Returns the exit code: 0 when every check passes, 1 otherwise.
    """
    stream = sys.stdout if stream is None else stream
    skip = set(cfg.options.get("skip", ()))
    if r_func is None and cfg.options.get("inject_r44_typo"):
        r_func = _r44_typo
    rng = np.random.default_rng(cfg.seed)
    results, fields = [], []
    if "ibd" not in skip:
        res, fields = _verify_ibd(cfg, rng, r_func)
        results += res
    if "green" not in skip:
        results += _verify_green(cfg, rng)
    if "u" not in skip:
        results += _verify_u(cfg, rng)
    if "abg" not in skip:
        results += _verify_abg(cfg, rng)
    if "delta" not in skip:
        results += _verify_delta(cfg)
    if "zeta" not in skip:
        results += _verify_zeta(cfg)
    if "sanity" not in skip:
        results += _verify_sanity(fields)
    if "mc" not in skip:
        results += _verify_mc(cfg)
    width = max((len(r.name) for r in results), default=10)
    for r in results:
        stream.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  "
                     f"{r.value:.3e}  ({r.tolerance})\n")
    ok = all(r.passed for r in results)
    stream.write(f"{sum(r.passed for r in results)}/{len(results)} checks passed\n")
    report = {"checks": [r.as_dict() for r in results], "all_passed": ok,
              "seed": cfg.seed, "skipped": sorted(skip),
              "tolerances": cfg.tolerances, "typo_ledger_applied": list(TYPO_LEDGER),
              "version": __version__}
    emit(report, "json", cfg.output if cfg.output is not None else None)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"ibd": cmd_ibd, "green": cmd_green, "asym": cmd_asym, "zeta": cmd_zeta,
            "mc": cmd_mc, "single": cmd_single}


def main(argv=None) -> int:
    cfg = parse_args(argv)
    try:
        if cfg.subcommand == "verify":
            return run_verify(cfg)
        report = COMMANDS[cfg.subcommand](cfg)
        emit(report, cfg.format, cfg.output)
        return EXIT_OK
    except (UsageError, ParameterError) as exc:
        sys.stderr.write(f"seedbank-ibd: error: {exc}\n")
        return EXIT_USAGE
    except EmitError as exc:
        sys.stderr.write(f"seedbank-ibd: error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
