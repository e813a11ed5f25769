"""Command-line experiment runner.

Each subcommand evaluates one operation over a parameter grid and writes a
CSV plus ``<output>.manifest.json``. Parameters come from a flat JSON config
(``--config``) and/or flags; flags win. Output is deterministic in
(config, seed, version) and does not depend on SPARSECODE_THREADS.

Exit codes: 0 ok, 1 unexpected failure, 2 usage/config error, 3 size guard.
Errors are reported as a single JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Callable, Optional

from . import __version__
from . import bounds, montecarlo
from .channel import BEC, BSC, ChannelSpec
from .ensemble import BERNOULLI, EnsembleSpec, TypicalityParams, parse_kind, round_row_weight
from .errors import SizeGuardError
from .rng import DEFAULT_SEED

COMMANDS = (
    "bound", "rate-curve", "exponent", "bec-bound", "simulate",
    "rank-study", "convergence", "sweep-density", "oracle-check",
)

HEADERS = {
    "bound": "channel,eps,ensemble,n,k,rho_or_w,window,value,pe_upper",
    "rate-curve": "n,eps,target_pe,ensemble,rho_or_w,k_star,rate,capacity,normal_approx_rate",
    "exponent": "rho_or_w,R_over_C,slope_bits,r_squared,n_min,n_max",
    "exponent-points": "rho_or_w,R_over_C,n,k,pe_upper,log2_pe_upper",
    "bec-bound": "eps,ensemble,n,k,rho_or_w,estimator,trials,window,value,pe_upper,std_error",
    "simulate": "channel,eps,ensemble,n,k,rho_or_w,trials,mean,std_error,rejections,bound_value",
    "rank-study": "m,k,ensemble,rho_or_w,trials,mean_rank,std_error",
    "convergence": "n,k,matrices,delta,fraction_above_delta",
    "sweep-density": "channel,eps,n,k,rho,value,pe_upper,log2_pe_upper",
    "oracle-check": "channel,eps,ensemble,n,k,rho_or_w,bound,exact,gap",
}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- parsing

def parse_int_list(value: Any) -> list[int]:
    """Accept 7, [1, 2], "1,2,3" or an inclusive grid "start:stop:step"."""
    if isinstance(value, bool):
        raise UsageError(f"expected integers, got {value!r}")
    if isinstance(value, int):
        return [value]
    if isinstance(value, list):
        return [x for v in value for x in parse_int_list(v)]
    text = str(value).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid must be start:stop:step, got {text!r}")
        start, stop, step = (int(p) for p in parts)
        if step <= 0 or stop < start:
            raise UsageError(f"empty or invalid grid {text!r}")
        return list(range(start, stop + 1, step))
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected integers, got {text!r}") from None


def parse_float_list(value: Any) -> list[float]:
    if isinstance(value, bool):
        raise UsageError(f"expected numbers, got {value!r}")
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, list):
        return [x for v in value for x in parse_float_list(v)]
    try:
        return [float(t) for t in str(value).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected numbers, got {value!r}") from None


def _scalar(conv):
    def parse(value):
        if isinstance(value, (list, bool)):
            raise UsageError(f"expected a single value, got {value!r}")
        try:
            return conv(value)
        except (TypeError, ValueError):
            raise UsageError(f"cannot parse {value!r}") from None
    return parse


def _int(value):
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(value)
    return int(value)


@dataclass(frozen=True)
class Param:
    parse: Callable[[Any], Any]
    default: Any = None
    help: str = ""
    choices: Optional[tuple[str, ...]] = None


INTS = parse_int_list
FLOATS = parse_float_list
INT = _scalar(_int)
FLOAT = _scalar(float)
STR = _scalar(str)

_CHANNEL = Param(STR, BSC, "channel", (BSC, BEC))
_ENSEMBLE = Param(_scalar(parse_kind), BERNOULLI, "ensemble kind: bernoulli or row_regular")
_ESTIMATOR = Param(STR, "jensen", "BEC rank estimator", ("jensen", "direct"))
_TRIALS = Param(INT, 200, "Monte Carlo trials")
_WINDOW = Param(FLOAT, None, "noise-weight window half-width delta (default: full sum)")

PARAMS: dict[str, dict[str, Param]] = {
    "bound": {
        "channel": _CHANNEL, "eps": Param(FLOATS, None, "channel parameter(s)"),
        "n": Param(INTS, None, "blocklength(s)"), "k": Param(INTS, None, "message length(s)"),
        "rate": Param(FLOAT, None, "derive k = floor(n*rate + 1/2) instead of --k"),
        "ensemble": _ENSEMBLE, "rho": Param(FLOATS, None, "density(ies)"),
        "w": Param(INTS, None, "row weight(s) for row_regular"),
        "window": _WINDOW, "estimator": _ESTIMATOR, "trials": _TRIALS,
    },
    "rate-curve": {
        "channel": _CHANNEL, "eps": Param(FLOAT, None, "channel parameter"),
        "target_pe": Param(FLOAT, None, "target error probability"),
        "n": Param(INTS, None, "blocklength grid"), "ensemble": _ENSEMBLE,
        "rho": Param(FLOATS, None, "density(ies)"),
        "window": _WINDOW, "estimator": _ESTIMATOR, "trials": _TRIALS,
    },
    "exponent": {
        "channel": _CHANNEL, "eps": Param(FLOAT, None, "channel parameter"),
        "r_over_c": Param(FLOATS, None, "rate(s) as a fraction of capacity"),
        "n": Param(INTS, None, "blocklength grid"), "ensemble": _ENSEMBLE,
        "rho": Param(FLOATS, None, "density(ies)"),
        "window": _WINDOW, "estimator": _ESTIMATOR, "trials": _TRIALS,
    },
    "bec-bound": {
        "eps": Param(FLOATS, None, "erasure probability(ies)"),
        "n": Param(INTS, None, "blocklength(s)"), "k": Param(INTS, None, "message length(s)"),
        "rate": Param(FLOAT, None, "derive k from n"),
        "ensemble": _ENSEMBLE, "rho": Param(FLOATS, None, "density(ies)"),
        "w": Param(INTS, None, "row weight(s)"),
        "window": _WINDOW, "estimator": _ESTIMATOR, "trials": _TRIALS,
    },
    "simulate": {
        "channel": _CHANNEL, "eps": Param(FLOAT, None, "channel parameter"),
        "n": Param(INTS, None, "blocklength(s)"), "k": Param(INTS, None, "message length(s)"),
        "rate": Param(FLOAT, None, "derive k from n"),
        "ensemble": _ENSEMBLE, "rho": Param(FLOATS, None, "density(ies)"),
        "w": Param(INTS, None, "row weight(s)"), "trials": _TRIALS,
        "eta": Param(FLOAT, None, "typicality tolerance; omit to disable filtering"),
    },
    "rank-study": {
        "m": Param(INTS, None, "row count(s)"),
        "k": Param(INTS, None, "column count(s); defaults to m"),
        "ensemble": _ENSEMBLE, "rho": Param(FLOAT, None, "fixed density"),
        "c": Param(FLOAT, None, "use rho = c ln(k)/k"),
        "w": Param(INT, None, "fixed row weight"), "trials": _TRIALS,
    },
    "convergence": {
        "channel": _CHANNEL, "eps": Param(FLOAT, None, "channel parameter"),
        "rate": Param(FLOAT, None, "code rate"), "n": Param(INTS, None, "blocklength grid"),
        "ensemble": _ENSEMBLE, "rho": Param(FLOAT, 0.3, "density"),
        "matrices": Param(INT, 50, "matrices per blocklength"),
        "delta": Param(FLOAT, 0.1, "error-probability threshold"),
        "erasure_trials": Param(INT, 2000, "erasure patterns per matrix (BEC)"),
    },
    "sweep-density": {
        "channel": _CHANNEL, "eps": Param(FLOAT, None, "channel parameter"),
        "r_over_c": Param(FLOAT, None, "rate as a fraction of capacity"),
        "n": Param(INTS, None, "blocklength grid"),
        "gamma": Param(FLOAT, None, "BSC schedule rho = n^-gamma"),
        "c": Param(FLOAT, None, "BEC schedule rho = c ln(n)/n"),
        "estimator": _ESTIMATOR, "trials": _TRIALS,
    },
    "oracle-check": {
        "channel": _CHANNEL, "eps": Param(FLOATS, "0.05,0.11,0.25", "channel parameter(s)"),
        "n": Param(INTS, "1:4:1", "blocklengths"), "k": Param(INTS, "1:3:1", "message lengths"),
        "rho": Param(FLOATS, "0.1,0.3,0.5", "densities"),
        "estimator": Param(STR, "direct", "BEC rank estimator", ("jensen", "direct")),
        "trials": Param(INT, 20000, "Monte Carlo trials (BEC)"),
    },
}

REQUIRED = {
    "bound": ("eps", "n"),
    "rate-curve": ("eps", "target_pe", "n", "rho"),
    "exponent": ("eps", "r_over_c", "n", "rho"),
    "bec-bound": ("eps", "n"),
    "simulate": ("eps", "n"),
    "rank-study": ("m",),
    "convergence": ("eps", "rate", "n"),
    "sweep-density": ("eps", "r_over_c", "n"),
    "oracle-check": (),
}

COMMON = {
    "seed": Param(INT, DEFAULT_SEED, "master seed"),
    "output": Param(STR, None, "CSV output path"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(2, {"error": "usage", "message": message})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsecode", description="Sparse random linear code bounds and simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=f"write {cmd} CSV")
        p.add_argument("--config", help="flat JSON file of parameters; flags override it")
        for name, spec in {**PARAMS[cmd], **COMMON}.items():
            p.add_argument(
                "--" + name.replace("_", "-"), dest=name, default=argparse.SUPPRESS,
                choices=spec.choices, help=spec.help,
            )
    return parser


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    """Merge defaults < config file < flags, parse every value, reject unknown keys."""
    schema = {**PARAMS[command], **COMMON}
    merged: dict[str, Any] = {}
    for source in (file_values, flag_values):
        for raw_key, value in source.items():
            key = raw_key.replace("-", "_")
            if key == "command":
                if value != command:
                    raise UsageError(f"config is for {value!r}, not {command!r}")
                continue
            if key not in schema:
                raise UsageError(f"unknown key {raw_key!r} for {command}")
            merged[key] = value
    out = {}
    for key, spec in schema.items():
        value = merged.get(key, spec.default)
        if value is None:
            out[key] = None
            continue
        parsed = spec.parse(value)
        if spec.choices and parsed not in spec.choices:
            raise UsageError(f"{key} must be one of {spec.choices}")
        out[key] = parsed
    for key in REQUIRED[command] + ("output",):
        if out.get(key) is None:
            raise UsageError(f"missing required parameter {key!r}")
    _validate(command, out)
    return out


def _validate(command: str, cfg: dict) -> None:
    def check_prob(name, values):
        for v in values if isinstance(values, list) else [values]:
            if not 0.0 <= v < 1.0:
                raise UsageError(f"{name} must lie in [0, 1), got {v}")

    for key in ("eps", "rho", "target_pe"):
        if cfg.get(key) is not None:
            check_prob(key, cfg[key])
    if cfg.get("delta") is not None and not 0.0 <= cfg["delta"] <= 1.0:
        raise UsageError(f"delta must lie in [0, 1], got {cfg['delta']}")
    for key in ("n", "m", "trials", "matrices", "erasure_trials"):
        vals = cfg.get(key)
        if vals is not None and any(v < 1 for v in (vals if isinstance(vals, list) else [vals])):
            raise UsageError(f"{key} must be positive")
    for key in ("k", "w"):
        vals = cfg.get(key)
        if vals is not None and any(v < 0 for v in (vals if isinstance(vals, list) else [vals])):
            raise UsageError(f"{key} must be non-negative")
    if command in ("bound", "bec-bound", "simulate"):
        if (cfg.get("k") is None) == (cfg.get("rate") is None):
            raise UsageError("give exactly one of k or rate")
        if cfg["ensemble"] == BERNOULLI:
            if cfg.get("rho") is None:
                raise UsageError("the Bernoulli ensemble needs rho")
        elif (cfg.get("rho") is None) == (cfg.get("w") is None):
            raise UsageError("row_regular needs exactly one of rho or w")
    if command == "rank-study":
        given = [cfg.get(x) is not None for x in ("rho", "c", "w")]
        if sum(given) != 1:
            raise UsageError("give exactly one of rho, c or w")
        if cfg["w"] is not None and cfg["ensemble"] == BERNOULLI:
            raise UsageError("w applies to row_regular only")
        if cfg["k"] is not None and len(cfg["k"]) not in (1, len(cfg["m"])):
            raise UsageError("k must be a single value or match the length of m")
    if command == "sweep-density":
        need = "gamma" if cfg["channel"] == BSC else "c"
        if cfg.get(need) is None:
            raise UsageError(f"the {cfg['channel']} sweep needs {need}")
    if command == "oracle-check":
        if max(cfg["n"]) > 4 or max(cfg["k"]) > 3:
            raise SizeGuardError("oracle-check.n<=4,k<=3", "oracle grid is limited to n<=4, k<=3")


# ---------------------------------------------------------------- formatting

def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def grid_text(values: list) -> str:
    """Arithmetic integer grids of 3+ points render as start:stop:step, other
    lists comma-separated."""
    if len(values) >= 3 and all(isinstance(v, int) for v in values):
        step = values[1] - values[0]
        if step > 0 and all(b - a == step for a, b in zip(values, values[1:])):
            return f"{values[0]}:{values[-1]}:{step}"
    return ",".join(repr(v) for v in values)


def config_echo(command: str, cfg: dict) -> dict:
    out: dict[str, Any] = {"command": command}
    for key, value in cfg.items():
        if value is None:
            continue
        if isinstance(value, list):
            value = value[0] if len(value) == 1 else grid_text(value)
        out[key] = value
    return out


def csv_text(header: str, rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header.split(","))
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- execution

def thread_count() -> int:
    raw = os.environ.get("SPARSECODE_THREADS", "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"SPARSECODE_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise UsageError("SPARSECODE_THREADS must be >= 0")
    return value or (os.cpu_count() or 1)


def pmap(fn: Callable, items: list) -> list:
    """Map in grid order; results never depend on the thread count."""
    threads = min(thread_count(), max(1, len(items)))
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class Run:
    """Per-invocation state: resolved config plus the rounding log."""

    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.roundings: dict[tuple, int] = {}

    def spec(self, n: int, k: int, rho: Optional[float] = None, w: Optional[int] = None) -> EnsembleSpec:
        kind = self.cfg.get("ensemble") or BERNOULLI
        if kind == BERNOULLI:
            return EnsembleSpec.bernoulli(n, k, rho)
        if w is not None:
            return EnsembleSpec.row_regular(n, k, w)
        w = round_row_weight(k, rho)
        self.roundings[(k, rho)] = w
        return EnsembleSpec.row_regular(n, k, w)

    def ks(self, n: int) -> list[int]:
        if self.cfg.get("rate") is not None:
            return [bounds.rate_to_k(n, self.cfg["rate"])]
        ks = [k for k in self.cfg["k"] if k <= n] if self.cfg.get("k") is not None else []
        if self.cfg.get("k") is not None and not ks:
            raise UsageError(f"no k <= n={n}")
        return ks

    def densities(self) -> list[tuple[Optional[float], Optional[int]]]:
        if self.cfg.get("w") is not None and self.cfg.get("ensemble") != BERNOULLI:
            return [(None, w) for w in self.cfg["w"]]
        return [(rho, None) for rho in self.cfg["rho"]]

    def rounding_log(self) -> list[dict]:
        return [{"k": k, "rho": rho, "row_weight": w} for (k, rho), w in sorted(self.roundings.items())]


def _cmd_bound(run: Run) -> dict[str, str]:
    cfg = run.cfg
    points = [
        (eps, n, k, rho, w)
        for eps in cfg["eps"] for rho, w in run.densities() for n in cfg["n"] for k in run.ks(n)
    ]
    specs = [run.spec(n, k, rho, w) for eps, n, k, rho, w in points]
    channel = cfg["channel"]

    def task(i):
        eps = points[i][0]
        res = bounds.channel_bound(
            specs[i], ChannelSpec(channel, eps), cfg["window"], cfg["estimator"], cfg["trials"], cfg["seed"]
        )
        return res

    results = pmap(task, list(range(len(points))))
    rows = [
        [channel, p[0], s.kind, s.n, s.k, s.rho_or_w, cfg["window"], r.value, r.pe_upper]
        for p, s, r in zip(points, specs, results)
    ]
    return {cfg["output"]: csv_text(HEADERS["bound"], rows)}


def _cmd_bec_bound(run: Run) -> dict[str, str]:
    cfg = run.cfg
    points = [
        (eps, n, k, rho, w)
        for eps in cfg["eps"] for rho, w in run.densities() for n in cfg["n"] for k in run.ks(n)
    ]
    specs = [run.spec(n, k, rho, w) for eps, n, k, rho, w in points]

    def task(i):
        return bounds.bec_bound(specs[i], points[i][0], cfg["estimator"], cfg["trials"], cfg["seed"], cfg["window"])

    results = pmap(task, list(range(len(points))))
    rows = [
        [p[0], s.kind, s.n, s.k, s.rho_or_w, cfg["estimator"], cfg["trials"], cfg["window"],
         r.value, r.pe_upper, r.std_error]
        for p, s, r in zip(points, specs, results)
    ]
    return {cfg["output"]: csv_text(HEADERS["bec-bound"], rows)}


def _cmd_rate_curve(run: Run) -> dict[str, str]:
    cfg = run.cfg
    channel = ChannelSpec(cfg["channel"], cfg["eps"])
    points = [(rho, n) for rho in cfg["rho"] for n in cfg["n"]]

    def task(p):
        rho, n = p
        return bounds.max_rate(
            n, channel, cfg["ensemble"], rho, cfg["target_pe"], cfg["window"],
            cfg["estimator"], cfg["trials"], cfg["seed"],
        )

    results = pmap(task, points)
    cap = channel.capacity()
    rows = []
    for (rho, n), rp in zip(points, results):
        rho_or_w: Any = rho
        if cfg["ensemble"] != BERNOULLI:
            rho_or_w = run.spec(n, rp.k_star, rho).row_weight
        normal = None
        if channel.kind == BSC and 0.0 < cfg["eps"] < 0.5:
            normal = bounds.normal_approx_rate(n, cfg["eps"], cfg["target_pe"])
        rows.append([n, cfg["eps"], cfg["target_pe"], cfg["ensemble"], rho_or_w, rp.k_star, rp.rate, cap, normal])
    return {cfg["output"]: csv_text(HEADERS["rate-curve"], rows)}


def points_path(output: str) -> str:
    stem, ext = os.path.splitext(output)
    return f"{stem}_points{ext or '.csv'}"


def _cmd_exponent(run: Run) -> dict[str, str]:
    cfg = run.cfg
    channel = ChannelSpec(cfg["channel"], cfg["eps"])
    cap = channel.capacity()
    points = [(rho, r, n) for rho in cfg["rho"] for r in cfg["r_over_c"] for n in cfg["n"]]
    specs = [run.spec(n, bounds.rate_to_k(n, r * cap), rho) for rho, r, n in points]

    def task(i):
        return bounds.channel_bound(specs[i], channel, cfg["window"], cfg["estimator"], cfg["trials"], cfg["seed"])

    results = pmap(task, list(range(len(points))))
    point_rows = []
    curves: dict[tuple, list] = {}
    for (rho, r, n), s, res in zip(points, specs, results):
        point_rows.append([rho, r, n, s.k, res.pe_upper, res.log2_pe_upper])
        curves.setdefault((rho, r), []).append((n, res.log2_pe_upper))
    rows = []
    for (rho, r), pts in curves.items():
        fit = bounds.exponent_fit(pts, log2_domain=True)
        ns = [p[0] for p in pts]
        rows.append([rho, r, fit.slope_bits_per_symbol, fit.r_squared, min(ns), max(ns)])
    return {
        cfg["output"]: csv_text(HEADERS["exponent"], rows),
        points_path(cfg["output"]): csv_text(HEADERS["exponent-points"], point_rows),
    }


def _cmd_simulate(run: Run) -> dict[str, str]:
    cfg = run.cfg
    channel = ChannelSpec(cfg["channel"], cfg["eps"])
    points = [(n, k, rho, w) for rho, w in run.densities() for n in cfg["n"] for k in run.ks(n)]
    specs = [run.spec(n, k, rho, w) for n, k, rho, w in points]

    def task(i):
        spec = specs[i]
        typ = None
        if cfg["eta"] is not None:
            typ = TypicalityParams(spec.nominal_density, cfg["eta"])
        est = montecarlo.mc_ensemble_pc(spec, channel, cfg["trials"], cfg["seed"], typ)
        if channel.kind == BSC:
            bound = bounds.bsc_ensemble_bound(spec, channel.epsilon).value if channel.epsilon < 0.5 else None
        else:
            bound = bounds.bec_bound(spec, channel.epsilon, "jensen", cfg["trials"], cfg["seed"]).value
        return est, bound

    results = pmap(task, list(range(len(points))))
    rows = [
        [channel.kind, channel.epsilon, s.kind, s.n, s.k, s.rho_or_w, est.trials, est.mean, est.std_error,
         est.rejections, bound]
        for s, (est, bound) in zip(specs, results)
    ]
    return {cfg["output"]: csv_text(HEADERS["simulate"], rows)}


def _cmd_rank_study(run: Run) -> dict[str, str]:
    cfg = run.cfg
    ms = cfg["m"]
    ks = cfg["k"] if cfg["k"] is not None else ms
    if len(ks) == 1:
        ks = ks * len(ms)
    specs = []
    for m, k in zip(ms, ks):
        if cfg["w"] is not None:
            specs.append(run.spec(m, k, w=cfg["w"]))
        else:
            rho = cfg["rho"] if cfg["rho"] is not None else bounds.density_schedule(k, c=cfg["c"])
            specs.append(run.spec(m, k, rho))
    results = pmap(lambda s: montecarlo.mc_expected_rank(s, cfg["trials"], cfg["seed"]), specs)
    rows = [
        [s.n, s.k, s.kind, s.rho_or_w, est.trials, est.mean, est.std_error]
        for s, est in zip(specs, results)
    ]
    return {cfg["output"]: csv_text(HEADERS["rank-study"], rows)}


def _cmd_convergence(run: Run) -> dict[str, str]:
    cfg = run.cfg
    channel = ChannelSpec(cfg["channel"], cfg["eps"])
    for n in cfg["n"]:
        run.spec(n, bounds.rate_to_k(n, cfg["rate"]), cfg["rho"])  # records any rounding
    report = montecarlo.convergence_experiment(
        cfg["n"], cfg["rate"], channel, cfg["ensemble"], cfg["rho"], cfg["matrices"],
        cfg["delta"], cfg["seed"], cfg["erasure_trials"],
    )
    rows = [[r.n, r.k, r.matrices_tested, report.delta, r.fraction_above_delta] for r in report.records]
    return {cfg["output"]: csv_text(HEADERS["convergence"], rows)}


def _cmd_sweep_density(run: Run) -> dict[str, str]:
    cfg = run.cfg
    channel = ChannelSpec(cfg["channel"], cfg["eps"])
    gamma = cfg["gamma"] if channel.kind == BSC else None
    c = cfg["c"] if channel.kind == BEC else None

    def task(n):
        return bounds.vanishing_density_sweep(
            channel, [n], cfg["r_over_c"], gamma, c, cfg["estimator"], cfg["trials"], cfg["seed"]
        )[0]

    results = pmap(task, cfg["n"])
    rows = [
        [channel.kind, channel.epsilon, p.n, p.k, p.rho, p.result.value, p.result.pe_upper, p.result.log2_pe_upper]
        for p in results
    ]
    return {cfg["output"]: csv_text(HEADERS["sweep-density"], rows)}


def _cmd_oracle_check(run: Run) -> dict[str, str]:
    cfg = run.cfg
    points = [(eps, n, k, rho) for eps in cfg["eps"] for rho in cfg["rho"] for n in cfg["n"] for k in cfg["k"]]

    def task(p):
        eps, n, k, rho = p
        spec = EnsembleSpec.bernoulli(n, k, rho)
        channel = ChannelSpec(cfg["channel"], eps)
        if channel.kind == BSC:
            bound = bounds.bsc_ensemble_bound(spec, eps).value
        else:
            bound = bounds.bec_bound(spec, eps, cfg["estimator"], cfg["trials"], cfg["seed"]).value
        exact = montecarlo.exact_ensemble_avg(spec, channel)
        return bound, exact

    results = pmap(task, points)
    rows = [
        [cfg["channel"], eps, BERNOULLI, n, k, rho, b, e, e - b]
        for (eps, n, k, rho), (b, e) in zip(points, results)
    ]
    return {cfg["output"]: csv_text(HEADERS["oracle-check"], rows)}


HANDLERS = {
    "bound": _cmd_bound,
    "rate-curve": _cmd_rate_curve,
    "exponent": _cmd_exponent,
    "bec-bound": _cmd_bec_bound,
    "simulate": _cmd_simulate,
    "rank-study": _cmd_rank_study,
    "convergence": _cmd_convergence,
    "sweep-density": _cmd_sweep_density,
    "oracle-check": _cmd_oracle_check,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def execute(command: str, cfg: dict) -> dict:
    """Run one resolved config; write outputs, then the manifest. Returns the manifest."""
    started = _now()
    run = Run(command, cfg)
    outputs = HANDLERS[command](run)
    checksums = {}
    for path, text in outputs.items():
        data = text.encode("utf-8")
        _atomic_write(path, data)
        checksums[os.path.basename(path)] = hashlib.sha256(data).hexdigest()
    manifest = {
        "tool": "sparsecode",
        "version": __version__,
        "config": config_echo(command, cfg),
        "started": started,
        "finished": _now(),
        "outputs": checksums,
        "row_weight_rounding": run.rounding_log(),
    }
    if command in ("bound", "rate-curve", "exponent", "sweep-density"):
        manifest["note"] = "pe_upper = 1 - value, an upper bound on the ensemble-average error probability"
    _atomic_write(cfg["output"] + ".manifest.json", (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))
    return manifest


def _fail(code: int, payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    raise SystemExit(code)


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise UsageError("config must be a flat JSON object")
    return data


def main(argv: Optional[list[str]] = None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    try:
        file_values = load_config_file(config_path) if config_path else {}
        cfg = resolve_config(command, file_values, args)
        execute(command, cfg)
    except SizeGuardError as exc:
        _fail(3, {"error": "size_guard", "guard": exc.guard, "message": str(exc)})
    except (UsageError, ValueError) as exc:
        _fail(2, {"error": "usage", "message": str(exc)})
    except Exception as exc:  # pragma: no cover - last-resort report
        _fail(1, {"error": type(exc).__name__, "message": str(exc)})
    return 0


if __name__ == "__main__":
    sys.exit(main())
