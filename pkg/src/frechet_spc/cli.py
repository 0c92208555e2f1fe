"""``frechet-spc`` command line: phase1, phase2, simulate, who-check.

Settings come from built-in defaults, then an optional ``--config`` file
(TOML or JSON), then command-line flags. Exit codes: 0 ok, 2 bad input or
configuration, 3 incompatible files, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import storage
from .curves import TimeGrid
from .errors import (ConfigurationError, ConvergenceError, DomainError, FrechetSPCError,
                     IdentifiabilityError, IncompatibleError)
from .ewma import LAMBDA_GRID, VARIABILITY_MODES, EwmaConfig, EwmaMonitor, init_state, initial_deviance, initial_state
from .frechet import FrechetConfig, estimate_frechet_mean
from .ingest import POLLUTANTS, DailyProfileRecord, ingest_csv, who_flag, write_csv
from .sim import RegisterConfig
from .synth import Shift, SynthSpec, generate_ic_set, generate_stream

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_INPUT, EXIT_INCOMPATIBLE, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "lambda": 0.10,
    "limit_level": 0.95,
    "fix_kappa": False,
    "seed": 0,
    "variability_mode": "deviance",
    "raw_deviance": False,
    "enrich": False,
    "grid_points": 101,
    "replay_orders": 200,
    "pollutant": None,
    "who_ic_only": False,
    "tolerance": 1e-6,
    "max_iterations": 100,
    "register": {},
}
CHART_KEYS = ("lambda", "limit_level", "fix_kappa", "variability_mode", "raw_deviance", "replay_orders", "seed")
REGISTER_KEYS = {f.name for f in fields(RegisterConfig)} - {"fix_kappa", "local_only"}
CSV_COLUMNS = ["step", "date", "D", "Dtilde", "alpha", "beta", "kappa", "zeta",
               "alpha_t", "beta_t", "kappa_t", "zeta_t", "ooc", "ooc_params", "who_flag"]


# ---------------------------------------------------------------- settings

def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        elif path.suffix.lower() == ".toml":
            data = tomllib.loads(text)
        else:
            raise ConfigurationError(f"{path}: config must be .toml or .json")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a table")
    return data


def _normalise(data: dict, allowed) -> dict:
    out = {}
    for key, value in data.items():
        k = key.replace("-", "_")
        if k == "lam":
            k = "lambda"
        if k not in allowed:
            raise ConfigurationError(f"{key}: unknown configuration key")
        out[k] = value
    if "register" in out:
        if not isinstance(out["register"], dict):
            raise ConfigurationError("register: expected a table")
        for k in out["register"]:
            if k not in REGISTER_KEYS:
                raise ConfigurationError(f"register.{k}: unknown configuration key")
    return out


def resolve_settings(args) -> dict:
    settings = dict(DEFAULTS)
    explicit = {}
    if args.config:
        explicit.update(_normalise(load_config(args.config), DEFAULTS))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            explicit[key] = value
    settings.update(explicit)
    settings["_explicit"] = set(explicit)
    return settings


def _lambdas(value) -> list:
    if isinstance(value, str):
        if value.strip().lower() == "all":
            return list(LAMBDA_GRID)
        try:
            value = float(value)
        except ValueError:
            raise ConfigurationError(f"--lambda must be a number or 'all', got {value!r}") from None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(value)]


def register_config(s: dict) -> RegisterConfig:
    reg = dict(s["register"])
    for k in ("kappa_bounds", "zeta_bounds"):
        if k in reg:
            reg[k] = tuple(reg[k])
    try:
        return RegisterConfig(fix_kappa=bool(s["fix_kappa"]), **reg)
    except (TypeError, DomainError) as exc:
        raise ConfigurationError(f"register: {exc}") from None


def chart_config(s: dict, lam: float) -> EwmaConfig:
    return EwmaConfig(
        lam=lam,
        limit_level=float(s["limit_level"]),
        fix_kappa=bool(s["fix_kappa"]),
        variability_mode=s["variability_mode"],
        raw_deviance=bool(s["raw_deviance"]),
        enrich=bool(s["enrich"]),
        replay_orders=int(s["replay_orders"]),
        seed=int(s["seed"]),
        register=register_config(s),
    )


def chart_settings(cfg: EwmaConfig) -> dict:
    return {"lambda": cfg.lam, "limit_level": cfg.limit_level, "fix_kappa": cfg.fix_kappa,
            "variability_mode": cfg.variability_mode, "raw_deviance": cfg.raw_deviance,
            "replay_orders": cfg.replay_orders, "seed": cfg.seed}


def _suffix(lam: float, many: bool) -> str:
    return f"_lambda{lam:g}" if many else ""


def _pollutant(s: dict) -> str:
    p = s["pollutant"]
    if p is None:
        raise ConfigurationError("--pollutant is required")
    if p not in POLLUTANTS:
        raise ConfigurationError(f"unknown pollutant {p!r}; expected one of {', '.join(POLLUTANTS)}")
    return p


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands

def cmd_phase1(args) -> int:
    s = resolve_settings(args)
    pollutant = _pollutant(s)
    grid = TimeGrid(int(s["grid_points"]))
    records = ingest_csv(args.train_csv, pollutant)
    if s["who_ic_only"]:
        records = [r for r in records if not who_flag(r).flagged]
    if not records:
        raise ConfigurationError(f"{args.train_csv}: no training days left after filtering")
    curves = [r.curve(grid) for r in records]
    fcfg = FrechetConfig(tolerance=float(s["tolerance"]), max_iterations=int(s["max_iterations"]),
                         fix_kappa=bool(s["fix_kappa"]), register=register_config(s))
    result = estimate_frechet_mean(curves, fcfg)
    meta = {"pollutant": pollutant, "dates": [r.date.isoformat() for r in records],
            "fix_kappa": bool(s["fix_kappa"]), "who_ic_only": bool(s["who_ic_only"]),
            "register": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in register_config(s).__dict__.items()}}
    out = _out_dir(args.out)
    bank_doc = storage.databank_to_dict(result, meta)
    storage.write_json(bank_doc, out / "databank.json")
    print(f"days: {len(records)}")
    print(f"frechet_variance: {result.frechet_variance!r}")
    print(f"iterations: {result.iterations}")
    print(f"converged: {str(result.converged).lower()}")
    lams = _lambdas(s["lambda"])
    for lam in lams:
        cfg = chart_config(s, lam)
        name = f"limits{_suffix(lam, len(lams) > 1)}.json"
        try:
            _, limits = init_state(result.f0, result, cfg)
        except ConfigurationError as exc:
            print(f"warning: {name} not written: {exc}", file=sys.stderr)
            continue
        storage.write_json(storage.limits_to_dict(limits, bank_doc["fingerprint"], chart_settings(cfg)), out / name)
        print(f"lambda {lam:g}: deviance_ucl {limits.deviance_ucl!r}")
    return EXIT_OK


def _chart_row(point, record: DailyProfileRecord, flagged: bool) -> list:
    th, pe = point.theta, point.param_ewma
    return [point.step, record.date.isoformat(), repr(point.D), repr(point.D_tilde),
            repr(th.alpha), repr(th.beta), repr(th.kappa), repr(th.zeta),
            repr(pe[0]), repr(pe[1]), repr(pe[2]), repr(pe[3]),
            int(point.ooc), ";".join(k for k, v in point.ooc_params.items() if v), int(flagged)]


def cmd_phase2(args) -> int:
    bank_doc = storage.read_json(args.databank)
    ic, meta = storage.databank_from_dict(bank_doc)
    limits_doc = storage.read_json(args.limits) if args.limits else None

    s = resolve_settings(args)
    explicit = s.pop("_explicit")
    if "fix_kappa" not in explicit:
        s["fix_kappa"] = bool(meta.get("fix_kappa", False))
    if "register" not in explicit and "register" in meta:
        s["register"] = {k: v for k, v in meta["register"].items() if k in REGISTER_KEYS}
    if limits_doc is not None:
        stored = limits_doc.get("config", {})
        for k in CHART_KEYS:
            if k in stored and k not in explicit:
                s[k] = stored[k]
    if "pollutant" not in explicit:
        s["pollutant"] = meta.get("pollutant")
    pollutant = _pollutant(s)
    if meta.get("pollutant") not in (None, pollutant):
        raise IncompatibleError(f"databank was built for {meta['pollutant']}, not {pollutant}")
    if "grid_points" in explicit and int(s["grid_points"]) != ic.f0.grid.m:
        raise IncompatibleError(f"databank grid has {ic.f0.grid.m} points, --grid-points is {s['grid_points']}")

    lams = _lambdas(s["lambda"])
    if limits_doc is not None and len(lams) > 1:
        raise ConfigurationError("--limits holds one chart; use a single --lambda with it")
    records = ingest_csv(args.test_csv, pollutant)
    if not records:
        raise ConfigurationError(f"{args.test_csv}: no usable days")
    grid = ic.f0.grid
    curves = [r.curve(grid) for r in records]
    who = [who_flag(r).flagged for r in records]
    out = _out_dir(args.out)
    for lam in lams:
        cfg = chart_config(s, lam)
        if limits_doc is not None:
            limits = storage.limits_from_dict(limits_doc, bank_doc["fingerprint"])
            if limits_doc.get("config", {}) and {k: limits_doc["config"].get(k) for k in CHART_KEYS} != chart_settings(cfg):
                raise IncompatibleError("chart settings differ from those the limits were computed with")
            state = initial_state(ic.f0, initial_deviance(ic, cfg))
        else:
            state, limits = init_state(ic.f0, ic, cfg)
        points = EwmaMonitor(ic, cfg, state, limits).run(curves)
        suffix = _suffix(lam, len(lams) > 1)
        with (out / f"chart{suffix}.jsonl").open("w") as fh:
            for p, r, w in zip(points, records, who):
                fh.write(json.dumps({**p.as_dict(), "date": r.date.isoformat(), "who_flag": w}, sort_keys=True) + "\n")
        with (out / f"chart{suffix}.csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for p, r, w in zip(points, records, who):
                writer.writerow(_chart_row(p, r, w))
        alarms = sum(p.ooc for p in points)
        param_alarms = sum(any(p.ooc_params.values()) for p in points)
        print(f"lambda {lam:g}: steps {len(points)}, deviance alarms {alarms}, "
              f"parameter alarms {param_alarms}, WHO-flagged days {sum(who)}, ucl {limits.deviance_ucl!r}")
    return EXIT_OK


def _simulated_records(curves, pollutant: str, start: dt.date) -> list:
    records = []
    for k, c in enumerate(curves):
        values = np.asarray(c.values, dtype=float)
        if np.any(values < 0):
            raise ConfigurationError(f"simulated day {k + 1} has negative values; raise the base offset")
        records.append(DailyProfileRecord(start + dt.timedelta(days=k), pollutant, values))
    return records


def cmd_simulate(args) -> int:
    data = load_config(args.spec)
    data = {k.replace("-", "_"): v for k, v in data.items()}
    stream_cfg = data.pop("stream", None)
    pollutant = data.pop("pollutant", "CO")
    if pollutant not in POLLUTANTS:
        raise ConfigurationError(f"pollutant: unknown pollutant {pollutant!r}")
    try:
        start = dt.date.fromisoformat(str(data.pop("start_date", "2000-01-01")))
    except ValueError:
        raise ConfigurationError("start_date: expected YYYY-MM-DD") from None
    data.pop("grid_points", None)
    if args.seed is not None:
        data["seed"] = args.seed
    spec = SynthSpec.from_dict({**data, "grid_points": 24})

    curves, params, base = generate_ic_set(spec)
    out = _out_dir(args.out)
    write_csv(_simulated_records(curves, pollutant, start), out / "data.csv")
    truth = {"spec": spec.to_dict(), "pollutant": pollutant, "start_date": start.isoformat(),
             "base": [float(v) for v in base.values], "params": [p.as_dict() for p in params]}

    if stream_cfg is not None:
        if not isinstance(stream_cfg, dict):
            raise ConfigurationError("stream: expected a table")
        stream_cfg = dict(stream_cfg)
        shift_cfg = stream_cfg.pop("shift", None)
        length = stream_cfg.pop("length", 100)
        seed = stream_cfg.pop("seed", spec.seed + 1)
        if stream_cfg:
            raise ConfigurationError(f"stream.{sorted(stream_cfg)[0]}: unknown field")
        if int(length) != length or length < 1:
            raise ConfigurationError("stream.length: must be a positive integer")
        try:
            shift = Shift(**shift_cfg) if shift_cfg is not None else None
        except TypeError as exc:
            raise ConfigurationError(f"stream.shift: {exc}") from None
        except ConfigurationError as exc:
            raise ConfigurationError(f"stream.shift.{exc}") from None
        s_curves, s_params = generate_stream(spec, int(length), shift, seed=seed)
        s_start = start + dt.timedelta(days=spec.n)
        write_csv(_simulated_records(s_curves, pollutant, s_start), out / "stream.csv")
        truth["stream"] = {"length": int(length), "seed": seed, "start_date": s_start.isoformat(),
                           "params": [p.as_dict() for p in s_params],
                           "shift": None if shift is None else {"at_step": shift.at_step,
                                                                "multipliers": dict(shift.multipliers),
                                                                "deltas": dict(shift.deltas)}}
    storage.write_json(truth, out / "truth.json")
    print(f"wrote {spec.n} days to {out / 'data.csv'}" + ("" if stream_cfg is None else f" and a stream to {out / 'stream.csv'}"))
    return EXIT_OK


def cmd_who_check(args) -> int:
    s = resolve_settings(args)
    pollutant = _pollutant(s)
    records = ingest_csv(args.csv, pollutant)
    rows = []
    for r in records:
        flag = who_flag(r)
        stats = ";".join(f"{k}={v!r}" for k, v in flag.statistics.items())
        rows.append([r.date.isoformat(), int(flag.flagged), ";".join(flag.violated), stats])
    if args.out:
        with Path(args.out).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", "who_flag", "violated", "statistics"])
            writer.writerows(rows)
    flagged = sum(r[1] for r in rows)
    print(f"{pollutant}: {flagged} of {len(rows)} days violate a WHO threshold")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("settings (override --config)")
    g.add_argument("--config", help="TOML or JSON settings file")
    g.add_argument("--lambda", dest="lambda", help="EWMA weight, or 'all' for the grid 0.05,0.10,0.15,0.20")
    g.add_argument("--limit-level", dest="limit_level", type=float, help="control-limit quantile level")
    g.add_argument("--fix-kappa", dest="fix_kappa", action="store_const", const=True, help="hold kappa at 1")
    g.add_argument("--seed", type=int, help="seed for every randomized step")
    g.add_argument("--variability-mode", dest="variability_mode", choices=VARIABILITY_MODES)
    g.add_argument("--raw-deviance", dest="raw_deviance", action="store_const", const=True,
                   help="use the raw curve instead of its registered fit in D")
    g.add_argument("--enrich", action="store_const", const=True, help="append IC Phase II parameters to the databank")
    g.add_argument("--grid-points", dest="grid_points", type=int, help="working grid size")
    g.add_argument("--pollutant", choices=POLLUTANTS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frechet-spc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("phase1", help="estimate the in-control mean and control limits")
    p1.add_argument("train_csv")
    p1.add_argument("--out", default=".", help="output directory")
    p1.add_argument("--who-ic-only", dest="who_ic_only", action="store_const", const=True,
                    help="train only on days without WHO violations")
    _common(p1)
    p1.set_defaults(func=cmd_phase1)

    p2 = sub.add_parser("phase2", help="chart a test file against a databank")
    p2.add_argument("test_csv")
    p2.add_argument("--databank", required=True)
    p2.add_argument("--limits", help="limits file from phase1 (recomputed when absent)")
    p2.add_argument("--out", default=".", help="output directory")
    _common(p2)
    p2.set_defaults(func=cmd_phase2)

    ps = sub.add_parser("simulate", help="write a synthetic data file and its ground truth")
    ps.add_argument("spec", help="TOML or JSON simulation spec")
    ps.add_argument("--out", default=".", help="output directory")
    ps.add_argument("--seed", type=int)
    ps.set_defaults(func=cmd_simulate)

    pw = sub.add_parser("who-check", help="flag days that violate WHO thresholds")
    pw.add_argument("csv")
    pw.add_argument("--out", help="optional CSV of per-day flags")
    _common(pw)
    pw.set_defaults(func=cmd_who_check)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, IncompatibleError):
        return EXIT_INCOMPATIBLE
    if isinstance(exc, (ConvergenceError, IdentifiabilityError, FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    return EXIT_INPUT


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (FrechetSPCError, FloatingPointError, np.linalg.LinAlgError, OSError) as exc:
        print(f"frechet-spc {args.command}: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
