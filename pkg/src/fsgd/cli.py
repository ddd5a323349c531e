"""Command-line entry point.

    fsgd simulate --scenario fig3a --reps 2 --n 10000 --seed 7
    fsgd fit --input train.csv --checkpoint-out model.ckpt
    fsgd predict --checkpoint model.ckpt --input x.csv
    fsgd eval --checkpoint model.ckpt --scenario fig3a
    fsgd compare --scenario fig3a --estimators fsgd,sieve

Settings are merged as flags > JSON config file > scenario preset.  Exit
codes: 0 success, 2 configuration error, 3 data error, 4 divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from typing import Optional

import numpy as np

from . import estimator, lepski, sieve, simlab
from .basis import BasisFamily
from .errors import CheckpointError, DimensionError, DivergenceError, DomainError
from .schedule import Schedule

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 0, 2, 3, 4

SCHEDULES = {"fixed": "fixed_p", "three-stage": "three_stage", "poly": "polynomial",
             "constant": "constant", "lepski": "lepski"}

# used when neither a preset nor the config file says otherwise
GENERIC = {
    "fsgd": {"schedule": "fixed", "A": 3.0, "B": 1.0, "s": 2.0, "A1": 1.0, "A2": 1.0,
             "gamma": 0.0, "J": 0, "intercept": True},
    "sieve": {"A": 3.0, "exponent": 0.21, "omega": 2.0, "averaging": True, "intercept": True},
    "lepski": {"schedule": "lepski", "s0": 0.5, "s1": 8.0, "A": 3.0, "B": 3.0, "warmup": None,
               "intercept": True},
}

ESTIMATOR_KEYS = ("schedule", "A", "A1", "A2", "B", "s", "gamma", "J", "s0", "s1", "warmup",
                  "omega", "exponent", "averaging", "intercept")
RUN_KEYS = ("scenario", "estimator", "estimators", "basis", "p", "n", "reps", "seed", "threads",
            "out_dir", "log_s", "input", "output", "checkpoint", "checkpoint_out", "delimiter",
            "mc_points")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# settings -------------------------------------------------------------------

def _flatten(est: simlab.EstimatorConfig) -> dict:
    d = {"intercept": est.include_intercept}
    if est.kind == "lepski":
        c = est.lepski
        d.update(schedule="lepski", s0=c.s0, s1=c.s1, A=c.A, B=c.B, warmup=c.warmup)
    elif est.kind == "sieve":
        kw = est.schedule.rule.keywords
        d.update(A=kw["A"], exponent=kw["exponent"], omega=est.omega, averaging=est.averaging)
    else:
        sc = est.schedule
        name = {v: k for k, v in SCHEDULES.items()}[sc.variant]
        d.update(schedule=name, A=sc.A, A1=sc.A1, A2=sc.A2, B=sc.B, s=sc.s, gamma=sc.gamma, J=sc.J)
    return d


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = set(cfg) - set(ESTIMATOR_KEYS) - set(RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    per = cfg.get("estimators")
    if per is not None and not isinstance(per, (dict, str)):
        raise ConfigError("'estimators' must be a comma list or an object of per-estimator settings")
    return cfg


def merge(flags: dict, cfg: dict) -> dict:
    """Run-level settings: flags over config over environment over defaults."""
    run = {"estimator": None, "seed": None, "threads": 1, "out_dir": ".", "delimiter": ",",
           "mc_points": 100_000, "log_s": False, "basis": "trig"}
    for src in (cfg, flags):
        for k in RUN_KEYS:
            if src.get(k) is not None and not (k == "estimators" and isinstance(src[k], dict)):
                run[k] = src[k]
    if run["seed"] is None and os.environ.get("FSGD_SEED"):
        try:
            run["seed"] = int(os.environ["FSGD_SEED"])
        except ValueError:
            raise ConfigError(f"FSGD_SEED={os.environ['FSGD_SEED']!r} is not an integer") from None
    return run


def _preset(run: dict) -> Optional[simlab.Preset]:
    name = run.get("scenario")
    if name is None:
        return None
    if name not in simlab.PRESETS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(sorted(simlab.PRESETS))}")
    return simlab.PRESETS[name]


def estimator_settings(kind: str, preset, flags: dict, cfg: dict) -> dict:
    d = dict(GENERIC[kind])
    if preset is not None and kind in preset.estimators:
        d.update(_flatten(preset.estimators[kind]))
    sections = cfg.get("estimators") if isinstance(cfg.get("estimators"), dict) else {}
    for src in (cfg, sections.get(kind, {}), flags):
        for k in ESTIMATOR_KEYS:
            if src.get(k) is not None:
                d[k] = src[k]
    return d


def build_estimator(kind: str, d: dict, p: int) -> simlab.EstimatorConfig:
    if kind not in simlab.ESTIMATORS:
        raise ConfigError(f"unknown estimator {kind!r}")
    name = d.get("schedule")
    if kind == "lepski" and name != "lepski":
        raise ConfigError(f"lepski estimator forbids --schedule {name}")
    if kind == "fsgd" and name == "lepski":
        raise ConfigError("--schedule lepski needs --estimator lepski")
    if kind == "sieve" and name is not None:
        raise ConfigError("sieve estimator takes --A/--exponent, not --schedule")
    try:
        inc = bool(d["intercept"])
        if kind == "lepski":
            cfg = lepski.LepskiConfig(float(d["s0"]), float(d["s1"]), float(d["A"]), float(d["B"]),
                                      None if d.get("warmup") is None else int(d["warmup"]))
            return simlab.EstimatorConfig("lepski", include_intercept=inc, lepski=cfg)
        if kind == "sieve":
            return simlab.EstimatorConfig("sieve", simlab.sieve_schedule(float(d["A"]), float(d["exponent"])),
                                          include_intercept=inc, omega=float(d["omega"]),
                                          averaging=bool(d["averaging"]))
        if name not in SCHEDULES:
            raise ConfigError(f"unknown schedule {name!r}")
        A, B, s = float(d["A"]), float(d["B"]), float(d["s"])
        if name == "fixed":
            sched = Schedule.fixed(A, B, s, p)
        elif name == "three-stage":
            sched = Schedule.staged(p, float(d["A1"]), float(d["A2"]), B, s)
        elif name == "poly":
            sched = Schedule.poly(A, s)
        else:
            sched = Schedule.const(float(d["gamma"]), int(d["J"]))
        return simlab.EstimatorConfig("fsgd", sched, include_intercept=inc)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def build_scenario(run: dict, preset) -> simlab.Scenario:
    if preset is None:
        raise ConfigError("--scenario is required for this command")
    sc = preset.scenario
    over = {k: int(run[k]) for k in ("p", "n", "reps", "seed") if run.get(k) is not None}
    try:
        return replace(sc, **over)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def _window(preset, n: int, pts) -> tuple:
    w = preset.window if preset is not None and preset.window else (n / 10.0, n)
    if sum(1 for v in pts if w[0] <= v <= w[1]) < 2:
        w = (n / 10.0, n)
    return w


# data files -------------------------------------------------------------------

def read_table(path: str, delimiter: str = ",", need_y: bool = True,
               p: Optional[int] = None) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Parse ``x1,...,xp[,y]`` rows; every reject is reported, none is skipped."""
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            return np.zeros((0, p or 1)), (np.zeros(0) if need_y else None)
        header = [h.strip() for h in header]
        has_y = bool(header) and header[-1] == "y"
        xs = header[:-1] if has_y else header
        if need_y and not has_y:
            raise DataError(f"{path} line 1: header must end with column 'y'")
        if not xs or xs != [f"x{k}" for k in range(1, len(xs) + 1)]:
            raise DataError(f"{path} line 1: header must read x1,...,xp{',y' if need_y else ''}")
        q = len(xs)
        if p is not None and q != p:
            raise DimensionError(f"{path} has {q} covariates, model expects {p}")
        width = q + has_y
        X, y, errors = [], [], []
        row = 0
        for fields in reader:
            if not fields:
                continue
            row += 1
            where = f"row {row} (line {reader.line_num})"
            if len(fields) != width:
                errors.append(f"{where}: expected {width} fields, got {len(fields)}")
                continue
            try:
                vals = [float(v) for v in fields]
            except ValueError:
                errors.append(f"{where}: non-numeric field in {fields}")
                continue
            bad = [f"x{k + 1}={v!r}" for k, v in enumerate(vals[:q]) if not 0.0 <= v <= 1.0]
            if bad:
                errors.append(f"{where}: {', '.join(bad)} outside [0, 1]")
                continue
            if has_y and not math.isfinite(vals[-1]):
                errors.append(f"{where}: response {vals[-1]!r} is not finite")
                continue
            X.append(vals[:q])
            if has_y:
                y.append(vals[-1])
    if errors:
        raise DataError(f"{path}: {len(errors)} rejected row(s)\n  " + "\n  ".join(errors))
    X = np.array(X, dtype=float).reshape(-1, q)
    return X, (np.array(y, dtype=float) if need_y else None)


def _write(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


# commands ---------------------------------------------------------------------

def cmd_simulate(run, flags, cfg) -> int:
    preset = _preset(run)
    sc = build_scenario(run, preset)
    kind = run["estimator"] or preset.default
    est = build_estimator(kind, estimator_settings(kind, preset, flags, cfg), sc.p)
    pts = simlab.log_grid(sc.n)
    rep = simlab.run_experiment(sc, est, pts, window=_window(preset, sc.n, pts),
                                threads=int(run["threads"]), mc_points=int(run["mc_points"]),
                                label=kind, log_s=bool(run["log_s"]))
    out = run["out_dir"]
    _write(os.path.join(out, "results.csv"), rep.results_csv())
    _write(os.path.join(out, "summary.csv"), rep.summary_csv())
    if rep.chosen_s is not None:
        steps = range(1, sc.n + 1) if run["log_s"] else rep.eval_points
        lines = ["rep,n,s"] + [f"{r},{i},{float(v)!r}" for r in range(rep.chosen_s.shape[0])
                               for i, v in zip(steps, rep.chosen_s[r])]
        _write(os.path.join(out, "chosen_s.csv"), "\n".join(lines) + "\n")
    print(f"{run['scenario']} {kind}: final mse {rep.mse_mean[-1]:.4e}, "
          f"slope {rep.slope:.3f} (target {rep.target_slope:.3f})")
    return EXIT_OK


def cmd_compare(run, flags, cfg) -> int:
    preset = _preset(run)
    sc = build_scenario(run, preset)
    stray = [k for k in ESTIMATOR_KEYS if flags.get(k) is not None]
    if stray:
        raise ConfigError("compare takes estimator settings from the config file's "
                          f"'estimators' sections, not flags ({', '.join(stray)})")
    kinds = run.get("estimators") or ",".join(preset.estimators)
    kinds = [k.strip() for k in (kinds.split(",") if isinstance(kinds, str) else kinds) if k.strip()]
    if len(kinds) < 2:
        raise ConfigError("compare needs at least two estimators")
    pts = simlab.log_grid(sc.n)
    window = _window(preset, sc.n, pts)
    results, summary = [], ["estimator,final_mse,slope,target"]
    for kind in kinds:
        est = build_estimator(kind, estimator_settings(kind, preset, {}, cfg), sc.p)
        rep = simlab.run_experiment(sc, est, pts, window=window, threads=int(run["threads"]),
                                    mc_points=int(run["mc_points"]), label=kind)
        body = rep.results_csv(tag=kind).splitlines()
        results += body if not results else body[1:]
        summary.append(f"{kind},{float(rep.mse_mean[-1])!r},{rep.slope!r},{rep.target_slope!r}")
        print(f"{kind}: final mse {rep.mse_mean[-1]:.4e}, slope {rep.slope:.3f}")
    out = run["out_dir"]
    _write(os.path.join(out, "compare.csv"), "\n".join(results) + "\n")
    _write(os.path.join(out, "compare_summary.csv"), "\n".join(summary) + "\n")
    return EXIT_OK


def cmd_fit(run, flags, cfg) -> int:
    if not run.get("input"):
        raise ConfigError("fit needs --input")
    preset = _preset(run)
    kind = run["estimator"] or (preset.default if preset else "fsgd")
    state = None
    if run.get("checkpoint"):
        if kind == "sieve":
            raise ConfigError("sieve fits cannot resume from a checkpoint")
        state = estimator.load(run["checkpoint"])
    p = state.p if state is not None else run.get("p")
    X, y = read_table(run["input"], run["delimiter"], need_y=True, p=p)
    p = X.shape[1]
    est = build_estimator(kind, estimator_settings(kind, preset, flags, cfg), p)
    if state is None:
        state = estimator.ModelState.zeros(p, est.include_intercept, BasisFamily.from_name(run["basis"]))
    if kind == "fsgd":
        estimator.fit_arrays(state, X, y, est.schedule)
    elif kind == "lepski":
        lepski.fit_arrays(state, X, y, est.lepski)
    else:
        sv = sieve.SieveState.zeros(p, est.omega, est.include_intercept, est.averaging)
        sieve.fit_arrays(sv, X, y, est.schedule)
        state = sv.f_avg
    path = run.get("checkpoint_out") or os.path.join(run["out_dir"], "model.ckpt")
    _write(path, estimator.dumps(state))
    print(f"fitted {X.shape[0]} rows ({kind}); checkpoint at step {state.step} -> {path}")
    return EXIT_OK


def cmd_predict(run, flags, cfg) -> int:
    if not (run.get("checkpoint") and run.get("input")):
        raise ConfigError("predict needs --checkpoint and --input")
    state = estimator.load(run["checkpoint"])
    X, _ = read_table(run["input"], run["delimiter"], need_y=False, p=state.p)
    pred = estimator.predict_many(state, X) if X.shape[0] else np.zeros(0)
    text = "y_hat\n" + "".join(f"{float(v)!r}\n" for v in pred)
    path = run.get("output") or os.path.join(run["out_dir"], "predictions.csv")
    _write(path, text)
    print(f"{len(pred)} predictions -> {path}")
    return EXIT_OK


def cmd_eval(run, flags, cfg) -> int:
    if not run.get("checkpoint"):
        raise ConfigError("eval needs --checkpoint")
    state = estimator.load(run["checkpoint"])
    rows = ["metric,value"]
    if run.get("input"):
        X, y = read_table(run["input"], run["delimiter"], need_y=True, p=state.p)
        if X.shape[0] == 0:
            raise DataError(f"{run['input']} holds no rows")
        err = float(np.mean((estimator.predict_many(state, X) - y) ** 2))
        rows += [f"rows,{X.shape[0]}", f"prediction_mse,{err!r}"]
    else:
        sc = build_scenario(run, _preset(run))
        if sc.p != state.p:
            raise DimensionError(f"scenario has p={sc.p}, checkpoint has p={state.p}")
        if sc.dgp == "uniform_cube":
            rows.append(f"mse,{simlab.mse_quadrature(state, sc)!r}")
        else:
            rng = simlab.substream(sc.seed if run.get("seed") is None else int(run["seed"]), 0, 2)
            m, se = simlab.mse_monte_carlo(state, sc, int(run["mc_points"]), rng)
            rows += [f"mse,{m!r}", f"mse_stderr,{se!r}"]
    text = "\n".join(rows) + "\n"
    _write(run.get("output") or os.path.join(run["out_dir"], "eval.csv"), text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict,
            "eval": cmd_eval, "compare": cmd_compare}


# argument parsing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="JSON file with settings (flags take precedence)")
    g.add_argument("--scenario", help="named preset, e.g. fig3a, fig1a-p5, fig2")
    g.add_argument("--estimator", choices=simlab.ESTIMATORS)
    g.add_argument("--estimators", help="comma list for compare")
    g.add_argument("--basis", choices=("trig",))
    g.add_argument("--p", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--reps", type=int)
    g.add_argument("--seed", type=int, help="falls back to $FSGD_SEED, then the preset")
    g.add_argument("--threads", type=int, help="replication worker processes")
    g.add_argument("--mc-points", type=int)
    g.add_argument("--out-dir")
    g.add_argument("--log-s", action="store_const", const=True,
                   help="write the Lepski choice at every step, not only at eval points")
    g.add_argument("--input")
    g.add_argument("--output")
    g.add_argument("--checkpoint", help="checkpoint to read (resume, predict, eval)")
    g.add_argument("--checkpoint-out")
    g.add_argument("--delimiter")
    e = common.add_argument_group("estimator")
    e.add_argument("--schedule", choices=tuple(SCHEDULES))
    for name in ("A", "A1", "A2", "B", "s", "gamma", "s0", "s1", "omega", "exponent"):
        e.add_argument(f"--{name}", type=float)
    e.add_argument("--J", type=int)
    e.add_argument("--warmup", type=int, help="Lepski: first step at which selection applies")
    e.add_argument("--intercept", action=argparse.BooleanOptionalAction)
    e.add_argument("--averaging", action=argparse.BooleanOptionalAction)

    parser = argparse.ArgumentParser(prog="fsgd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"simulate": "run a preset experiment and write results/summary CSVs",
             "fit": "stream a CSV through an estimator and write a checkpoint",
             "predict": "predict from a checkpoint",
             "eval": "score a checkpoint on a scenario or a labelled CSV",
             "compare": "run several estimators on one scenario with shared seeds"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def _fail(kind: str, err: Exception, code: int) -> int:
    print(f"fsgd: {kind}: {err}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = load_config(args.config)
        run = merge(flags, cfg)
        return COMMANDS[args.command](run, flags, cfg)
    except ConfigError as e:
        return _fail("config error", e, EXIT_CONFIG)
    except DivergenceError as e:
        return _fail("divergence", e, EXIT_DIVERGENCE)
    except (DataError, DomainError, DimensionError, CheckpointError) as e:
        return _fail("data error", e, EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
