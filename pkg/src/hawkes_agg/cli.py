"""``hawkes-agg`` command line."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .baselines import InarConfig, fit_binned_loglik, fit_inar
from .core import aggregate, branching_ratio, simulate, spectral_radius
from .exceptions import (ConsistencyError, DataFormatError, DegenerateDataError, NumericalError,
                         StationarityError)
from .gof import critical_value, transform_times
from .likelihood import fit_mle
from .mcem import MCEMConfig, consistent_proposal, mcem_fit
from .optimize import OptimizerSettings
from .study import (StudyConfig, bias_table, boxplot_rows, dominance_count, mean_sd_table,
                    mse_table, replication_mse_rows, run_study)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

CONFIG_KEYS = """\
config file keys (plain 'key = value' lines, '#' starts a comment):
  nu          baseline rates, e.g. '0.3, 0.3'
  alpha       excitation matrix, rows separated by ';', e.g. '0.7 0.9; 0.6 1.0'
  beta        decay matrix, same layout as alpha
  horizon     observation window length T (simulate, study)        [1000]
  delta       bin width; T / delta must be an integer               [1]
  seed        master seed (overridden by --seed)                    [0]
  M           MC-EM proposals per E-step                            [20]
  m_tilde     MC-EM allocations tried per proposal                  [10]
  tol         MC-EM stopping tolerance on the parameter change norm [1e-3]
  em_max_iter MC-EM iteration cap                                   [100]
  max_iter    Newton iteration cap for mle/binned fits               [500]
  grad_tol    Newton gradient tolerance                             [1e-6]
  lag_order   INAR lag order (default ceil(10 / delta), at most 20)
  ridge       INAR ridge penalty                                    [1e-8]
  min_t_stat  INAR t-statistic for a grid value to count as positive [3]
  reps        study replications (overridden by --reps)             [10]
  methods     study methods, comma separated                        [mcem,binned,inar]
  trim        study trimming fraction per tail                      [0.05]
environment: HAWKES_AGG_THREADS caps the study worker pool.
exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure."""


class UsageError(Exception):
    pass


def _config(args) -> dict:
    cfg = io.read_config(args.config) if getattr(args, "config", None) else {}
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = str(args.seed)
    return cfg


def _get(cfg, key, cast, default):
    if key not in cfg:
        return default
    try:
        return cast(cfg[key])
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {cfg[key]!r}") from None


def _seed(cfg) -> int:
    return _get(cfg, "seed", int, 0)


def _prepare_out(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(cfg: dict, **extra) -> dict:
    meta = {"seed": cfg.get("seed", "none"), "config_hash": io.config_hash(cfg)}
    meta.update(extra)
    return meta


def _mcem_config(cfg, seed) -> MCEMConfig:
    return MCEMConfig(M=_get(cfg, "M", int, 20), m_tilde=_get(cfg, "m_tilde", int, 10),
                      tol=_get(cfg, "tol", float, 1e-3), max_iter=_get(cfg, "em_max_iter", int, 100),
                      seed=seed)


def _optimizer(cfg) -> OptimizerSettings:
    return OptimizerSettings(max_iter=_get(cfg, "max_iter", int, 500),
                             grad_tol=_get(cfg, "grad_tol", float, 1e-6))


def _inar_config(cfg) -> InarConfig:
    return InarConfig(lag_order=_get(cfg, "lag_order", int, None), ridge=_get(cfg, "ridge", float, 1e-8),
                      min_t_stat=_get(cfg, "min_t_stat", float, 3.0))


def _load_params(cfg):
    params = io.params_from_config(cfg)
    rho = spectral_radius(branching_ratio(params))
    if not rho < 1:
        raise StationarityError(f"parameters are not stationary: spectral radius {rho:.6g} >= 1")
    return params


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    cfg = _config(args)
    params = _load_params(cfg)
    horizon = _get(cfg, "horizon", float, 1000.0)
    delta = _get(cfg, "delta", float, 1.0)
    cfg.update(horizon=repr(horizon), delta=repr(delta), seed=str(_seed(cfg)))
    cfg.update(io.params_to_config(params))
    events = simulate(params, horizon, _seed(cfg))
    binned = aggregate(events, delta)
    out = _prepare_out(args.out)
    meta = _meta(cfg, horizon=repr(horizon), delta=repr(delta), **io.params_to_config(params))
    io.write_events(out / "events.csv", events, meta)
    io.write_counts(out / "counts.csv", binned, meta)
    io.write_config(out / "config.txt", cfg)
    print(f"simulated {events.counts.sum()} events ({', '.join(map(str, events.counts))}) "
          f"in {binned.K} bins -> {out}")
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args)
    kind = io.file_kind(args.input)
    if args.method == "mle" and kind != "events":
        raise UsageError("method mle needs an events file (columns time,process)")
    if args.method != "mle" and kind != "counts":
        raise UsageError(f"method {args.method} needs a counts file (columns bin_index,count_...); "
                         "run 'simulate' or 'ingest' to produce one")
    seed = _seed(cfg)
    cfg.update(method=args.method, input=Path(args.input).name, seed=str(seed))
    start = time.perf_counter()
    if kind == "events":
        events = io.read_events(args.input, horizon=_get(cfg, "horizon", float, None))
        result = fit_mle(events, settings=_optimizer(cfg))
    else:
        binned = io.read_counts(args.input, delta=_get(cfg, "delta", float, None))
        if args.method == "binned":
            result = fit_binned_loglik(binned, settings=_optimizer(cfg))
        elif args.method == "inar":
            result = fit_inar(binned, _inar_config(cfg))
        else:
            result = mcem_fit(binned, _mcem_config(cfg, seed))
    wall = time.perf_counter() - start

    out = _prepare_out(args.out)
    meta = _meta(cfg, method=args.method)
    io.write_estimates(out / "estimates.csv", result.params, meta)
    report = [("method", args.method), ("loglik", result.loglik), ("iterations", result.iterations),
              ("converged", int(result.converged)), ("valid", int(result.valid)),
              ("message", result.message)]
    io.write_csv(out / "fit_report.csv", ["key", "value"], report, meta)
    io.write_config(out / "config.txt", cfg)
    p = result.params
    print(f"{args.method}: loglik {result.loglik:.6g}, {result.iterations} iterations, "
          f"converged={result.converged}, valid={result.valid}, wall time {wall:.2f}s")
    print(f"  nu    = {np.round(p.nu, 4).tolist()}")
    print(f"  alpha = {np.round(p.alpha, 4).tolist()}")
    print(f"  beta  = {np.round(p.beta, 4).tolist()}")
    print(f"  gamma = {np.round(p.alpha / p.beta, 4).tolist()}")
    return 0


def cmd_study(args) -> int:
    cfg = _config(args)
    params = _load_params(cfg)
    if args.reps is not None:
        cfg["reps"] = str(args.reps)
    if args.methods is not None:
        cfg["methods"] = args.methods
    if args.full_scale:
        cfg["horizon"] = "2000.0"
    seed = _seed(cfg)
    methods = tuple(m.strip() for m in cfg.get("methods", "mcem,binned,inar").split(",") if m.strip())
    study = StudyConfig(
        params=params, horizon=_get(cfg, "horizon", float, 1000.0), delta=_get(cfg, "delta", float, 1.0),
        reps=_get(cfg, "reps", int, 10), methods=methods, trim=_get(cfg, "trim", float, 0.05),
        seed=seed, mcem=_mcem_config(cfg, None), inar=_inar_config(cfg),
    )
    cfg.update(horizon=repr(study.horizon), delta=repr(study.delta), reps=str(study.reps),
               methods=",".join(study.methods), trim=repr(study.trim), seed=str(seed))
    cfg.update(io.params_to_config(params))
    start = time.perf_counter()
    result = run_study(study, args.workers)
    wall = time.perf_counter() - start

    out = _prepare_out(args.out)
    meta = _meta(cfg, reps=study.reps, trim=study.trim)
    for name, (cols, rows) in {"bias": bias_table(result), "mean_sd": mean_sd_table(result),
                               "mse": mse_table(result), "boxplot": boxplot_rows(result),
                               "replication_mse": replication_mse_rows(result)}.items():
        io.write_csv(out / f"{name}.csv", cols, rows, meta)
    io.write_csv(out / "gof.csv", ["replication", "method", "process", "n", "ks"], result.gof, meta)
    io.write_csv(out / "failures.csv", ["replication", "method", "error"], result.failures,
                 dict(meta, failure_counts=";".join(f"{m}:{c}" for m, c in result.failure_counts().items())))
    io.write_config(out / "config.txt", cfg)

    print(f"study: {study.reps} replications, T={study.horizon:g}, delta={study.delta:g}, "
          f"wall time {wall:.1f}s -> {out}")
    cols, rows = bias_table(result)
    print("trimmed relative bias:")
    print("  " + "  ".join(f"{c:>16}" for c in cols))
    for row in rows:
        print("  " + "  ".join(f"{v:>16}" if isinstance(v, str) else f"{v:>16.4f}" for v in row))
    fails = result.failure_counts()
    print("failures: " + ", ".join(f"{m}={c}" for m, c in fails.items()))
    others = [m for m in ("binned", "inar") if m in study.methods]
    if "mcem" in study.methods and others:
        print(f"mcem has the smallest trimmed MSE for {dominance_count(result, 'mcem', others)} "
              f"of {len(result.names)} parameters")
    return 0


def cmd_gof(args) -> int:
    cfg = _config(args)
    seed = _seed(cfg)
    kind = io.file_kind(args.input)
    if kind not in ("events", "counts"):
        raise UsageError("gof input must be an events or counts file")
    cfg.update(input=Path(args.input).name, params=",".join(Path(p).name for p in args.params),
               seed=str(seed))
    data = (io.read_events(args.input, horizon=_get(cfg, "horizon", float, None)) if kind == "events"
            else io.read_counts(args.input, delta=_get(cfg, "delta", float, None)))
    out = _prepare_out(args.out)
    meta = _meta(cfg, input_kind=kind)
    if kind == "counts":
        meta["latent_times"] = "one consistent proposal per parameter set"
    ks_rows, qq_rows = [], []
    labels = [Path(p).stem for p in args.params]
    if len(set(labels)) < len(labels):
        labels = [f"{Path(p).parent.name}/{Path(p).stem}" for p in args.params]
    if len(set(labels)) < len(labels):
        labels = [f"params_{i + 1}" for i in range(len(args.params))]
    for i, (path, label) in enumerate(zip(args.params, labels)):
        params = io.read_params(path)
        if params.P != data.P:
            raise UsageError(f"{path} has P={params.P} but the input has P={data.P}")
        events = data if kind == "events" else consistent_proposal(
            data, params, np.random.SeedSequence(seed, spawn_key=(i,)))
        report = transform_times(params, events)
        for p in range(params.P):
            n = len(report.interarrivals[p])
            if n == 0:
                print(f"{label}: process {p + 1} has fewer than 2 events; skipped", file=sys.stderr)
                continue
            ks_rows.append([label, p + 1, n, report.ks_stat[p], critical_value(n)])
            qq_rows += [[label, p + 1, e, q] for e, q in report.qq_pairs[p]]
            print(f"{label}: process {p + 1}: n={n}, KS={report.ks_stat[p]:.4f} "
                  f"(5% critical {critical_value(n):.4f})")
    io.write_csv(out / "ks.csv", ["params", "process", "n", "ks", "critical_5pct"], ks_rows, meta)
    io.write_csv(out / "qq.csv", ["params", "process", "empirical", "theoretical"], qq_rows, meta)
    io.write_config(out / "config.txt", cfg)
    return 0


def cmd_ingest(args) -> int:
    cfg = _config(args)
    labels = [s.strip() for s in args.labels.split(",")] if args.labels else None
    data, labels, origin = io.ingest_events(args.input, args.time_col, args.label_col, args.delta,
                                            labels=labels, start=args.start, end=args.end,
                                            exact=args.exact)
    cfg.update(input=Path(args.input).name, time_col=args.time_col, label_col=args.label_col,
               delta=repr(args.delta), labels=",".join(labels), start=repr(origin))
    if args.end is not None:
        cfg["end"] = repr(args.end)
    out = _prepare_out(args.out)
    meta = _meta(cfg, labels=",".join(labels), origin=repr(origin))
    if args.exact:
        io.write_events(out / "events.csv", data, meta)
        print(f"ingested {data.counts.sum()} events for {data.P} processes over T={data.horizon:g}")
    else:
        io.write_counts(out / "counts.csv", data, meta)
        print(f"ingested {data.totals.sum()} events into {data.K} bins x {data.P} processes")
    print("process labels: " + ", ".join(f"{i + 1}={lab}" for i, lab in enumerate(labels)))
    io.write_config(out / "config.txt", cfg)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="hawkes-agg", formatter_class=fmt, epilog=CONFIG_KEYS,
        description="Fit multivariate Hawkes processes to binned event counts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate events and their bin counts",
                       formatter_class=fmt, epilog=CONFIG_KEYS)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate parameters from events or counts",
                       formatter_class=fmt, epilog=CONFIG_KEYS)
    p.add_argument("--method", required=True, choices=["mcem", "mle", "binned", "inar"])
    p.add_argument("--input", required=True, help="events CSV (mle) or counts CSV")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("study", help="replicated simulation study", formatter_class=fmt,
                       epilog=CONFIG_KEYS)
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--methods", help="comma separated subset of mcem,binned,inar")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default: HAWKES_AGG_THREADS or CPU count)")
    p.add_argument("--full-scale", action="store_true", help="use T=2000")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("gof", help="time-rescaling diagnostics", formatter_class=fmt,
                       epilog=CONFIG_KEYS)
    p.add_argument("--params", required=True, action="append",
                   help="estimates CSV (parameter,value); repeat to compare several")
    p.add_argument("--input", required=True, help="events CSV or counts CSV")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("ingest", help="bin a raw event log")
    p.add_argument("--input", required=True)
    p.add_argument("--time-col", required=True)
    p.add_argument("--label-col", required=True)
    p.add_argument("--delta", type=float, help="bin width (omit with --exact to keep raw times)")
    p.add_argument("--labels", help="comma separated label order; default first-seen")
    p.add_argument("--start", type=float, help="window start (default: first time floored to delta)")
    p.add_argument("--end", type=float, help="window end")
    p.add_argument("--exact", action="store_true", help="write exact event times instead of counts")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "ingest" and args.delta is None and not args.exact:
        parser.error("ingest needs --delta unless --exact is given")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StationarityError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, DegenerateDataError, ConsistencyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
