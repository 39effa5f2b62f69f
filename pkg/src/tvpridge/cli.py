"""Batch front door: estimate, simulate, forecast, and bench subcommands.

Configuration is strict key=value (unknown keys are rejected) and every run
writes a resolved-config echo next to its outputs so archived results can be
reproduced exactly.  Exit codes: 0 success, 2 usage/config error, 3 partial
failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .basis import (
    LOCAL_LEVEL,
    RANDOM_WALK,
    RANDOM_WALK_DRIFT,
    RegressionData,
    autoregressive,
    build_expansion,
)
from .errors import ConfigError, NumericalError, TvpRidgeError, ValidationError

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_PARTIAL = 3
_EXIT_NUMERICAL = 4

_COMMON_KEYS = {
    "input_path", "output_dir", "seed", "threads", "law",
    "folds", "grid_points", "grid_decades",
}
_ALLOWED_KEYS = {
    "estimate": _COMMON_KEYS | {
        "estimator", "target", "date_column", "bands_level", "mix_alpha",
        "max_rank",
    },
    "simulate": _COMMON_KEYS | {
        "design", "T", "K", "share", "noise", "replications", "estimators",
    },
    "forecast": _COMMON_KEYS | {
        "estimator", "target", "date_column", "horizon", "transform",
        "n_lags", "oos_start", "oos_end", "averaging", "guard",
    },
    "bench": _COMMON_KEYS | {"T_list", "K_list", "estimators", "runs"},
}


def _parse_law(text: str):
    if text == "random_walk":
        return RANDOM_WALK
    if text == "random_walk_drift":
        return RANDOM_WALK_DRIFT
    if text == "local_level":
        return LOCAL_LEVEL
    if text.startswith("ar:"):
        return autoregressive(float(text.split(":", 1)[1]))
    raise ConfigError(f"unknown law {text!r}")


def _read_config_file(path: str) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    return cfg


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = {}
    if args.config:
        cfg.update(_read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    allowed = _ALLOWED_KEYS[args.command]
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg.setdefault("seed", "0")
    cfg.setdefault("law", "random_walk")
    cfg.setdefault("folds", "5")
    cfg.setdefault("threads", os.environ.get("TVPRIDGE_THREADS", "1"))
    return cfg


def _echo_config(cfg: dict, output_dir: str, command: str) -> None:
    os.makedirs(output_dir, exist_ok=True)
    with open(os.path.join(output_dir, "config_resolved.txt"), "w") as fh:
        fh.write(f"# resolved configuration ({command}) v{__version__}\n")
        for key in sorted(cfg):
            fh.write(f"{key}={cfg[key]}\n")


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in row]
            )


def _load_table(
    path: str, target: str, date_column: str | None, require_regressors: bool = True
):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file")
        body = list(reader)
    if target not in header:
        raise ConfigError(f"target column {target!r} not found in {path}")
    date_idx = None
    if date_column is not None:
        if date_column not in header:
            raise ConfigError(f"date column {date_column!r} not found")
        date_idx = header.index(date_column)
    else:
        # treat a non-numeric first column as dates
        if body:
            try:
                float(body[0][0])
            except ValueError:
                date_idx = 0
    tgt_idx = header.index(target)
    dates, y, X = [], [], []
    names = [
        h for i, h in enumerate(header) if i not in (date_idx, tgt_idx)
    ]
    for lineno, row in enumerate(body, 2):
        if len(row) != len(header):
            raise ValidationError(f"{path}:{lineno}: wrong number of fields")
        try:
            y.append(float(row[tgt_idx]))
            X.append(
                [float(v) for i, v in enumerate(row) if i not in (date_idx, tgt_idx)]
            )
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: non-numeric cell ({exc})")
        dates.append(row[date_idx] if date_idx is not None else str(lineno - 2))
    y = np.asarray(y)
    X = np.asarray(X)
    if X.size == 0 or X.shape[1] == 0:
        if require_regressors:
            raise ConfigError("no regressor columns remain after target/date removal")
        # univariate input: features are built downstream from lags of y
        X = np.ones((y.shape[0], 1))
        names = ["const"]
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        bad = np.argwhere(~np.isfinite(X))
        where = f"row {bad[0][0] + 2}, column {names[bad[0][1]]}" if bad.size else "y"
        raise ValidationError(f"non-finite value at {where}")
    return dates, RegressionData(y=y, X=X, series_names=tuple(names))


def _default_spec(cfg: dict, data: RegressionData, law):
    from .tuning import default_cv_spec

    return default_cv_spec(
        build_expansion(data, law),
        n_folds=int(cfg["folds"]),
        seed=int(cfg["seed"]),
        points=int(cfg.get("grid_points", 60)),
        decades=int(cfg.get("grid_decades", 8)),
    )


def cmd_estimate(cfg: dict) -> int:
    from .estimators import estimate_2srr, estimate_glrr, estimate_grrrr
    from .ridge_core import dual_ridge
    from .tuning import kfold_cv

    for key in ("input_path", "output_dir", "target"):
        if key not in cfg:
            raise ConfigError(f"estimate requires {key}")
    estimator = cfg.get("estimator", "2srr")
    law = _parse_law(cfg["law"])
    dates, data = _load_table(cfg["input_path"], cfg["target"], cfg.get("date_column"))
    spec = _default_spec(cfg, data, law)
    out = cfg["output_dir"]
    _echo_config(cfg, out, "estimate")

    t0 = time.perf_counter()
    summary = {"estimator": estimator, "seed": int(cfg["seed"]), "version": __version__}
    bands_level = float(cfg["bands_level"]) if "bands_level" in cfg else None
    if estimator == "2srr":
        est = estimate_2srr(data, law, spec, bands_level=bands_level)
    elif estimator == "glrr":
        est, selected = estimate_glrr(
            data, law, spec, mix_alpha=float(cfg.get("mix_alpha", 0.5))
        )
        summary["selected"] = [bool(s) for s in selected]
    elif estimator in ("grrrr", "mv-grrrr"):
        from .estimators import estimate_mv_grrrr

        if estimator == "grrrr":
            est, fs = estimate_grrrr(
                data, law, spec, max_rank=int(cfg.get("max_rank", 5))
            )
        else:
            ests, fs = estimate_mv_grrrr(
                data, law, spec, max_rank=int(cfg.get("max_rank", 5))
            )
            est = ests[0]
        summary["rank"] = fs.rank
        if fs.rank:
            u = fs.loadings @ fs.factors
            summary["explained_variance"] = float(np.var(u))
    elif estimator == "ridge":
        expansion = build_expansion(data, law)
        cv = kfold_cv(expansion, data.y, spec)
        est = dual_ridge(expansion, data.y, cv.best_lambda, cv.best_lambda0)
    else:
        raise ConfigError(f"unknown estimator {estimator!r}")
    summary["wall_time_seconds"] = time.perf_counter() - t0
    summary["lambda"] = est.lam
    summary["lambda0"] = est.profile.lambda0
    summary["sigma_u_k"] = [float(v) for v in est.profile.sigma_u_k]

    names = list(data.series_names)
    if est.beta.shape[1] == 2 * len(names):
        names = names + [f"trend*{n}" for n in names]
    _write_csv(
        os.path.join(out, "beta_paths.csv"),
        ["date"] + names,
        ([dates[t]] + [float(v) for v in est.beta[t]] for t in range(data.T)),
    )
    _write_csv(
        os.path.join(out, "residuals.csv"),
        ["date", "residual"],
        ([dates[t], float(est.residuals[t])] for t in range(data.T)),
    )
    _write_csv(
        os.path.join(out, "sigma_eps.csv"),
        ["date", "sigma2"],
        ([dates[t], float(est.profile.sigma_eps_t[t])] for t in range(data.T)),
    )
    if est.bands is not None:
        for side, idx in (("lower", 0), ("upper", 1)):
            _write_csv(
                os.path.join(out, f"bands_{side}.csv"),
                ["date"] + names,
                (
                    [dates[t]] + [float(v) for v in est.bands[t, :, idx]]
                    for t in range(data.T)
                ),
            )
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return _EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    from .simlab import DgpSpec, default_estimators, run_study

    for key in ("output_dir",):
        if key not in cfg:
            raise ConfigError(f"simulate requires {key}")
    out = cfg["output_dir"]
    _echo_config(cfg, out, "simulate")
    spec = DgpSpec(
        design=cfg.get("design", "S1"),
        T=int(cfg.get("T", 300)),
        K=int(cfg.get("K", 6)),
        share_varying=float(cfg.get("share", 0.2)),
        noise=cfg.get("noise", "low"),
        seed=int(cfg["seed"]),
    )
    wanted = cfg.get("estimators", "2srr").split(",")
    all_est = default_estimators(n_folds=int(cfg["folds"]), seed=int(cfg["seed"]))
    unknown = [w for w in wanted if w not in all_est]
    if unknown:
        raise ConfigError(f"unknown estimators: {', '.join(unknown)}")
    result = run_study(
        [spec],
        {w: all_est[w] for w in wanted},
        replications=int(cfg.get("replications", 1)),
        csv_path=os.path.join(out, "study.csv"),
    )
    return _EXIT_PARTIAL if result.n_failed else _EXIT_OK


def cmd_forecast(cfg: dict) -> int:
    from .forecast import (
        ForecastTask,
        constant_model,
        dm_test,
        expanding_window_run,
        half_and_half,
        make_lag_matrix,
        rmspe,
        tvp_model,
    )

    for key in ("input_path", "output_dir", "target"):
        if key not in cfg:
            raise ConfigError(f"forecast requires {key}")
    law = _parse_law(cfg["law"])
    _, data = _load_table(
        cfg["input_path"], cfg["target"], cfg.get("date_column"),
        require_regressors=False,
    )
    out = cfg["output_dir"]
    _echo_config(cfg, out, "forecast")
    n_lags = int(cfg.get("n_lags", 2))
    X, y_aligned = make_lag_matrix(data.y, n_lags)
    fdata = RegressionData(y=y_aligned, X=X)
    task = ForecastTask(
        horizon=int(cfg.get("horizon", 1)),
        target_transform=cfg.get("transform", "level"),
        averaging=cfg.get("averaging", "true").lower() != "false",
        oos_start=int(cfg.get("oos_start", max(20, X.shape[0] // 2))),
        oos_end=int(cfg["oos_end"]) if "oos_end" in cfg else None,
    )
    guard = cfg.get("guard", "false").lower() == "true"
    bench = expanding_window_run(constant_model(), fdata, task)
    model = tvp_model(
        law,
        n_folds=int(cfg["folds"]),
        seed=int(cfg["seed"]),
        estimator=cfg.get("estimator", "2srr"),
    )
    run = expanding_window_run(model, fdata, task, guard=guard)
    avg = half_and_half(run.forecasts, bench.forecasts)

    cells = {"constant": bench.forecasts, cfg.get("estimator", "2srr"): run.forecasts,
             "half_and_half": avg}
    for name, fc in cells.items():
        _write_csv(
            os.path.join(out, f"forecasts_{name}.csv"),
            ["date", "forecast", "actual", "flag"],
            (
                [int(run.target_dates[i]), float(fc[i]), float(run.actuals[i]),
                 bool(run.fallback_flags[i] or run.guard_flags[i])]
                for i in range(len(fc))
            ),
        )
    base = rmspe(bench.forecasts, bench.actuals)
    summary_rows = []
    for name, fc in cells.items():
        r = rmspe(fc, run.actuals)
        if np.allclose(fc, bench.forecasts):
            p = 1.0
        else:
            p = dm_test(fc - run.actuals, bench.forecasts - bench.actuals,
                        task.horizon).p_value
        summary_rows.append([name, float(r / base), float(p)])
    _write_csv(
        os.path.join(out, "rmspe_summary.csv"),
        ["model", "rmspe_ratio_vs_constant", "dm_p_value"],
        summary_rows,
    )
    return _EXIT_OK


def cmd_bench(cfg: dict) -> int:
    from .simlab import benchmark_timing, default_estimators

    if "output_dir" not in cfg:
        raise ConfigError("bench requires output_dir")
    out = cfg["output_dir"]
    _echo_config(cfg, out, "bench")
    T_list = [int(v) for v in cfg.get("T_list", "300").split(",")]
    K_list = [int(v) for v in cfg.get("K_list", "6").split(",")]
    wanted = cfg.get("estimators", "2srr").split(",")
    all_est = default_estimators(n_folds=int(cfg["folds"]), seed=int(cfg["seed"]))
    unknown = [w for w in wanted if w not in all_est]
    if unknown:
        raise ConfigError(f"unknown estimators: {', '.join(unknown)}")
    rows = benchmark_timing(
        T_list, K_list, {w: all_est[w] for w in wanted},
        n_runs=int(cfg.get("runs", 1)),
    )
    _write_csv(
        os.path.join(out, "timings.csv"),
        ["T", "K", "estimator", "seconds"],
        ([r["T"], r["K"], r["estimator"], r["seconds"]] for r in rows),
    )
    return _EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvpridge",
        description="Time-varying-coefficient regression via exact ridge solves",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("estimate", "simulate", "forecast", "bench"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value configuration file")
        for key in sorted(_ALLOWED_KEYS[name]):
            p.add_argument(f"--{key.replace('_', '-')}", dest=key)
    return parser


_DISPATCH = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "forecast": cmd_forecast,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return _EXIT_CONFIG if exc.code not in (0, None) else _EXIT_OK
    try:
        cfg = _resolve_config(args)
        return _DISPATCH[args.command](cfg)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    except TvpRidgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
