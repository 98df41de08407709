"""Command-line interface: ``gaussfi {fi,qfi,optimize,strategy,mle}``.

Model parameters not known to the parser are taken as overrides, e.g.
``gaussfi fi --model squeeze-coherent --alpha 1.4142 --meas heterodyne``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, GaussFIError, NumericalError
from .fisher import (
    fi_gaussian,
    global_strategy_fi,
    optimal_local_isothermal,
    optimize_single_mode,
    qfi_terms,
)
from .gaussian import GaussianMeasurement, heterodyne, homodyne, measurement_from_squeeze_angle, measurement_sum
from .mle import mse_sweep, write_trials_csv
from .models import REGISTRY, ModelConfig, ParametricModel, load_model_config

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _round(x):
    """Round floats to 12 significant digits, recursively."""
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.12g}") if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _fmt(x) -> str:
    return f"{x:.12g}" if isinstance(x, (float, np.floating)) else str(x)


def parse_overrides(tokens: list[str]) -> dict:
    """Turn ``--key value`` / ``--key=value`` pairs into a mapping of numbers."""
    out: dict = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key, sep, value = tok[2:].partition("=")
        if not sep:
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for --{key}")
            value = tokens[i + 1]
            i += 1
        i += 1
        try:
            out[key.replace("-", "_")] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"value for --{key} is not a number: {value!r}") from exc
    return out


def parse_measurement(spec: str, model: ParametricModel) -> GaussianMeasurement:
    """Measurement from a short description.

    ``heterodyne``, ``homodyne:q``, ``homodyne:p``, ``homodyne:<phi>`` (records
    ``q cos phi + p sin phi``), ``squeezed:<s>,<xi>`` or ``optimal``. Single-mode
    descriptions are repeated on every mode.
    """
    k = model.n_modes
    kind, _, arg = spec.partition(":")
    if kind == "heterodyne" and not arg:
        return heterodyne(k)
    if kind == "optimal" and not arg:
        if k != 1:
            raise ConfigError("--meas optimal needs a single-mode model")
        return optimize_single_mode(model).measurement
    try:
        if kind == "homodyne":
            phi = {"q": 0.0, "p": math.pi / 2}.get(arg)
            if phi is None:
                phi = float(arg)
            single = homodyne(phi + math.pi / 2)
        elif kind == "squeezed":
            s, xi = (float(v) for v in arg.split(","))
            single = measurement_from_squeeze_angle(s, xi)
        else:
            raise ConfigError(f"unknown measurement {spec!r}")
    except ValueError as exc:
        if isinstance(exc, GaussFIError):
            raise
        raise ConfigError(f"cannot parse measurement {spec!r}") from exc
    return single if k == 1 else measurement_sum(*([single] * k))


def parse_m(spec: str) -> list[int]:
    """``"3"`` or an inclusive range ``"2:6"``."""
    try:
        if ":" in spec:
            lo, hi = (int(v) for v in spec.split(":"))
            values = list(range(lo, hi + 1))
        else:
            values = [int(spec)]
    except ValueError as exc:
        raise ConfigError(f"--m must be an integer or a range a:b, got {spec!r}") from exc
    if not values or min(values) < 1:
        raise ConfigError(f"--m must describe positive integers, got {spec!r}")
    return values


def _int_list(spec: str) -> list[int]:
    try:
        values = [int(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma separated list of integers, got {spec!r}") from exc
    if not values or min(values) < 1:
        raise ConfigError(f"expected positive integers, got {spec!r}")
    return values


def _model(args) -> tuple[ModelConfig, ParametricModel]:
    cfg = load_model_config(args.model, args.overrides)
    model = cfg.build()
    if cfg.copies > 1:
        model = model.copies(cfg.copies)
    return cfg, model


def _header(cfg: ModelConfig, command: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "model": cfg.to_dict()}


def _references(cfg: ModelConfig) -> dict:
    return dict(REGISTRY[cfg.model].reference_values)


def _emit(args, payload: dict, rows: list[dict] | None = None) -> None:
    """Write ``payload`` (JSON) or ``rows`` (CSV) to ``--output`` when given."""
    if not args.output:
        return
    path = Path(args.output)
    if args.format == "csv":
        rows = rows if rows is not None else [{k: v for k, v in payload.items() if not isinstance(v, dict)}]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
        path.write_text(buf.getvalue())
    else:
        path.write_text(json.dumps(_round(payload), indent=2, ensure_ascii=False) + "\n")


def _print_refs(cfg: ModelConfig) -> None:
    refs = _references(cfg)
    if refs:
        print("published reference values: " + ", ".join(f"{k}={_fmt(v)}" for k, v in refs.items()))


def cmd_fi(args) -> int:
    cfg, model = _model(args)
    meas = parse_measurement(args.meas, model)
    fi = fi_gaussian(model, meas)
    print(f"measurement: {meas.describe()}")
    print(f"f_d     = {_fmt(fi.f_d)}")
    print(f"f_sigma = {_fmt(fi.f_sigma)}")
    print(f"total   = {_fmt(fi.total)}")
    _print_refs(cfg)
    payload = _header(cfg, "fi") | {"measurement": meas.describe(), **fi.to_dict()}
    _emit(args, payload)
    return EXIT_OK


def cmd_qfi(args) -> int:
    cfg, model = _model(args)
    q = qfi_terms(model)
    print(f"displacement = {_fmt(q.f_d)}")
    print(f"covariance   = {_fmt(q.f_sigma)}")
    print(f"qfi          = {_fmt(q.total)}")
    _print_refs(cfg)
    payload = _header(cfg, "qfi") | {
        "displacement": q.f_d,
        "covariance": q.f_sigma,
        "qfi": q.total,
        "reference_values": _references(cfg),
    }
    _emit(args, payload)
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg, model = _model(args)
    if args.term == "isothermal":
        opt = optimal_local_isothermal(model)
        print(f"measurement: {opt.measurement.describe()}")
        print(f"z_star = {', '.join(_fmt(z) for z in opt.z_star)}")
        print(f"total  = {_fmt(opt.fi)}")
        payload = _header(cfg, "optimize") | {
            "term": "isothermal",
            "measurement": opt.measurement.describe(),
            "z_star": list(opt.z_star),
            "swapped": list(opt.swapped),
            "mu": opt.mu,
            "total": opt.fi,
        }
        _emit(args, payload)
        return EXIT_OK
    if model.n_modes != 1:
        raise ConfigError("optimize searches single-mode measurements; use --term isothermal for k > 1")
    opt = optimize_single_mode(model, args.term)
    meas = opt.measurement
    print(f"measurement: {meas.describe()}")
    if meas.is_ideal:
        print(f"xi      = {_fmt(meas.xi)}")
    print(f"f_d     = {_fmt(opt.fi.f_d)}")
    print(f"f_sigma = {_fmt(opt.fi.f_sigma)}")
    print(f"total   = {_fmt(opt.fi.total)}")
    _print_refs(cfg)
    payload = _header(cfg, "optimize") | {
        "term": args.term,
        "measurement": meas.describe(),
        "xi": meas.xi if meas.is_ideal else None,
        **opt.fi.to_dict(),
    }
    _emit(args, payload)
    return EXIT_OK


STRATEGY_COLUMNS = ("m", "local", "global_lon", "bound", "qfi")


def cmd_strategy(args) -> int:
    cfg, model = _model(args)
    reports = [global_strategy_fi(model, m).to_dict() for m in parse_m(args.m)]
    rows = [{c: r[c] for c in STRATEGY_COLUMNS} for r in reports]
    print("  ".join(f"{c:>16}" for c in STRATEGY_COLUMNS))
    for row in rows:
        print("  ".join(f"{_fmt(row[c]):>16}" for c in STRATEGY_COLUMNS))
    _print_refs(cfg)
    payload = _header(cfg, "strategy") | {"rows": reports, "reference_values": _references(cfg)}
    _emit(args, payload, rows)
    return EXIT_OK


def cmd_mle(args) -> int:
    cfg = load_model_config(args.model, args.overrides)
    entry = REGISTRY[cfg.model]
    theta_true = args.theta_true
    if theta_true is None:
        theta_true = entry.mc_theta_true if entry.mc_theta_true is not None else cfg.theta0
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    ms = parse_m(args.m)
    if len(ms) != 1:
        raise ConfigError("mle takes a single --m")
    interval = None
    if args.interval:
        try:
            lo, hi = (float(v) for v in args.interval.split(","))
        except ValueError as exc:
            raise ConfigError(f"--interval expects lo,hi, got {args.interval!r}") from exc
        interval = (lo, hi)
    strategies = ["local", "global"] if args.strategy == "both" else [args.strategy]
    runs = []
    for strategy in strategies:
        runs += mse_sweep(
            cfg,
            strategy,
            ms[0],
            _int_list(args.nu),
            args.trials,
            args.seed,
            theta_true=theta_true,
            search_interval=interval,
            workers=args.workers,
        )
    cols = ("strategy", "nu", "mse", "crb", "qcrb", "mse_over_crb")
    print("  ".join(f"{c:>16}" for c in cols))
    for r in runs:
        s = r.summary()
        print("  ".join(f"{_fmt(s[c]):>16}" for c in cols))
    summary = _header(cfg, "mle") | {"theta_true": theta_true, "runs": [r.summary() for r in runs]}
    if args.output:
        path = Path(args.output)
        if args.format == "json":
            path.write_text(json.dumps(_round(summary), indent=2) + "\n")
        else:
            for r in runs:
                target = path if len(runs) == 1 else path.with_name(f"{path.stem}-{r.strategy}-nu{r.nu}{path.suffix}")
                write_trials_csv(r, target)
            path.with_name(path.stem + ".summary.json").write_text(json.dumps(_round(summary), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussfi", description="Fisher information of Gaussian measurements.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", default="squeeze-coherent", help="registry name or model JSON file")
        p.add_argument("--output", help="write results to this file")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fi", help="Fisher information of a measurement")
    common(p)
    p.add_argument("--meas", default="heterodyne", help="heterodyne | homodyne:q|p|<phi> | squeezed:<s>,<xi> | optimal")
    p.set_defaults(func=cmd_fi)

    p = sub.add_parser("qfi", help="quantum Fisher information")
    common(p)
    p.set_defaults(func=cmd_qfi)

    p = sub.add_parser("optimize", help="best single-mode Gaussian measurement")
    common(p)
    p.add_argument("--term", choices=("total", "d", "sigma", "isothermal"), default="total")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("strategy", help="local versus global strategy on m copies")
    common(p)
    p.add_argument("--m", default="2", help="copies, an integer or a range a:b")
    p.set_defaults(func=cmd_strategy)

    p = sub.add_parser("mle", help="Monte-Carlo MSE of the maximum likelihood estimator")
    common(p)
    p.add_argument("--strategy", choices=("local", "global", "both"), default="global")
    p.add_argument("--m", default="2")
    p.add_argument("--nu", default="3,5,10,20,30,50,100", help="comma separated repetition counts")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--theta-true", type=float, default=None)
    p.add_argument("--interval", help="MLE search interval lo,hi")
    p.add_argument("--workers", type=int, default=None, help="threads (default: GAUSSFI_THREADS or 1)")
    p.set_defaults(func=cmd_mle)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        args.overrides = parse_overrides(extra)
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GaussFIError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
