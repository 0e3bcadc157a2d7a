"""Command-line entry point: ``dinendt {estimate,capacity,baseline,simulate,gradcheck}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .autodiff import ShapeError
from .baselines import (ar1_ff_capacity, awgn_capacity, ma1_fb_capacity, ma1_ff_capacity, peak_awgn_upper_bound)
from .checks import CASES, run_checks
from .data import DatasetError, ingest_csv, write_csv
from .training import (ConfigError, NumericalError, TrainConfig, baseline_for, run, simulate_iid_dataset)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("dinendt")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
GRADCHECK_TOL = 1e-4

_TUPLE_FIELDS = ("dine_head", "ndt_trunk", "mine_head")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser, skip=()) -> None:
    """One flag per TrainConfig field; unset flags leave the file or default value alone."""
    p.add_argument("--config", type=Path, help="TOML or JSON file with TrainConfig fields")
    for f in dataclasses.fields(TrainConfig):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        default = f.default
        if f.name in _TUPLE_FIELDS:
            kind = _int_tuple
        elif isinstance(default, bool):
            p.add_argument(flag, dest=f.name, nargs="?", const=True, type=_bool, default=None)
            continue
        elif isinstance(default, int):
            kind = int
        elif isinstance(default, float):
            kind = float
        else:
            kind = str
        p.add_argument(flag, dest=f.name, type=kind, default=None)


def _load_file(path: Path) -> dict:
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None


def resolve_config(args: argparse.Namespace, mode: str) -> TrainConfig:
    """Defaults, then the config file, then explicit flags."""
    values = _load_file(args.config) if getattr(args, "config", None) else {}
    if not isinstance(values, dict):
        raise ConfigError("config file must hold a table of TrainConfig fields")
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if values.get("mode", mode) != mode:
        raise ConfigError(f"config mode {values['mode']!r} does not match subcommand {mode!r}")
    values["mode"] = mode
    return TrainConfig.from_dict(values)


def write_curve(path: Path, curve) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "d_hat_y", "d_hat_yx", "estimate_nats"])
        for c in curve:
            w.writerow([c.step, repr(c.d_hat_y), repr(c.d_hat_yx), repr(c.estimate_nats)])


def _finite_or_none(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _run_training(args, mode: str) -> int:
    config = resolve_config(args, mode)
    dataset = None
    if mode == "estimate":
        if config.dataset:
            dataset = ingest_csv(config.dataset)
        else:
            dataset = simulate_iid_dataset(config, args.n_steps, independent=args.independent)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    every = max(1, config.steps // 20)

    def progress(point):
        if point.step % every == 0:
            log.info("step %d  d_y %.4f  d_yx %.4f  estimate %.4f nats",
                     point.step, point.d_hat_y, point.d_hat_yx, point.estimate_nats)

    result, seconds = run(config, dataset, progress=progress, checkpoint=out / "last_finite.json")
    write_curve(out / "curve.csv", result.curve)
    rep = result.report
    report = {
        "estimate_nats": rep.estimate_nats,
        "stderr": _finite_or_none(rep.stderr),
        "n_eval": rep.n_eval,
        "baseline_nats": baseline_for(config),
        "channel": config.channel_model().describe() if not config.dataset else {"dataset": config.dataset},
        "config": config.to_dict(),
        "seed": config.seed,
        "runtime_s": seconds,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps({k: report[k] for k in ("estimate_nats", "stderr", "baseline_nats", "runtime_s")}))
    return EXIT_OK


def cmd_estimate(args) -> int:
    return _run_training(args, "estimate")


def cmd_capacity(args) -> int:
    return _run_training(args, "capacity")


def cmd_baseline(args) -> int:
    ch, p = args.channel, args.power
    params = {"power": p, "sigma2": args.sigma2, "alpha": args.alpha, "feedback": args.feedback,
              "constraint": args.constraint}
    try:
        if ch == "awgn":
            if args.constraint == "peak_power":
                value, method = peak_awgn_upper_bound(p, args.sigma2), "peak-power ceiling 0.5 ln(1 + A^2/sigma2)"
            else:
                value, method = awgn_capacity(p, args.sigma2), "closed form 0.5 ln(1 + P/sigma2)"
        elif ch == "ma1":
            if args.feedback:
                value, method = ma1_fb_capacity(args.alpha, p), "quartic root -ln x0 by bisection"
            else:
                value, method = ma1_ff_capacity(args.alpha, p, args.n_freq), "spectral water-filling"
        else:
            if args.feedback:
                raise ConfigError("no feedback baseline for ar1_mimo")
            dim = args.dim or 4
            params["dim"] = dim
            value, method = ar1_ff_capacity(args.alpha, p, dim, args.n_freq), "spatial-spectral water-filling"
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps({"channel": ch, "params": params, "capacity_nats": value, "method": method}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = resolve_config(args, "estimate")
    ds = simulate_iid_dataset(config, args.n_steps, independent=args.independent)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ds)
    print(json.dumps({"path": str(out), "n_steps": ds.n_steps, "d_x": ds.d_x, "d_y": ds.d_y}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    errors = run_checks(args.seed, args.step, args.case or None)
    worst = max(errors.values())
    for name, err in errors.items():
        print(f"{name:14s} {err:.3e}")
    print(f"max_rel_error {worst:.3e}")
    return EXIT_OK if worst < GRADCHECK_TOL else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dinendt", description="Directed-information and capacity estimation for channels with memory")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", help="estimate the DI rate of a dataset or a simulated i.i.d. source")
    _add_config_flags(e, skip=("mode",))
    e.add_argument("--n-steps", type=int, default=200_000, help="length of the simulated source without --dataset")
    e.add_argument("--independent", action="store_true", help="simulate outputs independent of the inputs")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("capacity", help="optimise a generator against the estimator")
    _add_config_flags(c, skip=("mode", "dataset", "input_power"))
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_capacity)

    b = sub.add_parser("baseline", help="print an analytic capacity as JSON")
    b.add_argument("--channel", choices=("awgn", "ma1", "ar1_mimo"), required=True)
    b.add_argument("--power", type=float, required=True)
    b.add_argument("--sigma2", type=float, default=1.0)
    b.add_argument("--alpha", type=float, default=0.0)
    b.add_argument("--dim", type=int, default=0)
    b.add_argument("--feedback", action="store_true")
    b.add_argument("--constraint", choices=("average_power", "peak_power"), default="average_power")
    b.add_argument("--n-freq", type=int, default=1024)
    b.set_defaults(func=cmd_baseline)

    s = sub.add_parser("simulate", help="write i.i.d. Gaussian inputs through a channel as a dataset CSV")
    _add_config_flags(s, skip=("mode", "dataset"))
    s.add_argument("--n-steps", type=int, default=200_000)
    s.add_argument("--independent", action="store_true")
    s.add_argument("--out", required=True, help="CSV path")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gradcheck", help="finite-difference check of the differentiable pipeline")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--step", type=float, default=1e-6)
    g.add_argument("--case", action="append", choices=sorted(CASES))
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ShapeError) as exc:
        print(f"dinendt: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"dinendt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
