"""Command-line front end: ``iotsync {validate,sweep,data-usage,fractions}``.

Exit codes: 0 success, 1 configuration or usage error, 2 tolerance breach.
"""

from __future__ import annotations

import argparse
import contextlib
import sys

from . import experiments as ex
from .params import (
    ConfigError,
    ModelConfig,
    Protocol,
    config_from_mapping,
    load_config,
    table_presets,
    validate_config,
)
from .simulator import with_protocol

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE = 0, 1, 2


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--preset", choices=["techA", "techB"],
                        help="replace the link bit-rates and t_c by a reference technology")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field (repeatable)")
    common.add_argument("--protocol", choices=["P1", "P2"])
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--executions", type=int, default=100_000)
    common.add_argument("--engine", choices=ex.ENGINES, default="both")
    common.add_argument("--timing", choices=["expected", "stochastic"], default="expected")
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--tolerance", type=float, default=0.02)
    common.add_argument("--warmup", type=int, default=ex.DEFAULT_WARMUP)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="iotsync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="analytic vs simulated transition kernel")

    sweep = sub.add_parser("sweep", parents=[common], help="metric along one parameter axis")
    sweep.add_argument("--param", default="device.t_s", help="dotted path, e.g. link.p_e_dl")
    sweep.add_argument("--values", help="comma-separated values (units allowed); default grid per axis")
    sweep.add_argument("--metric", choices=ex.METRICS, default="p_sync")

    usage = sub.add_parser("data-usage", parents=[common], help="P2 vs P1 data per execution")
    usage.add_argument("--p-m", default="0,0.25,0.5,0.75,1", help="comma-separated p_M values")

    frac = sub.add_parser("fractions", parents=[common], help="time shares idle/asleep/executing")
    frac.add_argument("--t-s", default="10,60,600", help="comma-separated sleep durations")
    return parser


def config_from_args(args) -> ModelConfig:
    cfg = load_config(args.config) if args.config else ModelConfig()
    if args.preset:
        preset = table_presets(args.preset)
        cfg = config_from_mapping(
            {"rate_ul_bps": preset.rate_ul_bps, "rate_dl_bps": preset.rate_dl_bps, "t_c": preset.t_c}, cfg)
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected KEY=VALUE")
        overrides[key.strip()] = value.strip()
    cfg = config_from_mapping(overrides, cfg)
    if args.protocol:
        cfg = with_protocol(cfg, Protocol(args.protocol))
    return validate_config(cfg)


@contextlib.contextmanager
def _output(path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


def _run(args) -> int:
    cfg = config_from_args(args)

    if args.command == "validate":
        result = ex.cmd_validate(cfg, args.seed, args.executions, args.tolerance, args.timing)
        with _output(args.out) as fh:
            result.table.write_csv(fh)
        print(f"max discrepancy {result.max_discrepancy:.6g} over {result.rows_compared} rows "
              f"(tolerance {args.tolerance})", file=sys.stderr)
        return EXIT_OK if result.passed else EXIT_TOLERANCE

    if args.command == "sweep":
        if args.values is not None:
            values = ex.parse_sweep_values(args.param, args.values)
        elif args.param in ex.DEFAULT_SWEEPS:
            values = tuple(ex.DEFAULT_SWEEPS[args.param])
        else:
            raise ValueError(f"no default grid for {args.param}; pass --values")
        spec = ex.SweepSpec(args.param, values, cfg, args.engine)
        table, flags = ex.cmd_sweep(spec, args.metric, args.seed, args.executions, args.timing, args.warmup)
        with _output(args.out) as fh:
            table.write_csv(fh)
        for column, ok in flags.items():
            print(f"{column}: {'non-increasing' if ok else 'NOT non-increasing'}", file=sys.stderr)
        return EXIT_OK

    if args.command == "data-usage":
        p_m_values = ex.parse_sweep_values("p_m", args.p_m)
        table = ex.cmd_data_usage(with_protocol(cfg, Protocol.P1), with_protocol(cfg, Protocol.P2),
                                  p_m_values, args.engine, args.seed, args.executions, args.timing,
                                  args.warmup)
        with _output(args.out) as fh:
            table.write_csv(fh)
        return EXIT_OK

    t_s_values = ex.parse_sweep_values("t_s", args.t_s)
    table = ex.cmd_fractions(cfg, args.seed, args.executions, t_s_values, args.timing, args.warmup)
    with _output(args.out) as fh:
        table.write_csv(fh)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
