"""Studies that pair the analytic kernel with the simulator.

Each ``cmd_*`` function returns a :class:`Table` (header plus rows) and a
few summary numbers; the CLI turns tables into CSV. Every simulated point
reuses the same seed, so a sweep compares parameter values under common
random numbers and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from . import kernel as kn
from . import simulator as sim
from .params import ConfigError, ModelConfig, Protocol, get_param, parse_value, validate_config, with_param

ENGINES = ("analytic", "simulate", "both")
METRICS = ("p_sync", "idle_time", "dl_per_exec")
DEFAULT_WARMUP = 100

DEFAULT_SWEEPS = {
    "device.t_s": [0.0, 30.0, 60.0, 300.0, 900.0, 1800.0],
    "link.p_e_dl": [0.0, 0.1, 0.3],
    "blockchain.l_b": [40e3, 400e3, 4000e3],
    "blockchain.lambda_b": [1 / 60, 1 / 12, 1 / 3],
}


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [row[i] for row in self.rows]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _check_engine(engine: str) -> None:
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}, got {engine!r}")


def non_increasing(values: Sequence[float], slack: float = 0.0) -> bool:
    vals = [v for v in values if not math.isnan(v)]
    return all(b <= a + slack for a, b in zip(vals, vals[1:]))


# --- validate ------------------------------------------------------------

@dataclass
class ValidateResult:
    table: Table
    max_discrepancy: float
    passed: bool
    rows_compared: int


def cmd_validate(cfg: ModelConfig, seed: int, num_executions: int, tolerance: float = 0.02,
                 timing: str = "expected", min_visits: int = 1000) -> ValidateResult:
    """Compare the analytic kernel with transition frequencies from a simulation.

    The discrepancy is the largest absolute entry difference over rows
    visited at least ``min_visits`` times.
    """
    if num_executions < 2:
        raise ValueError("insufficient transitions: need at least two executions")
    cfg = validate_config(cfg)
    analytic = kn.build_kernel(cfg)
    trace = sim.run_simulation(cfg, seed, num_executions, timing)
    emp = sim.empirical_kernel(trace, cfg.n_max)

    table = Table(["n", "m", "analytic", "empirical", "visits"])
    for n in np.flatnonzero(emp.observed):
        for m in range(cfg.n_max + 1):
            table.rows.append([int(n), m, float(analytic.matrix[n, m]), float(emp.matrix[n, m]),
                               int(emp.visits[n])])

    rows = emp.visits >= min_visits
    if rows.any():
        worst = float(np.max(np.abs(emp.matrix[rows] - analytic.matrix[rows])))
    else:
        worst = float("nan")
    passed = bool(rows.any()) and worst <= tolerance
    return ValidateResult(table, worst, passed, int(rows.sum()))


# --- sweep ---------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    base: ModelConfig
    engine: str = "analytic"

    def __post_init__(self):
        if not self.values:
            raise ValueError("sweep value list is empty")
        _check_engine(self.engine)
        get_param(self.base, self.parameter)

    def configs(self) -> list[ModelConfig]:
        return [validate_config(with_param(self.base, self.parameter, v)) for v in self.values]


def parse_sweep_values(parameter: str, text: str) -> tuple:
    """Parse ``"0,60,600"`` style lists using the field's unit rules."""
    name = parameter.rpartition(".")[2]
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    if not items:
        raise ValueError("sweep value list is empty")
    return tuple(parse_value(name, t) for t in items)


def _simulated_metric(trace: sim.SimTrace, metric: str, warmup: int) -> tuple[float, float]:
    if metric == "p_sync":
        p, se, _ = sim.sync_probability(trace)
        return p, se
    if metric == "idle_time":
        idle = sim.idle_spells(trace, warmup)
        return float(idle.mean()), float(idle.std(ddof=1) / math.sqrt(len(idle)))
    dl = np.array([r.data.dl_bits for r in trace.records[warmup:]])
    return float(dl.mean()), float(dl.std(ddof=1) / math.sqrt(len(dl)))


def cmd_sweep(spec: SweepSpec, metric: str, seed: int = 0, num_executions: int = 100_000,
              timing: str = "expected", warmup: int = DEFAULT_WARMUP) -> tuple[Table, dict]:
    """One row per sweep value with the metric from the requested engine(s).

    Returns the table and a dict of monotonicity flags (non-increasing) per
    engine column.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    key = metric
    header = ["value"]
    if spec.engine in ("analytic", "both"):
        header.append(f"analytic_{key}")
    if spec.engine in ("simulate", "both"):
        header += [f"simulated_{key}", "simulated_stderr"]
    table = Table(header)

    for value, cfg in zip(spec.values, spec.configs()):
        row = [float(value)]
        if spec.engine in ("analytic", "both"):
            summary = kn.analytic_summary(cfg)
            row.append(summary[key])
        if spec.engine in ("simulate", "both"):
            trace = sim.run_simulation(cfg, seed, num_executions, timing)
            row.extend(_simulated_metric(trace, metric, warmup))
        table.rows.append(row)

    flags = {}
    for col in header[1:]:
        if col != "simulated_stderr":
            flags[col] = non_increasing(table.column(col))
    return table, flags


# --- data usage ----------------------------------------------------------

def _same_except_protocol(a: ModelConfig, b: ModelConfig) -> bool:
    return sim.with_protocol(a, Protocol.P1) == sim.with_protocol(b, Protocol.P1)


def cmd_data_usage(cfg_p1: ModelConfig, cfg_p2: ModelConfig, p_m_values: Sequence[float],
                   engine: str = "analytic", seed: int = 0, num_executions: int = 100_000,
                   timing: str = "expected", warmup: int = DEFAULT_WARMUP) -> Table:
    """Mean per-execution data of P1 and P2 and their downlink ratio, per p_M.

    ``dl_ratio`` compares stationary means (per engine); ``dl_ratio_synced``
    is the closed-form ratio for one execution triggered while synchronized.
    """
    _check_engine(engine)
    if cfg_p1.device.protocol is not Protocol.P1 or cfg_p2.device.protocol is not Protocol.P2:
        raise ConfigError("protocol", "expected one P1 and one P2 config")
    if not _same_except_protocol(cfg_p1, cfg_p2):
        raise ConfigError("protocol", "P1 and P2 configs differ in fields other than the protocol")
    if not p_m_values:
        raise ValueError("p_m value list is empty")

    table = Table(["p_m", "engine", "ul_p1", "dl_p1", "ul_p2", "dl_p2", "dl_ratio", "dl_ratio_synced"])
    for p_m in p_m_values:
        c1 = validate_config(with_param(cfg_p1, "blockchain.p_m", p_m))
        c2 = validate_config(with_param(cfg_p2, "blockchain.p_m", p_m))
        synced = kn.synchronized_dl_ratio(c2)
        if engine in ("analytic", "both"):
            u1 = kn.expected_usage_per_execution(kn.stationary(kn.kernel_p1(c1)), c1)
            u2 = kn.expected_usage_per_execution(kn.stationary(kn.kernel_p2(c2)), c2)
            table.rows.append([float(p_m), "analytic", u1.ul_bits, u1.dl_bits, u2.ul_bits, u2.dl_bits,
                               u2.dl_bits / u1.dl_bits, synced])
        if engine in ("simulate", "both"):
            u1 = sim.trace_data_usage(sim.run_simulation(c1, seed, num_executions, timing), warmup)
            u2 = sim.trace_data_usage(sim.run_simulation(c2, seed, num_executions, timing), warmup)
            table.rows.append([float(p_m), "simulate", u1.ul_bits, u1.dl_bits, u2.ul_bits, u2.dl_bits,
                               u2.dl_bits / u1.dl_bits, synced])
    return table


# --- time fractions ------------------------------------------------------

def cmd_fractions(cfg: ModelConfig, seed: int, num_executions: int, t_s_values: Sequence[float],
                  timing: str = "expected", warmup: int = DEFAULT_WARMUP) -> Table:
    """Share of time idle / asleep / executing for each sleep duration."""
    if not t_s_values:
        raise ValueError("t_s value list is empty")
    table = Table(["t_s", "idle_frac", "sleep_frac", "exec_frac",
                   "simulated_idle_per_exec", "analytic_idle_per_exec"])
    for t_s in t_s_values:
        c = validate_config(with_param(cfg, "device.t_s", t_s))
        trace = sim.run_simulation(c, seed, num_executions, timing)
        idle, sleep, execute = sim.time_fractions(trace)
        analytic_idle = kn.mean_idle_time(kn.stationary(kn.build_kernel(c)), c)
        table.rows.append([float(t_s), idle, sleep, execute,
                           sim.idle_time_per_execution(trace, warmup), analytic_idle])
    return table

