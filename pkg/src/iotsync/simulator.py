"""Discrete-event simulation of one device synchronizing with the chain.

The global chain grows as a Poisson process. The device alternates between
three states: idle (awake and synchronized), executing a protocol, and
sleeping. The loop follows the device through ``num_executions`` protocol
executions:

* after each execution it falls asleep for ``t_s`` with probability ``p_s``;
  waking always starts a catch-up that pays the connection time, even if no
  block arrived meanwhile;
* otherwise, if blocks arrived during the execution, a catch-up starts
  immediately;
* otherwise the device idles until the next block, whose arrival starts a
  synchronized execution.

Randomness comes from independent streams spawned from one seed (block
arrivals, sleep decisions, event matches, link errors), so switching the
timing mode leaves the block process untouched.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .link import DirectionalLink, PacketizationPolicy, sample_transfer_time
from .params import ModelConfig, Protocol, validate_config
from .timing import (
    DataUsage,
    ExecutionScenario,
    billed_messages,
    execution_data_usage,
    execution_duration,
)

TRACE_HEADER = ["k", "t_start", "t_end", "n_before", "x_k", "waking", "matched", "ul_bits", "dl_bits"]


class DeviceState(enum.Enum):
    IDLE = "idle"
    EXECUTING = "executing"
    SLEEPING = "sleeping"


class TimingMode(str, enum.Enum):
    EXPECTED = "expected"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class ExecutionRecord:
    """One protocol execution.

    ``n_before`` is the lag the device carried into this execution (the
    previous X). A waking catch-up downloads ``n_before + q`` blocks, where
    ``q`` arrived during the sleep; a synchronized execution fetches only the
    block that triggered it. ``x_k`` is the lag when the execution ends.
    """

    k: int
    t_start: float
    t_end: float
    n_before: int
    x_k: int
    was_waking: bool
    matched: bool
    data: DataUsage
    q: int = 0
    synchronized: bool = False

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class SimTrace:
    records: list[ExecutionRecord]
    sojourns: dict[DeviceState, float]
    seed: int
    config: ModelConfig
    timing_mode: TimingMode
    clock: float
    global_height: int
    local_height: int
    block_times: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def x(self) -> np.ndarray:
        return np.fromiter((r.x_k for r in self.records), dtype=np.int64, count=len(self.records))

    def to_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in self.records:
            writer.writerow([r.k, repr(r.t_start), repr(r.t_end), r.n_before, r.x_k,
                             int(r.was_waking), int(r.matched),
                             repr(r.data.ul_bits), repr(r.data.dl_bits)])


class _BlockSource:
    """Lazily generated Poisson block arrivals with per-block match flags."""

    _CHUNK = 4096

    def __init__(self, rate: float, p_m: float, arrivals: np.random.Generator,
                 matches: np.random.Generator):
        self._scale = 1.0 / rate
        self._p_m = p_m
        self._arrivals = arrivals
        self._matches = matches
        self._times = np.empty(0)
        self._flags = np.empty(0, dtype=bool)
        self._i = 0
        self._last = 0.0
        self.history: list[np.ndarray] = []

    def _refill(self):
        gaps = self._arrivals.exponential(self._scale, self._CHUNK)
        times = self._last + np.cumsum(gaps)
        self._last = float(times[-1])
        self._times = times
        self._flags = self._matches.random(self._CHUNK) < self._p_m
        self._i = 0
        self.history.append(times)

    def peek(self) -> float:
        if self._i >= len(self._times):
            self._refill()
        return float(self._times[self._i])

    def pop(self) -> tuple[float, bool]:
        t = self.peek()
        matched = bool(self._flags[self._i])
        self._i += 1
        return t, matched

    def drain_until(self, t: float) -> tuple[int, bool]:
        """Consume every arrival at or before ``t``; return (count, any matched)."""
        count, any_match = 0, False
        while self.peek() <= t:
            _, matched = self.pop()
            count += 1
            any_match = any_match or matched
        return count, any_match

    def consumed_times(self) -> np.ndarray:
        if not self.history:
            return np.empty(0)
        done = self.history[:-1] + [self.history[-1][: self._i]]
        return np.concatenate(done)


def _stochastic_duration(scenario: ExecutionScenario, cfg: ModelConfig, links: dict,
                         policy: PacketizationPolicy, rng: np.random.Generator) -> float:
    messages, fixed = billed_messages(scenario, cfg)
    return fixed + sum(sample_transfer_time(m.bits, links[m.direction], policy, rng) for m in messages)


def run_simulation(cfg: ModelConfig, seed: int, num_executions: int,
                   timing_mode: TimingMode | str = TimingMode.EXPECTED,
                   packetization: PacketizationPolicy | None = None) -> SimTrace:
    """Simulate ``num_executions`` protocol executions starting synchronized at t = 0."""
    cfg = validate_config(cfg)
    timing_mode = TimingMode(timing_mode)
    if num_executions < 1:
        raise ValueError("num_executions must be at least 1")
    policy = packetization or PacketizationPolicy()

    arrivals_rng, sleep_rng, match_rng, link_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
    )
    bc, dev = cfg.blockchain, cfg.device
    protocol = dev.protocol
    blocks = _BlockSource(bc.lambda_b, bc.p_m if protocol is Protocol.P2 else 0.0,
                          arrivals_rng, match_rng)

    stochastic = timing_mode is TimingMode.STOCHASTIC
    links = {
        "ul": DirectionalLink(cfg.link.rate_ul_bps, cfg.link.p_e_ul),
        "dl": DirectionalLink(cfg.link.rate_dl_bps, cfg.link.p_e_dl),
    }
    duration_cache: dict[ExecutionScenario, float] = {}
    usage_cache: dict[ExecutionScenario, DataUsage] = {}

    def duration_of(scenario: ExecutionScenario) -> float:
        if stochastic:
            return _stochastic_duration(scenario, cfg, links, policy, link_rng)
        if scenario not in duration_cache:
            duration_cache[scenario] = execution_duration(scenario, cfg)
        return duration_cache[scenario]

    def usage_of(scenario: ExecutionScenario) -> DataUsage:
        if scenario not in usage_cache:
            usage_cache[scenario] = execution_data_usage(scenario, cfg)
        return usage_cache[scenario]

    # exact clock increments per state, summed with fsum at the end so the
    # totals telescope to the final clock
    spans: dict[DeviceState, list[float]] = {state: [] for state in DeviceState}
    records: list[ExecutionRecord] = []
    clock = 0.0
    global_height = 0
    local_height = 0
    x = 0
    sleeping = False

    for k in range(num_executions):
        q = 0
        if sleeping:
            wake = clock + dev.t_s
            q, any_match = blocks.drain_until(wake)
            global_height += q
            spans[DeviceState.SLEEPING].append(wake - clock)
            clock = wake
            scenario = ExecutionScenario(protocol, x + q, waking=True,
                                         matched=any_match and protocol is Protocol.P2)
        elif x > 0:
            scenario = ExecutionScenario(protocol, x)
        else:
            arrival, block_match = blocks.pop()
            spans[DeviceState.IDLE].append(arrival - clock)
            clock = arrival
            global_height += 1
            scenario = ExecutionScenario(protocol, 1, synchronized=True,
                                         matched=block_match and protocol is Protocol.P2)

        start = clock
        end = start + duration_of(scenario)
        # the device downloads everything known at the start of the execution
        local_height = global_height
        arrived, _ = blocks.drain_until(end)
        global_height += arrived
        spans[DeviceState.EXECUTING].append(end - start)
        clock = end

        records.append(ExecutionRecord(
            k=k, t_start=start, t_end=end, n_before=x, x_k=arrived,
            was_waking=scenario.waking, matched=scenario.matched,
            data=usage_of(scenario), q=q,
            synchronized=scenario.synchronized,
        ))
        x = arrived
        assert local_height <= global_height and global_height - local_height == x
        sleeping = bool(sleep_rng.random() < dev.p_s)

    return SimTrace(
        records=records,
        sojourns={state: math.fsum(v) for state, v in spans.items()},
        seed=seed,
        config=cfg,
        timing_mode=timing_mode,
        clock=clock,
        global_height=global_height,
        local_height=local_height,
        block_times=blocks.consumed_times(),
    )


@dataclass(frozen=True)
class EmpiricalKernel:
    """Transition frequencies estimated from a trace.

    Rows never visited are NaN and flagged in ``observed``.
    """

    matrix: np.ndarray
    visits: np.ndarray
    observed: np.ndarray
    n_max: int


def transition_counts(x: np.ndarray, n_max: int) -> np.ndarray:
    x = np.minimum(np.asarray(x, dtype=np.int64), n_max)
    counts = np.zeros((n_max + 1, n_max + 1), dtype=np.int64)
    np.add.at(counts, (x[:-1], x[1:]), 1)
    return counts


def empirical_kernel(trace: SimTrace | np.ndarray, n_max: int) -> EmpiricalKernel:
    """Histogram of X_{k+1} for each observed X_k; lags beyond ``n_max`` saturate."""
    x = trace.x if isinstance(trace, SimTrace) else np.asarray(trace)
    if len(x) < 2:
        raise ValueError("insufficient transitions: need at least two executions")
    counts = transition_counts(x, n_max)
    visits = counts.sum(axis=1)
    observed = visits > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(observed[:, None], counts / np.maximum(visits, 1)[:, None], np.nan)
    return EmpiricalKernel(matrix=matrix, visits=visits, observed=observed, n_max=n_max)


def time_fractions(trace: SimTrace) -> tuple[float, float, float]:
    """(idle, sleep, executing) shares of the simulated time."""
    if not trace.records:
        raise ValueError("empty trace")
    s = trace.sojourns
    total = s[DeviceState.IDLE] + s[DeviceState.SLEEPING] + s[DeviceState.EXECUTING]
    return (s[DeviceState.IDLE] / total, s[DeviceState.SLEEPING] / total,
            s[DeviceState.EXECUTING] / total)


def idle_spells(trace: SimTrace, warmup: int = 0) -> np.ndarray:
    """Idle seconds following each execution, skipping the first ``warmup``.

    The idle spell after execution k is the gap before execution k + 1 when
    that one was not a wake-up (zero otherwise). The final execution has no
    observed successor and is left out.
    """
    records = trace.records
    if len(records) < warmup + 2:
        raise ValueError("trace too short for the requested warm-up")
    starts = np.array([r.t_start for r in records[warmup + 1:]])
    ends = np.array([r.t_end for r in records[warmup:-1]])
    waking = np.array([r.was_waking for r in records[warmup + 1:]])
    return np.where(waking, 0.0, starts - ends)


def idle_time_per_execution(trace: SimTrace, warmup: int = 0) -> float:
    return float(idle_spells(trace, warmup).mean())


def trace_data_usage(trace: SimTrace, warmup: int = 0) -> DataUsage:
    """Mean uplink and downlink bits per execution, skipping ``warmup`` records."""
    records = trace.records[warmup:]
    if not records:
        raise ValueError("empty trace")
    ul = np.fromiter((r.data.ul_bits for r in records), float, len(records))
    dl = np.fromiter((r.data.dl_bits for r in records), float, len(records))
    return DataUsage(float(ul.mean()), float(dl.mean()))


def sync_probability(trace: SimTrace, warmup: int = 0) -> tuple[float, float, int]:
    """Empirical P[X_{k+1} = 0 | X_k = 0] with its binomial standard error and sample size."""
    x = trace.x[warmup:]
    prev, nxt = x[:-1], x[1:]
    visits = int(np.count_nonzero(prev == 0))
    if visits == 0:
        return float("nan"), float("nan"), 0
    p = float(np.count_nonzero(nxt[prev == 0] == 0)) / visits
    return p, float(np.sqrt(p * (1 - p) / visits)), visits


def with_protocol(cfg: ModelConfig, protocol: Protocol) -> ModelConfig:
    return dataclasses.replace(cfg, device=dataclasses.replace(cfg.device, protocol=protocol))
