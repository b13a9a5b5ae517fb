"""Execution durations and data accounting for the two synchronization protocols.

P1 downloads full blocks; P2 downloads headers and, when the device's event
of interest shows up, the changed data plus its proof of inclusion.

Durations use expected goodputs and bill a single notification plus the
``t_w`` collection window for a synchronized execution. Data accounting, on
the other hand, counts every one of the ``N`` notifications or responses,
since those bits cross the link even when the wait window hides their
air-time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .link import effective_goodput
from .params import ModelConfig, Protocol


class DataUsage(NamedTuple):
    ul_bits: float
    dl_bits: float


class Message(NamedTuple):
    direction: str  # "ul" or "dl"
    bits: float


@dataclass(frozen=True)
class ExecutionScenario:
    """One protocol execution.

    ``missing_blocks`` is the number of blocks downloaded by a catch-up
    (already including anything accumulated during sleep); it is ignored for
    a synchronized execution, which always fetches exactly the one block that
    triggered it.
    """

    protocol: Protocol
    missing_blocks: int = 0
    waking: bool = False
    matched: bool = False
    synchronized: bool = False

    def __post_init__(self):
        if self.matched and self.protocol is not Protocol.P2:
            raise ValueError("only P2 transfers matched event information")
        if self.missing_blocks < 0:
            raise ValueError("missing_blocks must be non-negative")
        if self.synchronized and self.waking:
            raise ValueError("a waking execution is always a catch-up")
        if self.matched and not self.synchronized and self.missing_blocks == 0:
            raise ValueError("a matched catch-up needs at least one new block")


def goodputs(cfg: ModelConfig) -> tuple[float, float]:
    """(uplink, downlink) expected goodputs."""
    link = cfg.link
    return (effective_goodput(link.rate_ul_bps, link.p_e_ul),
            effective_goodput(link.rate_dl_bps, link.p_e_dl))


def _unit_length(cfg: ModelConfig, protocol: Protocol) -> float:
    return cfg.blockchain.l_b if protocol is Protocol.P1 else cfg.blockchain.l_h


def _sync_duration(cfg: ModelConfig, unit_bits: float) -> float:
    g_ul, g_dl = goodputs(cfg)
    l_r = cfg.blockchain.l_r
    return l_r / g_dl + cfg.link.t_w + l_r / g_ul + unit_bits / g_dl


def _catchup_duration(n: int, cfg: ModelConfig, unit_bits: float) -> float:
    g_ul, g_dl = goodputs(cfg)
    bc, peers = cfg.blockchain, cfg.link.n_peers
    return peers * bc.l_n / g_ul + peers * bc.l_r / g_dl + bc.l_n / g_ul + n * unit_bits / g_dl


def info_duration(cfg: ModelConfig) -> float:
    """Seconds to download the matched event data and its proof."""
    return (cfg.blockchain.l_i + cfg.blockchain.l_poi) / goodputs(cfg)[1]


def p1_sync_duration(cfg: ModelConfig) -> float:
    return _sync_duration(cfg, cfg.blockchain.l_b)


def p1_catchup_duration(n: int, cfg: ModelConfig, waking: bool = False) -> float:
    """Catch-up of ``n`` blocks; a waking device pays the connection time first."""
    return _catchup_duration(n, cfg, cfg.blockchain.l_b) + (cfg.link.t_c if waking else 0.0)


def p2_sync_duration(cfg: ModelConfig, matched: bool = False) -> float:
    t = _sync_duration(cfg, cfg.blockchain.l_h)
    return t + info_duration(cfg) if matched else t


def p2_catchup_duration(n: int, cfg: ModelConfig, waking: bool = False, any_match: bool = False) -> float:
    t = _catchup_duration(n, cfg, cfg.blockchain.l_h)
    if waking:
        t += cfg.link.t_c
    if any_match:
        t += info_duration(cfg)
    return t


def execution_duration(scenario: ExecutionScenario, cfg: ModelConfig) -> float:
    if scenario.protocol is Protocol.P1:
        if scenario.synchronized:
            return p1_sync_duration(cfg)
        return p1_catchup_duration(scenario.missing_blocks, cfg, scenario.waking)
    if scenario.synchronized:
        return p2_sync_duration(cfg, scenario.matched)
    return p2_catchup_duration(scenario.missing_blocks, cfg, scenario.waking, scenario.matched)


def billed_messages(scenario: ExecutionScenario, cfg: ModelConfig) -> tuple[list[Message], float]:
    """Messages whose air-time the duration formulas bill, plus fixed waits.

    Summing the expected transfer times of the messages and adding the fixed
    seconds reproduces :func:`execution_duration`. The stochastic simulator
    samples each message instead.
    """
    bc, link = cfg.blockchain, cfg.link
    unit = _unit_length(cfg, scenario.protocol)
    if scenario.synchronized:
        msgs = [Message("dl", bc.l_r), Message("ul", bc.l_r), Message("dl", unit)]
        fixed = link.t_w
    else:
        msgs = [Message("ul", bc.l_n)] * link.n_peers + [Message("dl", bc.l_r)] * link.n_peers
        msgs += [Message("ul", bc.l_n), Message("dl", scenario.missing_blocks * unit)]
        fixed = link.t_c if scenario.waking else 0.0
    if scenario.matched:
        msgs.append(Message("dl", bc.l_i + bc.l_poi))
    return msgs, fixed


def execution_data_usage(scenario: ExecutionScenario, cfg: ModelConfig) -> DataUsage:
    """Uplink and downlink bits of every message exchanged in one execution."""
    bc, peers = cfg.blockchain, cfg.link.n_peers
    unit = _unit_length(cfg, scenario.protocol)
    if scenario.synchronized:
        ul = bc.l_r
        dl = peers * bc.l_r + unit
    else:
        ul = peers * bc.l_n + bc.l_n
        dl = peers * bc.l_r + scenario.missing_blocks * unit
    if scenario.matched:
        dl += bc.l_i + bc.l_poi
    return DataUsage(float(ul), float(dl))
