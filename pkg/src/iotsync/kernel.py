"""Transition kernel of the delay chain X_k and its stationary analysis.

X_k is the number of blocks the device lags behind the global chain at the
end of its k-th protocol execution. Between two executions the device either
stays awake (probability ``1 - p_s``) or sleeps for ``t_s`` seconds, during
which a Poisson number ``q`` of blocks accumulates. Execution durations are
deterministic given the scenario, so every kernel entry is a Poisson pmf
evaluated at ``lambda_b * duration``, mixed over ``q`` for the sleep branch.

Two truncations keep the matrix finite:

* the destination state is capped at ``n_max``; the Poisson upper tail is
  folded into that last column, so no mass is lost there;
* the sum over ``q`` stops at the smallest ``q_max`` whose Poisson tail is at
  most ``eps_trunc``. This is the only mass discarded, and rows are
  renormalized afterwards.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO

import numpy as np
from scipy.special import gammainc, gammaln, xlogy

from .params import ModelConfig, Protocol
from .timing import (
    DataUsage,
    p1_catchup_duration,
    p1_sync_duration,
    p2_catchup_duration,
    p2_sync_duration,
)


class StationaryError(RuntimeError):
    pass


def poisson_pmf(m: int, mean: float) -> float:
    """P[M = m] for M ~ Poisson(mean), evaluated in log space."""
    if m < 0:
        return 0.0
    if mean == 0:
        return 1.0 if m == 0 else 0.0
    return math.exp(m * math.log(mean) - mean - math.lgamma(m + 1))


def _pmf_table(means: np.ndarray, n_max: int) -> np.ndarray:
    """Rows of Poisson pmfs over 0..n_max with the tail folded into n_max.

    ``means`` has shape (K,); the result has shape (K, n_max + 1).
    """
    means = np.asarray(means, dtype=float)[:, None]
    m = np.arange(n_max, dtype=float)[None, :]
    body = np.exp(xlogy(m, means) - means - gammaln(m + 1))
    # P[M >= n_max] is the regularized lower incomplete gamma P(n_max, mean)
    tail = gammainc(n_max, means)
    return np.hstack([body, tail])


def sleep_arrivals(cfg: ModelConfig) -> np.ndarray:
    """Poisson(lambda_b * t_s) weights for q = 0..q_max.

    ``q_max`` is the smallest value with ``P[Q > q_max] <= eps_trunc``.
    """
    a = cfg.blockchain.lambda_b * cfg.device.t_s
    if a == 0:
        return np.ones(1)
    upper = int(math.ceil(a + 40 * math.sqrt(a) + 60))
    q = np.arange(upper + 1, dtype=float)
    tail = gammainc(q + 1, a)  # P[Q > q]
    q_max = int(np.argmax(tail <= cfg.eps_trunc))
    q = q[: q_max + 1]
    return np.exp(xlogy(q, a) - a - gammaln(q + 1))


def _mix_over_sleep(table: np.ndarray, weights: np.ndarray, n: int) -> np.ndarray:
    # table[k] is the destination row for a catch-up of k blocks
    return weights @ table[n : n + len(weights)]


# --- P1 rows ---------------------------------------------------------------

def awake_kernel_row_p1(n: int, cfg: ModelConfig, n_max: int) -> np.ndarray:
    duration = p1_sync_duration(cfg) if n == 0 else p1_catchup_duration(n, cfg)
    return _pmf_table([cfg.blockchain.lambda_b * duration], n_max)[0]


def _wake_table(cfg: ModelConfig, n_max: int, n_weights: int, duration) -> np.ndarray:
    ks = range(n_max + n_weights)
    lam = cfg.blockchain.lambda_b
    return _pmf_table(np.array([lam * duration(k) for k in ks]), n_max)


def sleep_kernel_row_p1(n: int, cfg: ModelConfig, n_max: int) -> np.ndarray:
    """Destination distribution after a sleep, before renormalization."""
    w = sleep_arrivals(cfg)
    table = _wake_table(cfg, n_max, len(w), lambda k: p1_catchup_duration(k, cfg, waking=True))
    return _mix_over_sleep(table, w, n)


# --- P2 rows ---------------------------------------------------------------

def awake_kernel_row_p2(n: int, cfg: ModelConfig, n_max: int) -> np.ndarray:
    lam, p_m = cfg.blockchain.lambda_b, cfg.blockchain.p_m
    if n > 0:
        return _pmf_table([lam * p2_catchup_duration(n, cfg)], n_max)[0]
    rows = _pmf_table([lam * p2_sync_duration(cfg, matched=True),
                       lam * p2_sync_duration(cfg, matched=False)], n_max)
    return p_m * rows[0] + (1 - p_m) * rows[1]


def _p2_sleep_tables(cfg: ModelConfig, n_max: int, n_weights: int):
    no_match = _wake_table(cfg, n_max, n_weights, lambda k: p2_catchup_duration(k, cfg, waking=True))
    match = _wake_table(cfg, n_max, n_weights,
                        lambda k: p2_catchup_duration(k, cfg, waking=True, any_match=True))
    return match, no_match


def _p2_sleep_weights(cfg: ModelConfig, w: np.ndarray):
    # the event must appear in at least one of the q blocks produced during sleep
    none_matched = (1.0 - cfg.blockchain.p_m) ** np.arange(len(w))
    return w * (1.0 - none_matched), w * none_matched


def sleep_kernel_row_p2(n: int, cfg: ModelConfig, n_max: int) -> np.ndarray:
    w = sleep_arrivals(cfg)
    match, no_match = _p2_sleep_tables(cfg, n_max, len(w))
    w_match, w_none = _p2_sleep_weights(cfg, w)
    return _mix_over_sleep(match, w_match, n) + _mix_over_sleep(no_match, w_none, n)


# --- kernels ---------------------------------------------------------------

@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic matrix of P[X_{k+1} = m | X_k = n] for n, m in 0..n_max.

    ``truncation_mass`` is the largest per-row mass dropped by the finite
    sleep sum (before renormalization). ``overflow_mass`` is the largest
    per-row probability of lagging ``n_max`` blocks or more, which the last
    column absorbs; a value near one means ``n_max`` is too small for the
    parameters at hand.
    """

    matrix: np.ndarray
    n_max: int
    truncation_mass: float
    overflow_mass: float
    protocol: Protocol

    def to_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "m", "prob"])
        for n, row in enumerate(self.matrix):
            for m, p in enumerate(row):
                writer.writerow([n, m, repr(float(p))])


def _assemble(awake: np.ndarray, sleep: np.ndarray, cfg: ModelConfig, n_max: int) -> TransitionKernel:
    p_s = cfg.device.p_s
    raw = (1 - p_s) * awake + p_s * sleep
    deficit = np.clip(1.0 - raw.sum(axis=1), 0.0, None)
    matrix = raw / raw.sum(axis=1, keepdims=True)
    matrix.setflags(write=False)
    return TransitionKernel(
        matrix=matrix,
        n_max=n_max,
        truncation_mass=float(deficit.max()),
        overflow_mass=float(matrix[:, -1].max()) if n_max > 0 else 0.0,
        protocol=cfg.device.protocol,
    )


def kernel_p1(cfg: ModelConfig, n_max: int | None = None) -> TransitionKernel:
    n_max = cfg.n_max if n_max is None else n_max
    w = sleep_arrivals(cfg)
    table = _wake_table(cfg, n_max, len(w), lambda k: p1_catchup_duration(k, cfg, waking=True))
    awake = np.array([awake_kernel_row_p1(n, cfg, n_max) for n in range(n_max + 1)])
    sleep = np.array([_mix_over_sleep(table, w, n) for n in range(n_max + 1)])
    return _assemble(awake, sleep, cfg, n_max)


def kernel_p2(cfg: ModelConfig, n_max: int | None = None) -> TransitionKernel:
    n_max = cfg.n_max if n_max is None else n_max
    w = sleep_arrivals(cfg)
    match, no_match = _p2_sleep_tables(cfg, n_max, len(w))
    w_match, w_none = _p2_sleep_weights(cfg, w)
    awake = np.array([awake_kernel_row_p2(n, cfg, n_max) for n in range(n_max + 1)])
    sleep = np.array([_mix_over_sleep(match, w_match, n) + _mix_over_sleep(no_match, w_none, n)
                      for n in range(n_max + 1)])
    return _assemble(awake, sleep, cfg, n_max)


def build_kernel(cfg: ModelConfig, n_max: int | None = None) -> TransitionKernel:
    """Kernel for whichever protocol ``cfg.device.protocol`` selects."""
    if cfg.device.protocol is Protocol.P1:
        return kernel_p1(cfg, n_max)
    return kernel_p2(cfg, n_max)


# --- stationary analysis ---------------------------------------------------

@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    residual: float

    def to_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "pi"])
        for n, p in enumerate(self.pi):
            writer.writerow([n, repr(float(p))])


def stationary(kernel: TransitionKernel | np.ndarray, max_residual: float = 1e-10) -> StationaryDistribution:
    """Solve pi P = pi, sum(pi) = 1 with a dense linear solve.

    The last balance equation is replaced by the normalization constraint.
    """
    P = np.asarray(kernel.matrix if isinstance(kernel, TransitionKernel) else kernel, dtype=float)
    size = P.shape[0]
    A = P.T - np.eye(size)
    A[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise StationaryError(f"stationary solve failed: {exc}") from exc
    # round-off can leave -1e-20 style entries in far tail states
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.max(np.abs(pi @ P - pi)))
    if not np.isfinite(residual) or residual > max_residual:
        raise StationaryError(f"ill-conditioned kernel, residual {residual:.3g}")
    pi.setflags(write=False)
    return StationaryDistribution(pi=pi, residual=residual)


def prob_stay_synced(kernel: TransitionKernel) -> float:
    """P[X_{k+1} = 0 | X_k = 0]."""
    return float(kernel.matrix[0, 0])


def mean_idle_time(pi: StationaryDistribution, cfg: ModelConfig) -> float:
    """Expected idle seconds following one execution.

    The device idles only after ending synchronized and staying awake, and
    then waits an exponential time for the next block.
    """
    return float(pi.pi[0]) / cfg.blockchain.lambda_b * (1.0 - cfg.device.p_s)


def expected_usage_per_execution(pi: StationaryDistribution | np.ndarray, cfg: ModelConfig) -> DataUsage:
    """Stationary mean uplink/downlink bits of one execution.

    The execution following state n is a synchronized one (n = 0, awake), an
    awake catch-up of n blocks, or a wake-up catch-up of n + q blocks. The
    sleep expectations over q ~ Poisson(lambda_b t_s) are taken in closed
    form: E[q] = lambda_b t_s and P[no match in q blocks] = exp(-lambda_b t_s p_m).
    """
    pi = np.asarray(pi.pi if isinstance(pi, StationaryDistribution) else pi, dtype=float)
    bc, peers, dev = cfg.blockchain, cfg.link.n_peers, cfg.device
    p2 = dev.protocol is Protocol.P2
    unit = bc.l_h if p2 else bc.l_b
    info = bc.l_i + bc.l_poi
    n = np.arange(len(pi), dtype=float)
    mean_q = bc.lambda_b * dev.t_s

    catchup_ul = (peers + 1) * bc.l_n
    awake_ul = np.where(n == 0, bc.l_r, catchup_ul)
    awake_dl = peers * bc.l_r + np.where(n == 0, unit, n * unit)
    sleep_dl = peers * bc.l_r + (n + mean_q) * unit
    if p2:
        awake_dl = awake_dl + np.where(n == 0, bc.p_m * info, 0.0)
        sleep_dl = sleep_dl + (1.0 - math.exp(-mean_q * bc.p_m)) * info

    ul = (1 - dev.p_s) * awake_ul + dev.p_s * catchup_ul
    dl = (1 - dev.p_s) * awake_dl + dev.p_s * sleep_dl
    return DataUsage(float(pi @ ul), float(pi @ dl))


def expected_dl_per_execution(kernel: TransitionKernel, pi: StationaryDistribution | np.ndarray,
                              cfg: ModelConfig) -> float:
    if kernel.protocol is not cfg.device.protocol:
        raise ValueError("kernel and config disagree on the protocol")
    return expected_usage_per_execution(pi, cfg).dl_bits


def synchronized_dl_ratio(cfg: ModelConfig) -> float:
    """P2/P1 downlink ratio of a single synchronized execution.

    The P2 execution carries the event data with probability ``p_m``.
    """
    bc, peers = cfg.blockchain, cfg.link.n_peers
    p1 = peers * bc.l_r + bc.l_b
    p2 = peers * bc.l_r + bc.l_h + bc.p_m * (bc.l_i + bc.l_poi)
    return p2 / p1


def analytic_summary(cfg: ModelConfig) -> dict:
    """Kernel-derived metrics used by the experiment harness."""
    kernel = build_kernel(cfg)
    pi = stationary(kernel)
    usage = expected_usage_per_execution(pi, cfg)
    return {
        "kernel": kernel,
        "pi": pi,
        "p_sync": prob_stay_synced(kernel),
        "idle_time": mean_idle_time(pi, cfg),
        "ul_per_exec": usage.ul_bits,
        "dl_per_exec": usage.dl_bits,
    }


__all__ = [
    "StationaryDistribution",
    "StationaryError",
    "TransitionKernel",
    "analytic_summary",
    "awake_kernel_row_p1",
    "awake_kernel_row_p2",
    "build_kernel",
    "expected_dl_per_execution",
    "expected_usage_per_execution",
    "kernel_p1",
    "kernel_p2",
    "mean_idle_time",
    "poisson_pmf",
    "prob_stay_synced",
    "sleep_arrivals",
    "sleep_kernel_row_p1",
    "sleep_kernel_row_p2",
    "stationary",
    "synchronized_dl_ratio",
]
