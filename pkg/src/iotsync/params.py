"""Model parameters shared by the analytic engine and the simulator.

Units are fixed throughout: lengths in bits, times in seconds, rates in
bits/second and the block rate in 1/seconds. The config-file reader accepts
a handful of unit suffixes and converts them on the way in.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path


class ConfigError(ValueError):
    """Raised when a configuration violates a model invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


class Protocol(str, Enum):
    P1 = "P1"  # full blocks
    P2 = "P2"  # headers plus matched event info with proof of inclusion

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class BlockchainParams:
    """Block process and message lengths. Defaults are the Ethereum-like values."""

    lambda_b: float = 1 / 12
    l_b: float = 40_000.0
    l_h: float = 800.0
    l_n: float = 800.0
    l_r: float = 800.0
    l_i: float = 1000.0
    l_poi: float = 1536.0
    p_m: float = 0.5


@dataclass(frozen=True)
class LinkParams:
    """Wireless link towards the blockchain network (technology A by default)."""

    rate_ul_bps: float = 1e6
    rate_dl_bps: float = 1e6
    p_e_ul: float = 0.0
    p_e_dl: float = 0.0
    t_c: float = 0.1
    t_w: float = 0.5
    n_peers: int = 6


@dataclass(frozen=True)
class DeviceParams:
    p_s: float = 0.2
    t_s: float = 60.0
    protocol: Protocol = Protocol.P1


@dataclass(frozen=True)
class ModelConfig:
    blockchain: BlockchainParams = field(default_factory=BlockchainParams)
    link: LinkParams = field(default_factory=LinkParams)
    device: DeviceParams = field(default_factory=DeviceParams)
    n_max: int = 64
    eps_trunc: float = 1e-12


_PRESETS = {
    "techA": dict(rate_ul_bps=1e6, rate_dl_bps=1e6, t_c=0.1),
    "techB": dict(rate_ul_bps=1e5, rate_dl_bps=1.5e5, t_c=1.0),
}


def table_presets(name: str, **overrides) -> LinkParams:
    """Link parameters of one of the two reference radio technologies.

    techA is an LTE Cat-M1 class link, techB a Bluetooth Low Energy class
    link. Packet-error probabilities default to zero; ``overrides`` replaces
    any other LinkParams field.
    """
    try:
        preset = _PRESETS[name]
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}, expected one of {sorted(_PRESETS)}") from None
    return LinkParams(**{**preset, **overrides})


def _finite(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def validate_config(raw: ModelConfig) -> ModelConfig:
    """Check every invariant of ``raw`` and return it unchanged.

    Raises ConfigError naming the first offending field.
    """
    bc, link, dev = raw.blockchain, raw.link, raw.device

    for name in ("lambda_b", "l_b", "l_h", "l_n", "l_r", "l_i", "l_poi", "p_m"):
        if not _finite(getattr(bc, name)):
            raise ConfigError(name, "must be a finite number")
    if bc.lambda_b <= 0:
        raise ConfigError("lambda_b", "block rate must be positive")
    for name in ("l_b", "l_h", "l_n", "l_r", "l_i", "l_poi"):
        if getattr(bc, name) <= 0:
            raise ConfigError(name, "message length must be positive")
    if bc.l_h > bc.l_b:
        raise ConfigError("l_h", "l_h ≤ l_b violated (header longer than block)")
    if not 0 <= bc.p_m <= 1:
        raise ConfigError("p_m", "probability must lie in [0, 1]")

    for name in ("rate_ul_bps", "rate_dl_bps", "p_e_ul", "p_e_dl", "t_c", "t_w"):
        if not _finite(getattr(link, name)):
            raise ConfigError(name, "must be a finite number")
    for name in ("rate_ul_bps", "rate_dl_bps"):
        if getattr(link, name) <= 0:
            raise ConfigError(name, "bit-rate must be positive")
    for name in ("p_e_ul", "p_e_dl"):
        p_e = getattr(link, name)
        if p_e >= 1:
            raise ConfigError(name, "degenerate link: zero goodput")
        if p_e < 0:
            raise ConfigError(name, "probability must be non-negative")
    if link.t_c < 0:
        raise ConfigError("t_c", "connection time must be non-negative")
    if link.t_w < 0:
        raise ConfigError("t_w", "notification wait must be non-negative")
    if not isinstance(link.n_peers, int) or isinstance(link.n_peers, bool) or link.n_peers < 1:
        raise ConfigError("n_peers", "peer count must be an integer ≥ 1")

    if not _finite(dev.p_s) or not 0 <= dev.p_s <= 1:
        raise ConfigError("p_s", "probability must lie in [0, 1]")
    if not _finite(dev.t_s) or dev.t_s < 0:
        raise ConfigError("t_s", "sleep duration must be non-negative")
    if not isinstance(dev.protocol, Protocol):
        raise ConfigError("protocol", f"expected P1 or P2, got {dev.protocol!r}")

    if not isinstance(raw.n_max, int) or isinstance(raw.n_max, bool) or raw.n_max < 1:
        raise ConfigError("n_max", "state cap must be an integer ≥ 1")
    if not _finite(raw.eps_trunc) or not 0 < raw.eps_trunc < 1e-3:
        raise ConfigError("eps_trunc", "truncation tolerance must lie in (0, 1e-3)")
    return raw


# --- flat key = value config files ---------------------------------------

_SECTIONS = {
    "blockchain": BlockchainParams,
    "link": LinkParams,
    "device": DeviceParams,
}
_FIELD_SECTION = {f.name: sec for sec, cls in _SECTIONS.items() for f in dataclasses.fields(cls)}
_TOP_LEVEL = ("n_max", "eps_trunc")

_LENGTH_UNITS = {"bit": 1.0, "kbit": 1e3, "Mbit": 1e6}
_RATE_UNITS = {"bps": 1.0, "kbps": 1e3, "Mbps": 1e6}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3}
_KIND = {
    **dict.fromkeys(("l_b", "l_h", "l_n", "l_r", "l_i", "l_poi"), _LENGTH_UNITS),
    **dict.fromkeys(("rate_ul_bps", "rate_dl_bps"), _RATE_UNITS),
    **dict.fromkeys(("t_c", "t_w", "t_s"), _TIME_UNITS),
}
_NUMBER_UNIT = re.compile(r"^\s*([^\s]+?)\s*([A-Za-z]+)?\s*$")


def _parse_number(text: str) -> float:
    # "1/12" is accepted so block rates can be written as in the tables
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def parse_value(key: str, text: str):
    """Convert one textual config value for field ``key`` to model units."""
    text = text.strip()
    if key == "protocol":
        try:
            return Protocol(text.upper())
        except ValueError:
            raise ConfigError(key, f"expected P1 or P2, got {text!r}") from None
    if key in ("n_peers", "n_max"):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {text!r}") from None
    match = _NUMBER_UNIT.match(text)
    if match is None:
        raise ConfigError(key, f"cannot parse {text!r}")
    number, unit = match.groups()
    scale = 1.0
    if unit is not None:
        units = _KIND.get(key, {})
        if unit not in units:
            raise ConfigError(key, f"unit {unit!r} not accepted here")
        scale = units[unit]
    try:
        value = _parse_number(number)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(key, f"cannot parse {text!r}") from None
    return value * scale if scale != 1.0 else value


def config_from_mapping(values: dict, base: ModelConfig | None = None) -> ModelConfig:
    """Build a config from flat ``{field: value}`` pairs on top of ``base``.

    Values may be strings (parsed with units) or already-converted numbers.
    The result is not validated.
    """
    base = base or ModelConfig()
    grouped: dict[str, dict] = {sec: {} for sec in _SECTIONS}
    top: dict = {}
    for key, value in values.items():
        if isinstance(value, str):
            value = parse_value(key, value)
        if key in _FIELD_SECTION:
            grouped[_FIELD_SECTION[key]][key] = value
        elif key in _TOP_LEVEL:
            top[key] = value
        else:
            raise ConfigError(key, "unknown config key")
    return dataclasses.replace(
        base,
        blockchain=dataclasses.replace(base.blockchain, **grouped["blockchain"]),
        link=dataclasses.replace(base.link, **grouped["link"]),
        device=dataclasses.replace(base.device, **grouped["device"]),
        **top,
    )


def parse_config_text(text: str, base: ModelConfig | None = None) -> ModelConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        values[key.strip()] = value.strip()
    return validate_config(config_from_mapping(values, base))


def load_config(path: str | Path, base: ModelConfig | None = None) -> ModelConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def dump_config(cfg: ModelConfig) -> str:
    """Serialize to the flat text format in base units.

    Floats are written with ``repr`` so a reload reproduces them bit-exactly.
    """
    lines = []
    for sec, cls in _SECTIONS.items():
        lines.append(f"# {sec}")
        obj = getattr(cfg, sec)
        for f in dataclasses.fields(cls):
            lines.append(f"{f.name} = {getattr(obj, f.name)!r}" if f.name != "protocol"
                         else f"protocol = {obj.protocol.value}")
    lines.append("# truncation")
    lines.extend(f"{name} = {getattr(cfg, name)!r}" for name in _TOP_LEVEL)
    return "\n".join(lines) + "\n"


def get_param(cfg: ModelConfig, path: str):
    """Read a dotted parameter path such as ``device.t_s``."""
    section, _, name = path.rpartition(".")
    target = getattr(cfg, section) if section else cfg
    if not hasattr(target, name):
        raise ConfigError(path, "unresolvable parameter path")
    return getattr(target, name)


def with_param(cfg: ModelConfig, path: str, value) -> ModelConfig:
    """Return a copy of ``cfg`` with the dotted parameter ``path`` replaced."""
    section, _, name = path.rpartition(".")
    if section == "":
        if name not in _TOP_LEVEL:
            raise ConfigError(path, "unresolvable parameter path")
        return dataclasses.replace(cfg, **{name: value})
    if section not in _SECTIONS or _FIELD_SECTION.get(name) != section:
        raise ConfigError(path, "unresolvable parameter path")
    inner = dataclasses.replace(getattr(cfg, section), **{name: value})
    return dataclasses.replace(cfg, **{section: inner})
