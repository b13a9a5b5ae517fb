"""Traffic model and simulator for blockchain synchronization of IoT devices."""

from .params import (
    BlockchainParams,
    ConfigError,
    DeviceParams,
    LinkParams,
    ModelConfig,
    Protocol,
    table_presets,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "BlockchainParams",
    "ConfigError",
    "DeviceParams",
    "LinkParams",
    "ModelConfig",
    "Protocol",
    "table_presets",
    "validate_config",
]
