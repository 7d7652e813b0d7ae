"""Uplink crowded cell-free massive MIMO-OFDM simulation."""

from .config import ConfigError, SystemConfig, validate_config

__all__ = ["ConfigError", "SystemConfig", "validate_config"]
__version__ = "0.1.0"
