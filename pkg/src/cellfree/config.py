"""System configuration with the reference simulation parameters as defaults.

Configuration files are flat YAML mappings whose keys are the field names of
:class:`SystemConfig`. Absent keys take their default; unknown keys are
rejected.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

BOLTZMANN = 1.381e-23
NOISE_TEMPERATURE = 290.0


class ConfigError(ValueError):
    """Raised for invalid or unknown configuration entries."""


@dataclass(frozen=True)
class SystemConfig:
    # OFDM / frame dimensioning
    num_subcarriers: int = 1024
    cp_length: int = 144
    pilot_symbols: int = 1
    slot_symbols: int = 7
    frame_slots: int = 4
    num_taps: int = 30

    # network
    antennas_per_ula: int = 100
    num_aps: int = 10
    num_ues: int = 200
    num_clusters: int = 2
    apsp_set_size: int = 4
    ap_selection_threshold: float = 0.7
    overlap_threshold: float = 1e-8
    activation_prob: float = 0.25
    area_side: float = 1000.0
    aoa_mode: str = "geometric"

    # radio
    bandwidth: float = 20e6
    carrier_freq: float = 2000.0  # MHz
    sample_duration: float = 48.8e-9
    ap_height: float = 15.0
    ue_height: float = 1.65
    breakpoint_near: float = 10.0
    breakpoint_far: float = 50.0
    pathloss_distance_unit: str = "km"
    shadow_sigma: float = 8.0
    tx_power: float = 0.5
    noise_figure: float = 9.0
    angle_spread: float = math.radians(2.0)
    delay_spread: float = 0.2e-6

    # fronthaul power model (carried for completeness, not consumed)
    fronthaul_iota: float = 0.4
    ue_circuit_power: float = 0.1
    ap_circuit_power: float = 0.1
    ap_fixed_power: float = 0.825
    traffic_power: float = 0.25

    # algorithms / Monte Carlo
    dinkelbach_tol: float = 0.02
    power_control_subcarrier: int = 0
    mc_samples: int = 1000
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.type in ("int", int):
                if isinstance(value, bool) or not isinstance(value, (int,)):
                    if isinstance(value, float) and value.is_integer():
                        object.__setattr__(self, f.name, int(value))
                    else:
                        raise ConfigError(f"{f.name}: expected an integer, got {value!r}")
            elif f.type in ("float", float):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{f.name}: expected a number, got {value!r}")
                object.__setattr__(self, f.name, float(value))
        self._validate()

    def _validate(self) -> None:
        counts = (
            "num_subcarriers", "cp_length", "pilot_symbols", "slot_symbols",
            "frame_slots", "num_taps", "antennas_per_ula", "num_aps", "num_ues",
            "num_clusters", "apsp_set_size", "mc_samples",
        )
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.pilot_symbols > self.slot_symbols:
            raise ConfigError("pilot_symbols: must not exceed slot_symbols")
        if self.cp_length > self.num_subcarriers:
            raise ConfigError("cp_length: must not exceed num_subcarriers")
        if not 0.0 < self.ap_selection_threshold <= 1.0:
            raise ConfigError("ap_selection_threshold: must lie in (0, 1]")
        if not 0.0 <= self.activation_prob <= 1.0:
            raise ConfigError("activation_prob: must lie in [0, 1]")
        if self.overlap_threshold < 0:
            raise ConfigError("overlap_threshold: must be nonnegative")
        if not self.breakpoint_near < self.breakpoint_far:
            raise ConfigError("breakpoint_near: must be smaller than breakpoint_far")
        if self.breakpoint_near <= 0:
            raise ConfigError("breakpoint_near: must be positive")
        if self.num_clusters > self.num_ues:
            raise ConfigError("num_clusters: must not exceed num_ues")
        if self.apsp_set_size > self.num_subcarriers * self.pilot_symbols:
            raise ConfigError("apsp_set_size: exceeds the number of phase shifts")
        if not 0 <= self.power_control_subcarrier < self.num_subcarriers:
            raise ConfigError("power_control_subcarrier: out of range")
        for name in ("angle_spread", "delay_spread", "sample_duration", "bandwidth",
                     "carrier_freq", "tx_power", "area_side", "dinkelbach_tol",
                     "ap_height", "ue_height"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be positive")
        if self.shadow_sigma < 0:
            raise ConfigError("shadow_sigma: must be nonnegative")
        if self.aoa_mode not in ("geometric", "uniform"):
            raise ConfigError("aoa_mode: must be 'geometric' or 'uniform'")
        if self.pathloss_distance_unit not in ("m", "km"):
            raise ConfigError("pathloss_distance_unit: must be 'm' or 'km'")

    # derived quantities -------------------------------------------------

    @property
    def num_antennas(self) -> int:
        """Total receive antennas facing a UE, N * L."""
        return self.antennas_per_ula * self.num_aps

    @property
    def num_shifts(self) -> int:
        return self.num_subcarriers * self.pilot_symbols

    @property
    def effective_taps(self) -> int:
        return min(self.num_taps, self.cp_length)

    @property
    def noise_power(self) -> float:
        return self.bandwidth * BOLTZMANN * NOISE_TEMPERATURE * 10 ** (self.noise_figure / 10)

    @property
    def rho(self) -> float:
        """Normalized transmit SNR, shared by pilot and data phases."""
        return self.tx_power / self.noise_power

    @property
    def overhead_factor(self) -> float:
        """Fraction of resources left for data after CP and pilot overhead."""
        nc, ncp = self.num_subcarriers, self.cp_length
        za, z = self.slot_symbols, self.pilot_symbols
        return nc / (nc + ncp) * (za - z) / za

    def replace(self, **changes: Any) -> "SystemConfig":
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def desk_scale(cls, **changes: Any) -> "SystemConfig":
        """Reduced dimensions that keep every structural relationship tractable."""
        base = dict(
            antennas_per_ula=16, num_aps=6, num_subcarriers=128, cp_length=16,
            num_taps=8, num_ues=40, dinkelbach_tol=1e-5,
        )
        base.update(changes)
        return cls().replace(**base)


def validate_config(source: str | Path | Mapping[str, Any] | None = None,
                    base: SystemConfig | None = None) -> SystemConfig:
    """Parse a configuration file (or mapping) into a validated config.

    Keys absent from ``source`` are filled from ``base`` (the reference
    defaults when omitted).
    """
    if source is None:
        entries: Mapping[str, Any] = {}
    elif isinstance(source, Mapping):
        entries = source
    else:
        text = Path(source).read_text()
        loaded = yaml.safe_load(text)
        if loaded is None:
            entries = {}
        elif not isinstance(loaded, dict):
            raise ConfigError(f"{source}: expected a key/value mapping")
        else:
            entries = loaded
    base = base if base is not None else SystemConfig()
    return base.replace(**dict(entries))


def dump_config(cfg: SystemConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
