"""Hardware configuration of the accelerator instance being modeled."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class EnergyRatios:
    """Per-access energy in MAC units: one MAC costs ``pe``."""

    pe: float = 1.0
    rf: float = 0.125
    sram: float = 6.0
    dram: float = 200.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.pe, self.rf, self.sram, self.dram)


@dataclass(frozen=True)
class HwConfig:
    """PE-array geometry, register-file capacities and clocking.

    The default instance is a 16x16 grid of PEs with 8 MAC lanes each,
    64 B compressed-data RFs split into four 16 B subbanks, a 16-slot
    4 B psum RF, and 1/8-size bitmap RFs.
    """

    array_rows: int = 16
    array_cols: int = 16
    macs_per_pe: int = 8
    if_rf_bytes: int = 64
    fl_rf_bytes: int = 64
    of_rf_bytes: int = 64
    if_bmp_bytes: int = 8
    fl_bmp_bytes: int = 8
    sram_bytes: int = 1536 * 1024
    sram_port_bytes: int = 32
    freq_ghz: float = 1.8
    energy_ratios: EnergyRatios = field(default_factory=EnergyRatios)
    # cycle-model constants: adder-tree pipeline fill per drain burst and
    # post-processing throughput (OF points per column per cycle)
    tree_fill_cycles: int = 4
    ppm_per_col: int = 4

    def __post_init__(self):
        if self.if_bmp_bytes * 8 != self.if_rf_bytes:
            raise ValueError("IF bitmap RF must be 1/8 of the IF data RF")
        if self.fl_bmp_bytes * 8 != self.fl_rf_bytes:
            raise ValueError("FL bitmap RF must be 1/8 of the FL data RF")
        if self.if_rf_bytes % self.macs_per_pe:
            raise ValueError("IF RF bytes must divide evenly across MAC lanes")
        for name in ("array_rows", "array_cols", "macs_per_pe", "sram_port_bytes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def pe_count(self) -> int:
        return self.array_rows * self.array_cols

    @property
    def total_macs(self) -> int:
        return self.pe_count * self.macs_per_pe

    @property
    def lane_bytes(self) -> int:
        """RF bytes owned by one MAC lane (positions per lane per round)."""
        return self.if_rf_bytes // self.macs_per_pe

    @property
    def of_slots(self) -> int:
        return self.of_rf_bytes // 4

    def peak_tops(self) -> float:
        """Dense peak throughput: 2 ops per MAC per cycle."""
        return self.total_macs * 2 * self.freq_ghz / 1000.0

    def with_ratios(self, ratios: EnergyRatios) -> "HwConfig":
        return replace(self, energy_ratios=ratios)


def load_hw_config(path) -> HwConfig:
    """Read a HwConfig from JSON; unknown fields are rejected."""
    with open(path) as fh:
        raw = json.load(fh)
    ratios = raw.pop("energy_ratios", None)
    known = {f for f in HwConfig.__dataclass_fields__ if f != "energy_ratios"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown HwConfig fields: {sorted(unknown)}")
    cfg = {k: v for k, v in raw.items()}
    if ratios is not None:
        if isinstance(ratios, (list, tuple)):
            cfg["energy_ratios"] = EnergyRatios(*ratios)
        else:
            cfg["energy_ratios"] = EnergyRatios(**ratios)
    return HwConfig(**cfg)
