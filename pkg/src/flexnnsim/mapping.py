"""Tiling geometry shared by the simulator kernels and the cost model.

A layer + schedule pair is lowered to:

* spatial assignment — OC_P x OX_P x OY_P column groups, each of IC_P
  PEs packed into adder-tree subtrees within a column;
* a temporal tile-loop nest in schedule order, one "pass" per tile
  combination, where each pass holds OX_B*OY_B rounds (one round per
  output context) of IC_B x OC_B MACs per PE;
* drain / psum-spill events derived from the position of the reduction
  loops relative to the output loops.

Everything here is pure integer geometry: both the compiled and the
NumPy simulation kernels consume the same plan, which is what makes
their outputs bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .hw import HwConfig
from .schedule import Schedule, groups_per_column, next_pow2, tap_count, validate
from .tensor import LayerDesc

REDUCTION_DIMS = ("IC", "FX", "FY")
OUTPUT_DIMS = ("OX", "OY", "OC")

MAX_PASSES = 1 << 24


class MappingError(ValueError):
    """Schedule cannot be lowered onto the array."""


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def tile_trips(layer: LayerDesc, s: Schedule) -> dict[str, int]:
    """Tile-loop trip counts per dimension for this schedule."""
    if layer.op == "eltwise":
        return {
            "OX": ceil_div(ceil_div(layer.ox, s.ox_p), s.ox_b),
            "OY": ceil_div(ceil_div(layer.oy, s.oy_p), s.oy_b),
            "IC": ceil_div(layer.ic, s.ic_b),
            "OC": 1,
            "FX": 1,
            "FY": 1,
        }
    return {
        "OX": ceil_div(ceil_div(layer.ox, s.ox_p), s.ox_b),
        "OY": ceil_div(ceil_div(layer.oy, s.oy_p), s.oy_b),
        "IC": ceil_div(layer.ic, s.ic_p * s.ic_b),
        "OC": ceil_div(ceil_div(layer.oc, s.oc_p), s.oc_b),
        "FX": layer.fx,
        "FY": layer.fy,
    }


def psum_runs(layer: LayerDesc, s: Schedule) -> int:
    """Times each output tile is brought into residency.

    1 means psums stay in the OF RF until complete; anything larger
    forces an external spill/reload per extra visit.  A reduction loop
    contributes its trip count when it sits outside the innermost
    non-unit output loop.
    """
    if layer.op == "eltwise":
        return 1
    trips = tile_trips(layer, s)
    inner_out = -1
    for pos, dim in enumerate(s.loop_order):
        if dim in OUTPUT_DIMS and trips[dim] > 1:
            inner_out = pos
    if inner_out < 0:
        return 1
    runs = 1
    for pos, dim in enumerate(s.loop_order):
        if dim in REDUCTION_DIMS and trips[dim] > 1 and pos < inner_out:
            runs *= trips[dim]
    return runs


def _real_sizes(total: int, parts: int, block: int, tiles: int) -> np.ndarray:
    """Real extent per (partition chunk, tile), shape (parts, tiles).

    ``total`` points are split into ``parts`` chunks of ceil(total/parts)
    and each chunk into tiles of ``block``; entries are clipped to what
    actually exists (0 for fully padded tiles).
    """
    chunk = ceil_div(total, parts)
    starts = (
        np.arange(parts)[:, None] * chunk + np.arange(tiles)[None, :] * block
    )
    ends = np.minimum(
        np.minimum(starts + block, (np.arange(parts)[:, None] + 1) * chunk), total
    )
    return np.maximum(ends - starts, 0).astype(np.int64)


@dataclass
class MappingPlan:
    """Lowered geometry for one (layer, schedule, hw) triple."""

    layer: LayerDesc
    schedule: Schedule
    hw: HwConfig

    def __post_init__(self):
        layer, s, hw = self.layer, self.schedule, self.hw
        bad = validate(layer, s, hw)
        if bad:
            raise MappingError("; ".join(bad))

        self.trips = tile_trips(layer, s)
        self.order = tuple(s.loop_order)
        self.order_trips = [self.trips[d] for d in self.order]
        self.n_passes = reduce(lambda a, b: a * b, self.order_trips, 1)
        if self.n_passes > MAX_PASSES:
            raise MappingError(
                f"{self.n_passes} passes exceed the simulator cap {MAX_PASSES}; "
                "increase blocking/partitioning factors"
            )

        self.eltwise = layer.op == "eltwise"
        self.n_groups = s.oc_p * s.ox_p * s.oy_p
        self.groups_per_col = groups_per_column(s.ic_p, hw)
        self.cols_used = ceil_div(self.n_groups, self.groups_per_col)
        self.lane_bytes = hw.lane_bytes
        self.lanes_per_oc = hw.macs_per_pe // (1 if self.eltwise else s.oc_b)

        # real extents per (partition index, tile index)
        self.real_ox = _real_sizes(layer.ox, s.ox_p, s.ox_b, self.trips["OX"])
        self.real_oy = _real_sizes(layer.oy, s.oy_p, s.oy_b, self.trips["OY"])
        if self.eltwise:
            self.real_oc = np.ones((1, 1), dtype=np.int64)
            self.real_ic = _real_sizes(layer.ic, 1, s.ic_b, self.trips["IC"])
        else:
            self.real_oc = _real_sizes(layer.oc, s.oc_p, s.oc_b, self.trips["OC"])
            span = s.ic_p * s.ic_b
            # PE r of a group covers channels [tile*span + r*ic_b, +ic_b)
            starts = (
                np.arange(self.trips["IC"])[None, :] * span
                + np.arange(s.ic_p)[:, None] * s.ic_b
            )
            ends = np.minimum(starts + s.ic_b, layer.ic)
            self.real_ic = np.maximum(ends - starts, 0).astype(np.int64)

        self.runs = psum_runs(layer, s)
        self.drain_rate = min(tap_count(s.ic_p, hw), hw.ppm_per_col)

    # --- pass indexing ----------------------------------------------------

    def pass_tile_indices(self) -> dict[str, np.ndarray]:
        """Per-dimension tile index of every pass, in execution order."""
        idx = {}
        stride = self.n_passes
        for dim, trip in zip(self.order, self.order_trips):
            stride //= trip
            seq = (np.arange(self.n_passes) // stride) % trip
            idx[dim] = seq.astype(np.int64)
        return idx

    def _points_per_column(self, t_ox, t_oy, t_oc) -> np.ndarray:
        """Real OF points per column for one output-tile combination."""
        pts = (
            self.real_oc[:, t_oc][:, None, None]
            * self.real_ox[:, t_ox][None, :, None]
            * self.real_oy[:, t_oy][None, None, :]
        ).reshape(-1)
        padded = np.zeros(self.cols_used * self.groups_per_col, dtype=np.int64)
        padded[: pts.size] = pts
        return padded.reshape(self.cols_used, self.groups_per_col).sum(axis=1)

    def transfer_cycles(self) -> np.ndarray:
        """Outbound (drain + spill) cycles generated at the end of each pass.

        A scalar per pass: the worst column's drain serialization plus
        adder-tree pipeline fill, and the SRAM-port cycles of any psum
        spill leaving the column.  Mode-independent by construction.
        """
        idx = self.pass_tile_indices()
        out = np.zeros(self.n_passes, dtype=np.int64)

        red_last = np.ones(self.n_passes, dtype=bool)
        for dim in REDUCTION_DIMS:
            red_last &= idx[dim] == (self.trips[dim] - 1)

        # worst-column OF points for each pass's output tile
        combos = {}
        pts_max = np.zeros(self.n_passes, dtype=np.int64)
        keys = np.stack([idx["OX"], idx["OY"], idx["OC"]], axis=1)
        for serial in range(self.n_passes):
            key = (keys[serial, 0], keys[serial, 1], keys[serial, 2])
            if key not in combos:
                combos[key] = int(self._points_per_column(*key).max(initial=0))
            pts_max[serial] = combos[key]

        drain = red_last * (
            self.hw.tree_fill_cycles + ceil_div_arr(pts_max, self.drain_rate)
        )
        out += drain

        if self.runs > 1:
            # a departure spills the tile's psums; the matching reload is
            # charged on re-entry through the same SRAM port
            depart = np.zeros(self.n_passes, dtype=bool)
            switch = np.zeros(self.n_passes, dtype=bool)
            for dim in OUTPUT_DIMS:
                if self.trips[dim] > 1:
                    nxt = np.roll(idx[dim], -1)
                    switch |= nxt != idx[dim]
            switch[-1] = False
            depart = switch & ~red_last
            reload = np.roll(depart, 1)
            reload[0] = False
            spill_cycles = ceil_div_arr(pts_max * 4, self.hw.sram_port_bytes)
            out += depart * spill_cycles + reload * spill_cycles
        return out

    # --- totals used by access counting ------------------------------------

    def total_of_points(self) -> int:
        if self.eltwise:
            return self.layer.ox * self.layer.oy * self.layer.ic
        return self.layer.ox * self.layer.oy * self.layer.oc

    def spilled_points(self) -> int:
        return (self.runs - 1) * self.total_of_points()

    def fetch_events(self, relevant: tuple[str, ...]) -> int:
        """Fetch events for an operand touched by ``relevant`` dims.

        The operand is refetched once per iteration of every loop at or
        outside its innermost relevant non-unit loop.
        """
        inner = -1
        for pos, dim in enumerate(self.order):
            if dim in relevant and self.trips[dim] > 1:
                inner = pos
        events = 1
        for pos in range(inner + 1):
            events *= self.trips[self.order[pos]]
        return events

    def repeat_factor(self, relevant: tuple[str, ...]) -> int:
        """How many times the full relevant tile grid is swept."""
        grid = 1
        for dim in relevant:
            grid *= self.trips[dim]
        return self.fetch_events(relevant) // grid if grid else 1


def ceil_div_arr(a: np.ndarray, b: int) -> np.ndarray:
    return -(-a // b)
