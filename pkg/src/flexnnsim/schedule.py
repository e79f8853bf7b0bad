"""Schedule abstraction: loop order, blocking, partitioning.

A schedule pins how one layer's loop nest maps onto the PE array:

* ``loop_order`` — temporal order (outermost first) of the six loops
  OX, OY, IC, OC, FX, FY at tile granularity;
* ``blocking`` — points of a dimension resident in one PE per pass
  (IC_B input channels, OC_B output channels, OX_B x OY_B outputs);
* ``partitioning`` — spatial spread: IC_P PEs in a column cooperate on
  one output's channel range, and OC_P/OX_P/OY_P spread independent
  outputs across column groups.

Weight partitioning stays within a column; activation partitioning
spreads across columns.  Groups occupy adder-tree subtrees, so a
non-power-of-two IC_P rounds up to the next subtree size with zero-fed
lanes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace

from .hw import HwConfig
from .tensor import DIM_NAMES, LayerDesc

TEMPLATES = ("vxv", "mxm")


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@dataclass(frozen=True)
class Schedule:
    loop_order: tuple[str, ...]
    ic_b: int = 1
    oc_b: int = 1
    ox_b: int = 1
    oy_b: int = 1
    ic_p: int = 1
    oc_p: int = 1
    ox_p: int = 1
    oy_p: int = 1
    template: str = "vxv"

    @property
    def blocking(self) -> tuple[int, int, int, int]:
        return (self.ic_b, self.oc_b, self.ox_b, self.oy_b)

    @property
    def partitioning(self) -> tuple[int, int, int, int]:
        return (self.ic_p, self.oc_p, self.ox_p, self.oy_p)

    @property
    def mapped_pes(self) -> int:
        return self.ic_p * self.oc_p * self.ox_p * self.oy_p

    def sort_key(self):
        """Canonical ordering used for deterministic enumeration."""
        return (
            tuple(DIM_NAMES.index(d) for d in self.loop_order),
            self.ic_p,
            self.ic_b,
            self.oc_b,
            self.ox_b,
            self.oy_b,
            self.oc_p,
            self.ox_p,
            self.oy_p,
            TEMPLATES.index(self.template),
        )

    def to_json_dict(self) -> dict:
        return {
            "loop_order": list(self.loop_order),
            "blocking": {"ic": self.ic_b, "oc": self.oc_b, "ox": self.ox_b, "oy": self.oy_b},
            "partitioning": {
                "ic": self.ic_p,
                "oc": self.oc_p,
                "ox": self.ox_p,
                "oy": self.oy_p,
            },
            "template": self.template,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "Schedule":
        unknown = set(raw) - {"loop_order", "blocking", "partitioning", "template"}
        if unknown:
            raise ValueError(f"unknown schedule fields: {sorted(unknown)}")
        blocking = raw.get("blocking", {})
        part = raw.get("partitioning", {})
        return cls(
            loop_order=tuple(raw["loop_order"]),
            ic_b=blocking.get("ic", 1),
            oc_b=blocking.get("oc", 1),
            ox_b=blocking.get("ox", 1),
            oy_b=blocking.get("oy", 1),
            ic_p=part.get("ic", 1),
            oc_p=part.get("oc", 1),
            ox_p=part.get("ox", 1),
            oy_p=part.get("oy", 1),
            template=raw.get("template", "vxv"),
        )


def canonical_order(non_unit: tuple[str, ...]) -> tuple[str, ...]:
    """Complete a partial loop order with unit-trip dims innermost."""
    rest = tuple(d for d in DIM_NAMES if d not in non_unit)
    return tuple(non_unit) + rest


def groups_per_column(ic_p: int, hw: HwConfig) -> int:
    """Independent IC_P-wide groups that fit in one column's adder tree."""
    return max(1, hw.array_rows // next_pow2(ic_p))


def tap_count(ic_p: int, hw: HwConfig | None = None) -> int:
    """Adder-tree output taps usable per round for a given IC_P.

    Level-1 flops provide 8 taps (serving IC_P of 1 and 2), level 2
    provides 4, level 3 provides 2 and the root 1.
    """
    rows = hw.array_rows if hw else 16
    if not 1 <= ic_p <= rows:
        raise ValueError(f"ic_p {ic_p} outside [1, {rows}]")
    level = max(1, (next_pow2(ic_p) - 1).bit_length())
    return max(1, rows // (1 << level))


def ic_tiles(layer: LayerDesc, s: Schedule) -> int:
    """Temporal passes needed to cover all input channels."""
    return math.ceil(layer.ic / (s.ic_p * s.ic_b))


def validate(layer: LayerDesc, s: Schedule, hw: HwConfig | None = None) -> list[str]:
    """Check a schedule against layer and hardware limits.

    Returns every violated constraint with the offending quantity; an
    empty list means the simulator will accept the schedule.
    """
    hw = hw or HwConfig()
    bad: list[str] = []

    if tuple(sorted(s.loop_order)) != tuple(sorted(DIM_NAMES)):
        bad.append(f"loop_order {s.loop_order} is not a permutation of {DIM_NAMES}")
    if s.template not in TEMPLATES:
        bad.append(f"unknown template {s.template!r}")
    for name, value in zip(
        ("ic_b", "oc_b", "ox_b", "oy_b", "ic_p", "oc_p", "ox_p", "oy_p"),
        s.blocking + s.partitioning,
    ):
        if value < 1:
            bad.append(f"{name}={value} must be >= 1")
    if bad:
        return bad

    if s.ic_p > hw.array_rows:
        bad.append(f"IC_P={s.ic_p} exceeds column height {hw.array_rows}")

    if layer.op == "eltwise":
        if s.ic_p != 1 or s.oc_p != 1:
            bad.append("eltwise layers cannot partition over IC or OC")
        if s.oc_b != 1:
            bad.append("eltwise layers require OC_B=1")
        if s.ic_b * s.ox_b * s.oy_b > hw.of_slots:
            bad.append(
                f"eltwise outputs per pass {s.ic_b}*{s.ox_b}*{s.oy_b} exceed "
                f"{hw.of_slots} OF RF slots"
            )
    else:
        if s.template == "vxv" and s.oc_b != 1:
            bad.append(f"VxV template requires OC_B=1, got {s.oc_b}")
        if s.template == "mxm" and not 2 <= s.oc_b <= 4:
            bad.append(f"MxM template requires OC_B in [2, 4], got {s.oc_b}")
        if hw.macs_per_pe % s.oc_b:
            bad.append(f"OC_B={s.oc_b} does not divide {hw.macs_per_pe} MAC lanes")
        if s.oc_b * s.ox_b * s.oy_b > hw.of_slots:
            bad.append(
                f"psum block {s.oc_b}*{s.ox_b}*{s.oy_b} exceeds {hw.of_slots} OF RF slots"
            )
        # single-pass IC coverage must not leave an entire PE idle
        if ic_tiles(layer, s) == 1 and (s.ic_p - 1) * s.ic_b >= layer.ic:
            bad.append(
                f"IC_P={s.ic_p} x IC_B={s.ic_b} leaves idle PEs for IC={layer.ic}"
            )

    if s.ic_b > hw.if_rf_bytes:
        bad.append(f"IC_B={s.ic_b} B per context exceeds {hw.if_rf_bytes} B IF RF")
    if s.ic_b * s.oc_b > hw.fl_rf_bytes:
        bad.append(
            f"filter block {s.ic_b}*{s.oc_b} B exceeds {hw.fl_rf_bytes} B FL RF"
        )

    n_groups = s.oc_p * s.ox_p * s.oy_p
    max_groups = hw.array_cols * groups_per_column(s.ic_p, hw)
    if n_groups > max_groups:
        bad.append(
            f"{n_groups} column groups exceed capacity {max_groups} "
            f"({hw.array_cols} cols x {groups_per_column(s.ic_p, hw)} groups)"
        )
    if s.mapped_pes > hw.pe_count:
        bad.append(f"mapped PEs {s.mapped_pes} exceed array size {hw.pe_count}")
    for name, p, dim in (
        ("OC_P", s.oc_p, layer.out_channels),
        ("OX_P", s.ox_p, layer.ox),
        ("OY_P", s.oy_p, layer.oy),
    ):
        if p > dim:
            bad.append(f"{name}={p} exceeds dimension extent {dim}")
    return bad


# --- configuration descriptor -------------------------------------------

_PERMS = list(itertools.permutations(DIM_NAMES))
_PERM_INDEX = {p: i for i, p in enumerate(_PERMS)}

ROUTE_INTERNAL = 0


def tree_tap_level(ic_p: int) -> int:
    """Adder-tree level whose flops produce the final outputs."""
    return max(1, (next_pow2(ic_p) - 1).bit_length())


@dataclass(frozen=True)
class ConfigDescriptor:
    """Flat register-style encoding of a schedule.

    ``accum_route`` is 0 for internal accumulation (eltwise) or the
    adder-tree tap level 1..4; ``spill`` flags external psum traffic.
    """

    order_code: int
    ic_b: int
    oc_b: int
    ox_b: int
    oy_b: int
    ic_p: int
    oc_p: int
    ox_p: int
    oy_p: int
    template_sel: int
    eltwise: int = 0
    accum_route: int = 0
    spill: int = 0

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def to_descriptor(s: Schedule, layer: LayerDesc | None = None) -> ConfigDescriptor:
    """Flatten a schedule; layer context fills the eltwise/spill flags."""
    eltwise = int(layer is not None and layer.op == "eltwise")
    spill = 0
    if layer is not None and layer.op == "conv":
        from .mapping import psum_runs  # local import to avoid a cycle

        spill = int(psum_runs(layer, s) > 1)
    return ConfigDescriptor(
        order_code=_PERM_INDEX[tuple(s.loop_order)],
        ic_b=s.ic_b,
        oc_b=s.oc_b,
        ox_b=s.ox_b,
        oy_b=s.oy_b,
        ic_p=s.ic_p,
        oc_p=s.oc_p,
        ox_p=s.ox_p,
        oy_p=s.oy_p,
        template_sel=TEMPLATES.index(s.template),
        eltwise=eltwise,
        accum_route=ROUTE_INTERNAL if eltwise else tree_tap_level(s.ic_p),
        spill=spill,
    )


def from_descriptor(d: ConfigDescriptor) -> Schedule:
    if not 0 <= d.order_code < len(_PERMS):
        raise ValueError(f"order_code {d.order_code} out of range")
    if not 0 <= d.template_sel < len(TEMPLATES):
        raise ValueError(f"template_sel {d.template_sel} out of range")
    return Schedule(
        loop_order=_PERMS[d.order_code],
        ic_b=d.ic_b,
        oc_b=d.oc_b,
        ox_b=d.ox_b,
        oy_b=d.oy_b,
        ic_p=d.ic_p,
        oc_p=d.oc_p,
        ox_p=d.ox_p,
        oy_p=d.oy_p,
        template=TEMPLATES[d.template_sel],
    )


def save_schedule(path, s: Schedule) -> None:
    with open(path, "w") as fh:
        json.dump(s.to_json_dict(), fh, indent=2)
        fh.write("\n")


def load_schedule(path) -> Schedule:
    with open(path) as fh:
        return Schedule.from_json_dict(json.load(fh))


def scale_schedule(s: Schedule, **overrides) -> Schedule:
    return replace(s, **overrides)
