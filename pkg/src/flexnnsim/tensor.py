"""Dense tensor types and the reference (golden) layer semantics.

Everything downstream — the PE-array simulator, the codec, the cost
model — is validated against the functions in this module, so they are
written for clarity first and speed second.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DIM_NAMES = ("OX", "OY", "IC", "OC", "FX", "FY")

INT8_MIN = -128
INT8_MAX = 127


class DimensionError(ValueError):
    """Raised when tensor or layer dimensions are inconsistent."""


@dataclass(frozen=True)
class Tensor4:
    """Dense 4-D volume with explicit dimension roles (X, Y, C, K).

    ``data`` is stored with C innermost: flat index of element
    (x, y, c, k) is ``((k*Y + y)*X + x)*C + c``, i.e. a C-ordered array
    of shape (K, Y, X, C).  Operand tensors are int8; psum maps produced
    by :func:`conv2d_ref` are int32 in the same layout.
    """

    data: np.ndarray  # shape (K, Y, X, C)

    def __post_init__(self):
        if self.data.ndim != 4:
            raise DimensionError(f"expected 4-D data, got shape {self.data.shape}")
        if self.data.dtype not in (np.dtype(np.int8), np.dtype(np.int32)):
            raise DimensionError(f"unsupported dtype {self.data.dtype}")
        if min(self.data.shape) < 1:
            raise DimensionError(f"all dims must be >= 1, got {self.dims}")

    @property
    def K(self) -> int:
        return self.data.shape[0]

    @property
    def Y(self) -> int:
        return self.data.shape[1]

    @property
    def X(self) -> int:
        return self.data.shape[2]

    @property
    def C(self) -> int:
        return self.data.shape[3]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(X, Y, C, K)"""
        return (self.X, self.Y, self.C, self.K)

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        """Flat view in the canonical C-innermost linearization."""
        return self.data.reshape(-1)

    def sparsity(self) -> float:
        """Fraction of zero elements."""
        return float(np.count_nonzero(self.data == 0)) / self.size

    @classmethod
    def from_flat(cls, flat, x: int, y: int, c: int, k: int = 1) -> "Tensor4":
        arr = np.asarray(flat)
        if arr.size != x * y * c * k:
            raise DimensionError(
                f"flat length {arr.size} != {x}*{y}*{c}*{k}"
            )
        return cls(arr.reshape(k, y, x, c).astype(arr.dtype, copy=False))

    @classmethod
    def zeros(cls, x: int, y: int, c: int, k: int = 1, dtype=np.int8) -> "Tensor4":
        return cls(np.zeros((k, y, x, c), dtype=dtype))


@dataclass(frozen=True)
class LayerDesc:
    """One network layer: dimensions, conv geometry and sparsity stats.

    For ``op == "eltwise"`` the filter dims mirror the input dims and
    the layer adds two feature maps of identical shape; stride/padding
    and FX/FY semantics do not apply.
    """

    id: str
    op: str  # "conv" | "eltwise"
    ix: int
    iy: int
    ic: int
    fx: int = 1
    fy: int = 1
    oc: int = 1
    stride: int = 1
    padding: int = 0
    weight_sparsity: float = 0.0
    act_sparsity: float = 0.0
    requant_mult: int = 1
    requant_shift: int = 0

    def __post_init__(self):
        if self.op not in ("conv", "eltwise"):
            raise DimensionError(f"layer {self.id}: unknown op {self.op!r}")
        for name in ("ix", "iy", "ic", "fx", "fy", "oc", "stride"):
            if getattr(self, name) < 1:
                raise DimensionError(f"layer {self.id}: {name} must be >= 1")
        if self.padding < 0:
            raise DimensionError(f"layer {self.id}: negative padding")
        for name in ("weight_sparsity", "act_sparsity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DimensionError(f"layer {self.id}: {name}={v} outside [0, 1]")
        if self.op == "eltwise":
            if (self.fx, self.fy, self.oc) != (1, 1, self.ic) and (
                self.fx,
                self.fy,
                self.oc,
            ) != (1, 1, 1):
                # allow oc left at default; normalize below via ox/oy/oc props
                raise DimensionError(
                    f"layer {self.id}: eltwise filter dims must mirror input dims"
                )
        else:
            for out_name, i, f in (("ox", self.ix, self.fx), ("oy", self.iy, self.fy)):
                span = i + 2 * self.padding - f
                if span < 0 or span % self.stride != 0:
                    raise DimensionError(
                        f"layer {self.id}: ({out_name}) {i} + 2*{self.padding} - {f} "
                        f"not a multiple of stride {self.stride}"
                    )

    @property
    def ox(self) -> int:
        if self.op == "eltwise":
            return self.ix
        return (self.ix + 2 * self.padding - self.fx) // self.stride + 1

    @property
    def oy(self) -> int:
        if self.op == "eltwise":
            return self.iy
        return (self.iy + 2 * self.padding - self.fy) // self.stride + 1

    @property
    def out_channels(self) -> int:
        return self.ic if self.op == "eltwise" else self.oc

    def dense_macs(self) -> int:
        """MAC count of the formal loop nest (adds, for eltwise)."""
        if self.op == "eltwise":
            return self.ox * self.oy * self.ic
        return self.ox * self.oy * self.oc * self.ic * self.fx * self.fy

    def trip_counts(self) -> dict[str, int]:
        """Full (unblocked) trip count of each of the six loops."""
        if self.op == "eltwise":
            return {"OX": self.ox, "OY": self.oy, "IC": self.ic, "OC": 1, "FX": 1, "FY": 1}
        return {
            "OX": self.ox,
            "OY": self.oy,
            "IC": self.ic,
            "OC": self.oc,
            "FX": self.fx,
            "FY": self.fy,
        }


@dataclass
class SparsityStats:
    """Per-layer (weight, activation) sparsity fractions plus aggregates."""

    per_layer: dict[str, tuple[float, float]] = field(default_factory=dict)
    network_weight: float = 0.0
    network_act: float = 0.0

    def __post_init__(self):
        for lid, (ws, act) in self.per_layer.items():
            for v in (ws, act):
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"sparsity for layer {lid!r} outside [0, 1]: {v}")
        for v in (self.network_weight, self.network_act):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"network sparsity outside [0, 1]: {v}")


def _check_conv_operands(ifmap: Tensor4, filters: Tensor4, layer_id: str = "?"):
    if ifmap.K != 1:
        raise DimensionError(f"{layer_id}: activation K must be 1, got {ifmap.K}")
    if ifmap.C != filters.C:
        raise DimensionError(
            f"{layer_id}: input channels {ifmap.C} != filter channels {filters.C}"
        )


def conv2d_ref(ifmap: Tensor4, filters: Tensor4, stride: int = 1, padding: int = 0) -> Tensor4:
    """Reference convolution: the exact six-loop MAC sum in int32.

    ``ifmap`` has dims (IX, IY, IC, 1), ``filters`` (FX, FY, IC, OC).
    Out-of-bounds taps are zero (zero padding).  Returns the raw int32
    psum map of dims (OX, OY, OC); requantization is a separate step.
    """
    _check_conv_operands(ifmap, filters)
    ix, iy, ic = ifmap.X, ifmap.Y, ifmap.C
    fxd, fyd, oc = filters.X, filters.Y, filters.K
    span_x = ix + 2 * padding - fxd
    span_y = iy + 2 * padding - fyd
    if span_x < 0 or span_y < 0 or span_x % stride or span_y % stride:
        raise DimensionError(
            f"filter {fxd}x{fyd} with stride {stride}, pad {padding} does not "
            f"tile input {ix}x{iy}"
        )
    ox = span_x // stride + 1
    oy = span_y // stride + 1

    padded = np.zeros((iy + 2 * padding, ix + 2 * padding, ic), dtype=np.int32)
    padded[padding : padding + iy, padding : padding + ix, :] = ifmap.data[0]
    w = filters.data.astype(np.int32)  # (OC, FY, FX, IC)

    out = np.zeros((1, oy, ox, oc), dtype=np.int32)
    for fy in range(fyd):
        for fx in range(fxd):
            window = padded[
                fy : fy + (oy - 1) * stride + 1 : stride,
                fx : fx + (ox - 1) * stride + 1 : stride,
                :,
            ]
            # (OY, OX, IC) x (IC, OC) accumulated per tap
            out[0] += window @ w[:, fy, fx, :].T
    return Tensor4(out)


def saturate_int8(values: np.ndarray) -> np.ndarray:
    return np.clip(values, INT8_MIN, INT8_MAX).astype(np.int8)


def eltwise_add_ref(a: Tensor4, b: Tensor4) -> Tensor4:
    """Elementwise int8 addition with saturation to [-128, 127]."""
    if a.dims != b.dims:
        raise DimensionError(f"eltwise operand dims differ: {a.dims} vs {b.dims}")
    total = a.data.astype(np.int16) + b.data.astype(np.int16)
    return Tensor4(saturate_int8(total))


def relu(t: Tensor4) -> Tensor4:
    """Elementwise max(0, x); the usual source of activation sparsity."""
    return Tensor4(np.maximum(t.data, 0))


def requantize(psums: Tensor4, mult: int = 1, shift: int = 0) -> Tensor4:
    """Affine int32 -> int8 requantization with round-half-away-from-zero.

    out = sat8(round(psum * mult / 2**shift)), the shared drain-side
    post-processing applied to every conv result.
    """
    if mult < 0 or shift < 0:
        raise ValueError("requant mult and shift must be non-negative")
    scaled = psums.data.astype(np.int64) * mult
    if shift > 0:
        half = 1 << (shift - 1)
        scaled = np.sign(scaled) * ((np.abs(scaled) + half) >> shift)
    return Tensor4(saturate_int8(scaled))


def gen_sparse_tensor(
    dims: tuple[int, int, int] | tuple[int, int, int, int],
    sparsity: float,
    seed: int,
) -> Tensor4:
    """Deterministic random int8 tensor with an exact zero fraction.

    ``round(sparsity * N)`` elements are zero (positions chosen by a
    seeded shuffle); the rest are uniform over [-128, 127] without 0.
    ``dims`` is (X, Y, C) or (X, Y, C, K).
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity {sparsity} outside [0, 1]")
    if len(dims) == 3:
        x, y, c = dims
        k = 1
    else:
        x, y, c, k = dims
    n = x * y * c * k
    rng = np.random.default_rng(seed)
    values = rng.integers(INT8_MIN, INT8_MAX + 1, size=n, dtype=np.int16)
    values[values == 0] = 1  # nonzeros drawn from [-128, 127] \ {0}
    n_zero = int(np.floor(sparsity * n + 0.5))
    idx = rng.permutation(n)[:n_zero]
    values[idx] = 0
    return Tensor4.from_flat(values.astype(np.int8), x, y, c, k)


def with_sparsity(layer: LayerDesc, ws: float, act: float) -> LayerDesc:
    """Copy of ``layer`` with the given sparsity statistics."""
    return replace(layer, weight_sparsity=ws, act_sparsity=act)
