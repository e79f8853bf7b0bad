"""Zero-value compression: bitmap + packed nonzeros at 16-byte granularity.

The stream format matches what the drain-side sparse encoder emits and
the load path consumes: each block covers 16 logical bytes (the final
block may be shorter), with a 1-bit-per-byte sparsity bitmap.  Bit i of
a block maps to logical byte i, LSB-first within each bitmap byte; that
bit order is the on-disk contract.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

BLOCK_BYTES = 16
MAGIC = b"ZVC1"
_HEADER = struct.Struct("<4sQI")  # magic, logical_len: u64, context_id: u32


class ZvcError(ValueError):
    """Corrupt or inconsistent compressed data."""


@dataclass(frozen=True)
class ZvcBlock:
    """One compressed block: nonzero payload, bitmap, logical length."""

    compressed: bytes
    bitmap: bytes
    logical_len: int

    def __post_init__(self):
        if not 0 <= self.logical_len <= BLOCK_BYTES:
            raise ZvcError(f"block logical_len {self.logical_len} outside [0, 16]")
        if len(self.bitmap) != (self.logical_len + 7) // 8:
            raise ZvcError(
                f"bitmap has {len(self.bitmap)} bytes for {self.logical_len} logical bytes"
            )
        if self.popcount() != len(self.compressed):
            raise ZvcError(
                f"bitmap popcount {self.popcount()} != payload length {len(self.compressed)}"
            )

    def popcount(self) -> int:
        return sum(bin(b).count("1") for b in self.bitmap)

    def bit(self, i: int) -> bool:
        """Value of bitmap bit i (1 = logical byte i is nonzero)."""
        if not 0 <= i < self.logical_len:
            raise IndexError(i)
        return bool(self.bitmap[i // 8] >> (i % 8) & 1)


@dataclass(frozen=True)
class ZvcStream:
    """Sequence of 16-byte blocks covering one (OX, OY) drain context."""

    blocks: tuple[ZvcBlock, ...]
    context_id: int = 0

    @property
    def logical_len(self) -> int:
        return sum(b.logical_len for b in self.blocks)

    @property
    def payload_len(self) -> int:
        return sum(len(b.compressed) for b in self.blocks)


def zvc_encode(dense, context_id: int = 0) -> ZvcStream:
    """Compress a byte buffer, dropping zeros and recording a bitmap."""
    data = np.frombuffer(bytes(dense), dtype=np.uint8)
    blocks = []
    for start in range(0, len(data), BLOCK_BYTES):
        chunk = data[start : start + BLOCK_BYTES]
        mask = chunk != 0
        payload = chunk[mask].tobytes()
        bitmap = np.packbits(mask, bitorder="little").tobytes()
        blocks.append(ZvcBlock(payload, bitmap, len(chunk)))
    return ZvcStream(tuple(blocks), context_id)


def zvc_decode(stream: ZvcStream) -> bytes:
    """Inverse of :func:`zvc_encode`: reinsert zeros per the bitmap."""
    out = bytearray()
    for block in stream.blocks:
        chunk = bytearray(block.logical_len)
        pos = 0
        for i in range(block.logical_len):
            if block.bitmap[i // 8] >> (i % 8) & 1:
                if pos >= len(block.compressed):
                    raise ZvcError("payload shorter than bitmap popcount")
                chunk[i] = block.compressed[pos]
                pos += 1
        if pos != len(block.compressed):
            raise ZvcError("payload longer than bitmap popcount")
        out += chunk
    return bytes(out)


def compressed_size(stream: ZvcStream) -> tuple[int, int]:
    """(payload bytes, bitmap bytes) — the stored footprint of a stream."""
    data_bytes = stream.payload_len
    bitmap_bytes = sum(len(b.bitmap) for b in stream.blocks)
    return data_bytes, bitmap_bytes


def stored_bytes(length: int, nonzeros: int, compress: bool) -> int:
    """Footprint of ``length`` logical bytes holding ``nonzeros`` nonzeros.

    Compressed form stores the nonzeros plus ceil(length/8) bitmap
    bytes; uncompressed form stores the raw bytes.  This is the single
    size rule every access counter in the simulator uses.
    """
    if not compress:
        return length
    return nonzeros + (length + 7) // 8


def write_stream(path, stream: ZvcStream) -> None:
    """Serialize: little-endian header, then bitmaps, then payload."""
    bitmap = b"".join(b.bitmap for b in stream.blocks)
    payload = b"".join(b.compressed for b in stream.blocks)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, stream.logical_len, stream.context_id))
        fh.write(bitmap)
        fh.write(payload)


def read_stream(path) -> ZvcStream:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ZvcError("truncated header")
    magic, logical_len, context_id = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ZvcError(f"bad magic {magic!r}")
    offset = _HEADER.size
    blocks = []
    # bitmap bytes are grouped per block: ceil(len/8) for each 16-byte block
    lengths = []
    remaining = logical_len
    while remaining > 0:
        lengths.append(min(BLOCK_BYTES, remaining))
        remaining -= lengths[-1]
    bitmaps = []
    for length in lengths:
        nbytes = (length + 7) // 8
        bitmaps.append(raw[offset : offset + nbytes])
        if len(bitmaps[-1]) != nbytes:
            raise ZvcError("truncated bitmap section")
        offset += nbytes
    blocks = []
    for length, bitmap in zip(lengths, bitmaps):
        pop = sum(bin(b).count("1") for b in bitmap)
        payload = raw[offset : offset + pop]
        if len(payload) != pop:
            raise ZvcError("truncated payload section")
        offset += pop
        blocks.append(ZvcBlock(payload, bitmap, length))
    if offset != len(raw):
        raise ZvcError(f"{len(raw) - offset} trailing bytes")
    return ZvcStream(tuple(blocks), context_id)
