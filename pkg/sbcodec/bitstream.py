"""Bit-level I/O, exp-Golomb codes, coefficient syntax and the sequence header.

Bits are written MSB-first. A BitCounter accepts the same calls as a
BitWriter and only counts, so rate estimates used by the encoder are the
exact number of bits the real syntax emits.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Tuple

import numpy as np

from sbcodec.config import AlfSignaling, EncoderConfig, SaoMode
from sbcodec.errors import BitstreamError, ConfigError, UnsupportedFeatureError

logger = logging.getLogger(__name__)

# --- Configuration & Constants ---
MAGIC = b"SBC1"
MAX_UE_PREFIX = 32
MAX_LEVEL_MAGNITUDE = 1 << 15

_SAO_MODE_CODES = (SaoMode.OFF, SaoMode.FIXED, SaoMode.ADAPTIVE)
_ALF_SIGNALING_CODES = (AlfSignaling.SUPERBLOCK, AlfSignaling.CU, AlfSignaling.IMPROVED)


def ue_length(value: int) -> int:
    return 2 * (value + 1).bit_length() - 1


def se_to_ue(value: int) -> int:
    return -2 * value if value <= 0 else 2 * value - 1


def ue_to_se(code: int) -> int:
    return (code + 1) // 2 if code & 1 else -(code // 2)


class BitSink:
    """Common syntax writers on top of `write_bits`."""

    def write_bits(self, value: int, n: int) -> None:
        raise NotImplementedError

    def tell(self) -> int:
        raise NotImplementedError

    def write_flag(self, flag: bool) -> None:
        self.write_bits(1 if flag else 0, 1)

    def write_ue(self, value: int) -> None:
        if value < 0:
            raise ValueError(f"ue(v) needs a nonnegative value, got {value}")
        self.write_bits(value + 1, ue_length(value))

    def write_se(self, value: int) -> None:
        self.write_ue(se_to_ue(value))


class BitWriter(BitSink):
    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0
        self._total = 0

    def write_bits(self, value: int, n: int) -> None:
        if n == 0:
            return
        if value < 0 or value >> n:
            raise ValueError(f"value {value} does not fit in {n} bits")
        self._acc = (self._acc << n) | value
        self._nbits += n
        self._total += n
        while self._nbits >= 8:
            self._nbits -= 8
            self._buf.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def write_bytes(self, data: bytes) -> None:
        for byte in data:
            self.write_bits(byte, 8)

    def byte_align(self) -> None:
        if self._nbits:
            self.write_bits(0, 8 - self._nbits)

    def tell(self) -> int:
        return self._total

    def getvalue(self) -> bytes:
        if self._nbits:
            return bytes(self._buf) + bytes([(self._acc << (8 - self._nbits)) & 0xFF])
        return bytes(self._buf)


class BitCounter(BitSink):
    def __init__(self):
        self._total = 0

    def write_bits(self, value: int, n: int) -> None:
        self._total += n

    def write_ue(self, value: int) -> None:
        if value < 0:
            raise ValueError(f"ue(v) needs a nonnegative value, got {value}")
        self._total += ue_length(value)

    def tell(self) -> int:
        return self._total


class BitReader:
    def __init__(self, data: bytes):
        self._data = bytes(data)
        self._len_bits = len(self._data) * 8
        self._pos = 0

    def tell(self) -> int:
        return self._pos

    @property
    def bits_remaining(self) -> int:
        return self._len_bits - self._pos

    def read_bits(self, n: int) -> int:
        if n == 0:
            return 0
        end = self._pos + n
        if end > self._len_bits:
            raise BitstreamError(f"stream truncated: need {n} bits, {self.bits_remaining} left", bit_position=self._pos)
        first, last = self._pos >> 3, (end + 7) >> 3
        chunk = int.from_bytes(self._data[first:last], "big")
        self._pos = end
        return (chunk >> (last * 8 - end)) & ((1 << n) - 1)

    def read_flag(self) -> bool:
        return self.read_bits(1) == 1

    def read_ue(self) -> int:
        start = self._pos
        zeros = 0
        while self.read_bits(1) == 0:
            zeros += 1
            if zeros > MAX_UE_PREFIX:
                raise BitstreamError("malformed exp-Golomb prefix", bit_position=start)
        return (1 << zeros) - 1 + self.read_bits(zeros)

    def read_se(self) -> int:
        return ue_to_se(self.read_ue())

    def read_bytes(self, count: int) -> bytes:
        return bytes(self.read_bits(8) for _ in range(count))

    def byte_align(self) -> None:
        self._pos = min(self._len_bits, (self._pos + 7) & ~7)


# --- Coefficients ---

@lru_cache(maxsize=None)
def zigzag_order(n: int) -> Tuple[int, ...]:
    """Flat indices of an n x n block in diagonal zigzag order."""
    order = []
    for s in range(2 * n - 1):
        rows = range(max(0, s - n + 1), min(s, n - 1) + 1)
        if s % 2 == 0:
            rows = reversed(rows)
        order.extend(row * n + (s - row) for row in rows)
    return tuple(order)


def write_coefficients(sink: BitSink, levels: np.ndarray) -> None:
    """Coded-block flag, then (zero-run ue, level se) pairs and an end-of-block run."""
    n = levels.shape[0]
    scanned = np.asarray(levels).ravel()[list(zigzag_order(n))]
    nonzero = np.flatnonzero(scanned)
    if nonzero.size == 0:
        sink.write_flag(False)
        return
    sink.write_flag(True)
    pos = 0
    for p in nonzero.tolist():
        sink.write_ue(p - pos)
        sink.write_se(int(scanned[p]))
        pos = p + 1
    sink.write_ue(n * n - pos + 1)


def read_coefficients(source: BitReader, n: int) -> np.ndarray:
    levels = np.zeros(n * n, dtype=np.int64)
    if not source.read_flag():
        return levels.reshape(n, n)
    order = zigzag_order(n)
    pos = 0
    while True:
        remaining = n * n - pos
        start = source.tell()
        run = source.read_ue()
        if run == remaining + 1:
            break
        if run >= remaining:
            raise BitstreamError(f"coefficient run {run} overruns a {n}x{n} block", bit_position=start)
        pos += run
        level = source.read_se()
        if level == 0 or abs(level) > MAX_LEVEL_MAGNITUDE:
            raise BitstreamError(f"invalid coefficient level {level}", bit_position=start)
        levels[order[pos]] = level
        pos += 1
    return levels.reshape(n, n)


# --- Sequence header ---

@dataclass(frozen=True)
class SequenceHeader:
    width: int
    height: int
    frame_count: int
    config: EncoderConfig

    def write(self, writer: BitWriter) -> None:
        c = self.config
        writer.write_bytes(MAGIC)
        writer.write_bits(self.width, 16)
        writer.write_bits(self.height, 16)
        writer.write_bits(c.bit_depth, 8)
        writer.write_bits(c.qp, 8)
        writer.write_bits(c.max_scu_width, 16)
        writer.write_bits(c.max_partition_depth, 8)
        writer.write_bits(c.max_direct_partition_depth, 8)
        writer.write_bits(c.search_range, 8)
        writer.write_bits(c.intra_period, 16)
        writer.write_bits(_SAO_MODE_CODES.index(c.sao_mode), 8)
        writer.write_bits(c.sao_block_size, 16)
        writer.write_bits(int(c.alf_enabled), 8)
        writer.write_bits(_ALF_SIGNALING_CODES.index(c.alf_signaling), 8)
        writer.write_bits(self.frame_count, 16)
        writer.byte_align()

    @classmethod
    def read(cls, reader: BitReader) -> "SequenceHeader":
        if reader.bits_remaining < len(MAGIC) * 8:
            raise BitstreamError("stream too short for a sequence header", bit_position=reader.tell())
        magic = reader.read_bytes(len(MAGIC))
        if magic != MAGIC:
            raise BitstreamError(f"bad magic {magic!r}, expected {MAGIC!r}", bit_position=0)
        width = reader.read_bits(16)
        height = reader.read_bits(16)
        depth_pos = reader.tell()
        bit_depth = reader.read_bits(8)
        if bit_depth not in (8, 10):
            raise UnsupportedFeatureError(f"unsupported bit depth {bit_depth}", bit_position=depth_pos)
        qp = reader.read_bits(8)
        scu = reader.read_bits(16)
        depth = reader.read_bits(8)
        direct = reader.read_bits(8)
        search_range = reader.read_bits(8)
        intra_period = reader.read_bits(16)
        sao_pos = reader.tell()
        sao_code = reader.read_bits(8)
        sao_block = reader.read_bits(16)
        alf_enabled = reader.read_bits(8)
        alf_pos = reader.tell()
        alf_code = reader.read_bits(8)
        frame_count = reader.read_bits(16)
        reader.byte_align()
        if sao_code >= len(_SAO_MODE_CODES):
            raise BitstreamError(f"unknown SAO mode code {sao_code}", bit_position=sao_pos)
        if alf_code >= len(_ALF_SIGNALING_CODES):
            raise BitstreamError(f"unknown ALF signaling code {alf_code}", bit_position=alf_pos)
        if width == 0 or height == 0:
            raise BitstreamError(f"invalid picture size {width}x{height}", bit_position=32)
        try:
            config = EncoderConfig(
                max_scu_width=scu,
                max_scu_height=scu,
                max_partition_depth=depth,
                max_direct_partition_depth=direct,
                qp=qp,
                intra_period=intra_period,
                search_range=search_range,
                sao_mode=_SAO_MODE_CODES[sao_code],
                sao_block_size=sao_block,
                alf_enabled=bool(alf_enabled),
                bit_depth=bit_depth,
                alf_signaling=_ALF_SIGNALING_CODES[alf_code],
            )
        except ConfigError as e:
            raise BitstreamError(f"sequence header carries an invalid configuration: {e}", bit_position=32) from e
        return cls(width, height, frame_count, config)


# --- Frame header ---

class FrameType(str, Enum):
    I = "I"
    P = "P"


def write_frame_type(sink: BitSink, frame_type: FrameType) -> None:
    sink.write_flag(frame_type == FrameType.P)


def read_frame_type(reader: BitReader) -> FrameType:
    return FrameType.P if reader.read_flag() else FrameType.I
