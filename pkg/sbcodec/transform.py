"""Bit-exact integer core transform, quantization and their inverses.

The forward path is Y = (C * X * C^T) with two rounded right shifts, the
quantizer folds the transform scale and the QP scale into one shift
(iQBits), and dequantization returns to the forward-output domain so the
inverse transform (C^T * Y * C, shifts 7 and 20 - bitDepth) reconstructs
the residual. Every intermediate is clamped to 16 signed bits.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)

# --- Configuration & Constants ---
F_TABLE: Tuple[int, ...] = (26214, 23302, 20560, 18396, 16384, 14564)
G_TABLE: Tuple[int, ...] = (40, 45, 51, 57, 64, 72)
TRANSFORM_SIZES = (4, 8, 16, 32)
MAX_TRANSFORM_SIZE = 32
INT16_MIN, INT16_MAX = -(1 << 15), (1 << 15) - 1

# Integer basis values at cosine index m (angle m*pi/64) where plain
# rounding of 64*sqrt(2)*cos(m*pi/64) misses near-orthogonality.
_BASIS_ADJUSTMENTS = {8: -1, 21: -1, 23: -1, 24: +1, 25: +1, 26: -1}


@dataclass(frozen=True)
class CoreMatrix:
    n: int
    entries: np.ndarray  # (n, n) int64, rows are basis functions

    @property
    def log2n(self) -> int:
        return self.n.bit_length() - 1

    @property
    def scale_exponents(self) -> Tuple[int, Fraction]:
        """r_N = 1 / (64 * sqrt(N)) as the pair (power of two, power of N)."""
        return (-6, Fraction(-1, 2))


@dataclass(frozen=True)
class QuantParams:
    qp: int
    qstep: Fraction
    f_table: Tuple[int, ...]
    g_table: Tuple[int, ...]
    iq_bits: int
    slice_is_intra: bool
    n: int
    bit_depth: int

    @property
    def scale(self) -> int:
        return self.f_table[self.qp % 6]

    @property
    def inverse_scale(self) -> int:
        return self.g_table[self.qp % 6]

    @property
    def round_offset(self) -> int:
        return (1 << self.iq_bits) // (3 if self.slice_is_intra else 6)


@lru_cache(maxsize=None)
def _basis_values() -> Tuple[int, ...]:
    values = []
    for m in range(33):
        value = int(np.floor(64 * math.sqrt(2) * math.cos(m * math.pi / 64) + 0.5))
        values.append(value + _BASIS_ADJUSTMENTS.get(m, 0))
    return tuple(values)


@lru_cache(maxsize=None)
def build_core_matrix(n: int) -> CoreMatrix:
    """N x N integer approximation of the scaled orthonormal DCT-II."""
    if n not in TRANSFORM_SIZES:
        raise ValueError(f"unsupported transform size {n}; expected one of {TRANSFORM_SIZES}")
    basis = _basis_values()
    entries = np.empty((n, n), dtype=np.int64)
    step = 32 // n
    for k in range(n):
        for j in range(n):
            if k == 0:
                entries[k, j] = 64
                continue
            t = ((2 * j + 1) * k * step) % 128
            if t > 64:
                t = 128 - t
            entries[k, j] = basis[t] if t <= 32 else -basis[64 - t]
    entries.setflags(write=False)
    return CoreMatrix(n, entries)


def derive_quant_params(qp: int, slice_is_intra: bool, n: int, bit_depth: int) -> QuantParams:
    if not 0 <= qp <= 51:
        raise ValueError(f"qp must be in 0..51, got {qp}")
    if n not in TRANSFORM_SIZES:
        raise ValueError(f"unsupported transform size {n}")
    log2n = n.bit_length() - 1
    return QuantParams(
        qp=qp,
        qstep=Fraction((1 << (qp // 6)) << 14, F_TABLE[qp % 6]),
        f_table=F_TABLE,
        g_table=G_TABLE,
        iq_bits=29 - bit_depth - log2n + qp // 6,
        slice_is_intra=slice_is_intra,
        n=n,
        bit_depth=bit_depth,
    )


def qstep_of(qp: int) -> Fraction:
    return Fraction((1 << (qp // 6)) << 14, F_TABLE[qp % 6])


# --- Integer helpers ---

def _clip16(values: np.ndarray) -> np.ndarray:
    return np.clip(values, INT16_MIN, INT16_MAX)


def _round_shift(values: np.ndarray, shift: int) -> np.ndarray:
    if shift <= 0:
        return values << -shift
    return (values + (1 << (shift - 1))) >> shift


def _check_size(block: np.ndarray, m: CoreMatrix) -> np.ndarray:
    block = np.asarray(block, dtype=np.int64)
    if block.shape != (m.n, m.n):
        raise ValueError(f"block shape {block.shape} does not match transform size {m.n}")
    return block


# --- Forward / inverse chain ---

def forward_transform(x: np.ndarray, m: CoreMatrix, bit_depth: int) -> np.ndarray:
    x = _check_size(x, m)
    c = m.entries
    shift1 = m.log2n - 1 + bit_depth - 8
    shift2 = m.log2n + 6
    stage1 = _clip16(_round_shift(c @ x, shift1))
    return _clip16(_round_shift(stage1 @ c.T, shift2))


def quantize(y: np.ndarray, qparams: QuantParams) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    magnitude = (np.abs(y) * qparams.scale + qparams.round_offset) >> qparams.iq_bits
    return _clip16(np.sign(y) * magnitude)


def dequantize(levels: np.ndarray, qparams: QuantParams) -> np.ndarray:
    levels = np.asarray(levels, dtype=np.int64)
    log2n = qparams.n.bit_length() - 1
    shift = qparams.bit_depth + log2n - 9 - qparams.qp // 6
    return _clip16(_round_shift(levels * qparams.inverse_scale, shift))


def inverse_transform(y: np.ndarray, m: CoreMatrix, bit_depth: int) -> np.ndarray:
    y = _check_size(y, m)
    c = m.entries
    stage1 = _clip16(_round_shift(c.T @ y, 7))
    return _clip16(_round_shift(stage1 @ c, 20 - bit_depth))


def code_residual(residual: np.ndarray, qparams: QuantParams) -> Tuple[np.ndarray, np.ndarray]:
    """Runs the full chain on one TU; returns (levels, reconstructed residual)."""
    m = build_core_matrix(qparams.n)
    levels = quantize(forward_transform(residual, m, qparams.bit_depth), qparams)
    return levels, reconstruct_residual(levels, qparams)


def reconstruct_residual(levels: np.ndarray, qparams: QuantParams) -> np.ndarray:
    """Shared by encoder and decoder so both reconstruct identically."""
    if not np.any(levels):
        return np.zeros((qparams.n, qparams.n), dtype=np.int64)
    m = build_core_matrix(qparams.n)
    return inverse_transform(dequantize(levels, qparams), m, qparams.bit_depth)
