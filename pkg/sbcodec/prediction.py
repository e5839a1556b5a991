"""Intra prediction, full-pel motion estimation/compensation and the reference store."""
import logging
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from sbcodec.frame_io import Frame

logger = logging.getLogger(__name__)


class IntraMode(IntEnum):
    DC = 0
    HORIZONTAL = 1
    VERTICAL = 2


class MotionVector(NamedTuple):
    dx: int
    dy: int

    def __sub__(self, other: "MotionVector") -> "MotionVector":
        return MotionVector(self.dx - other.dx, self.dy - other.dy)

    def __add__(self, other: "MotionVector") -> "MotionVector":
        return MotionVector(self.dx + other.dx, self.dy + other.dy)

    def chroma(self) -> "MotionVector":
        """Halved for 4:2:0, rounding toward zero."""
        return MotionVector(_halve_toward_zero(self.dx), _halve_toward_zero(self.dy))


ZERO_MV = MotionVector(0, 0)


def _halve_toward_zero(value: int) -> int:
    return -((-value) // 2) if value < 0 else value // 2


# --- Intra ---

def eligible_intra_modes(top_available: bool, left_available: bool) -> List[IntraMode]:
    modes = [IntraMode.DC]
    if left_available:
        modes.append(IntraMode.HORIZONTAL)
    if top_available:
        modes.append(IntraMode.VERTICAL)
    return modes


def intra_predict(
    mode: IntraMode, top: Optional[np.ndarray], left: Optional[np.ndarray], n: int, bit_depth: int
) -> np.ndarray:
    """Predicts an n x n block from the row above (`top`) and the column to the left (`left`).

    A side that is None is unavailable.
    """
    if mode == IntraMode.HORIZONTAL:
        if left is None:
            raise ValueError("horizontal prediction needs the left column")
        return np.repeat(np.asarray(left, dtype=np.int64)[:n, None], n, axis=1)
    if mode == IntraMode.VERTICAL:
        if top is None:
            raise ValueError("vertical prediction needs the top row")
        return np.repeat(np.asarray(top, dtype=np.int64)[None, :n], n, axis=0)

    total, count = 0, 0
    if top is not None:
        total += int(np.sum(top[:n]))
        count += n
    if left is not None:
        total += int(np.sum(left[:n]))
        count += n
    dc = (total + count // 2) // count if count else 1 << (bit_depth - 1)
    return np.full((n, n), dc, dtype=np.int64)


# --- Inter ---

@dataclass
class PaddedPlane:
    """A reference plane edge-replicated by `pad` samples on every side.

    Coordinates passed to `window` are in unpadded plane units and may be negative.
    """

    samples: np.ndarray
    pad: int

    @classmethod
    def from_array(cls, samples: np.ndarray, pad: int) -> "PaddedPlane":
        return cls(np.pad(np.asarray(samples, dtype=np.int64), pad, mode="edge"), pad)

    def contains(self, x: int, y: int, w: int, h: int) -> bool:
        px, py = x + self.pad, y + self.pad
        return px >= 0 and py >= 0 and px + w <= self.samples.shape[1] and py + h <= self.samples.shape[0]

    def window(self, x: int, y: int, w: int, h: int) -> np.ndarray:
        if not self.contains(x, y, w, h):
            raise ValueError(f"displaced window {w}x{h} at ({x},{y}) leaves the padded reference")
        px, py = x + self.pad, y + self.pad
        return self.samples[py:py + h, px:px + w]


def motion_search(
    orig: np.ndarray, ref: PaddedPlane, origin: Tuple[int, int], search_range: int
) -> Tuple[MotionVector, int]:
    """Exhaustive SAD search over the +-range window clipped to the padded reference.

    The MV points from the current block to the reference block: the
    prediction for a block at (x, y) is the reference window at (x + dx, y + dy).
    Ties go to smaller |dx| + |dy|, then smaller dy, then smaller dx.
    """
    orig = np.asarray(orig, dtype=np.int64)
    h, w = orig.shape
    x, y = origin
    ref_h, ref_w = ref.samples.shape
    dx_lo = max(-search_range, -(x + ref.pad))
    dx_hi = min(search_range, ref_w - ref.pad - x - w)
    dy_lo = max(-search_range, -(y + ref.pad))
    dy_hi = min(search_range, ref_h - ref.pad - y - h)

    dys = np.arange(dy_lo, dy_hi + 1)
    dxs = np.arange(dx_lo, dx_hi + 1)
    sads = np.empty((len(dys), len(dxs)), dtype=np.int64)
    x0 = x + ref.pad + dx_lo
    for row, dy in enumerate(dys):
        y0 = y + ref.pad + dy
        strip = ref.samples[y0:y0 + h, x0:x0 + len(dxs) - 1 + w]
        candidates = sliding_window_view(strip, w, axis=1)  # (h, n_dx, w)
        sads[row] = np.abs(candidates - orig[:, None, :]).sum(axis=(0, 2))

    grid_dy, grid_dx = np.meshgrid(dys, dxs, indexing="ij")
    order = np.lexsort((grid_dx.ravel(), grid_dy.ravel(), (np.abs(grid_dx) + np.abs(grid_dy)).ravel(), sads.ravel()))
    best = order[0]
    mv = MotionVector(int(grid_dx.ravel()[best]), int(grid_dy.ravel()[best]))
    return mv, int(sads.ravel()[best])


def motion_compensate(ref: PaddedPlane, origin: Tuple[int, int], mv: MotionVector, w: int, h: int) -> np.ndarray:
    """Copies the displaced block; pass `mv.chroma()` for chroma planes."""
    x, y = origin
    return ref.window(x + mv.dx, y + mv.dy, w, h).copy()


def predict_mv(neighbors: Sequence[Optional[MotionVector]]) -> MotionVector:
    """Component-wise median of the left, top and top-right MVs.

    None marks an unavailable neighbor. With two available, the missing one
    counts as the zero vector.
    """
    available = [mv for mv in neighbors if mv is not None]
    if not available:
        return ZERO_MV
    if len(available) == 1:
        return available[0]
    while len(available) < 3:
        available.append(ZERO_MV)
    dxs = sorted(mv.dx for mv in available[:3])
    dys = sorted(mv.dy for mv in available[:3])
    return MotionVector(dxs[1], dys[1])


def build_residual(orig: np.ndarray, pred: np.ndarray) -> np.ndarray:
    orig = np.asarray(orig, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if orig.shape != pred.shape:
        raise ValueError(f"residual shapes differ: {orig.shape} vs {pred.shape}")
    return orig - pred


# --- Reference store ---

class RefStore:
    """Reconstructed, fully in-loop-filtered frames available for inter prediction."""

    def __init__(self, capacity: int = 1, pad: int = 0):
        self.capacity = capacity
        self.pad = pad
        self._frames: deque = deque(maxlen=capacity)
        self._padded: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._frames)

    def push(self, frame: Frame) -> None:
        self._frames.append(frame)
        luma_pad = self.pad
        chroma_pad = (self.pad + 1) // 2 + 1
        self._padded.append(
            (
                PaddedPlane.from_array(frame.y.samples, luma_pad),
                PaddedPlane.from_array(frame.u.samples, chroma_pad),
                PaddedPlane.from_array(frame.v.samples, chroma_pad),
            )
        )

    def latest(self) -> Optional[Frame]:
        return self._frames[-1] if self._frames else None

    def latest_padded(self) -> Optional[Tuple[PaddedPlane, PaddedPlane, PaddedPlane]]:
        return self._padded[-1] if self._padded else None

    def clear(self) -> None:
        self._frames.clear()
        self._padded.clear()
