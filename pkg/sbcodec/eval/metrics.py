"""PSNR and Bjontegaard delta-rate."""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from sbcodec.errors import EvaluationError
from sbcodec.frame_io import Frame, Plane

logger = logging.getLogger(__name__)

PSNR_CAP = 999.99  # reported for MSE == 0
MIN_CURVE_POINTS = 4
COMPONENTS = ("y", "u", "v")


def mse(orig: np.ndarray, rec: np.ndarray) -> float:
    return float(np.mean(np.square(np.subtract(orig, rec, dtype=np.double))))


def psnr(orig: Union[Plane, np.ndarray], rec: Union[Plane, np.ndarray], bit_depth: Optional[int] = None) -> float:
    """10 log10(peak^2 / MSE), or PSNR_CAP for identical samples."""
    if isinstance(orig, Plane) and isinstance(rec, Plane):
        if orig.bit_depth != rec.bit_depth:
            raise EvaluationError(f"bit depth mismatch: {orig.bit_depth} vs {rec.bit_depth}")
        bit_depth = bit_depth or orig.bit_depth
    a = orig.samples if isinstance(orig, Plane) else np.asarray(orig)
    b = rec.samples if isinstance(rec, Plane) else np.asarray(rec)
    if bit_depth is None:
        raise EvaluationError("bit depth is required for raw sample arrays")
    if a.shape != b.shape:
        raise EvaluationError(f"plane size mismatch: {a.shape[::-1]} vs {b.shape[::-1]}")
    if a.size == 0:
        raise EvaluationError("cannot compare empty planes")
    error = mse(a, b)
    if error == 0:
        return PSNR_CAP
    peak = (1 << bit_depth) - 1
    return 10.0 * math.log10(peak * peak / error)


def is_lossless(value: float) -> bool:
    return value >= PSNR_CAP


def mean_psnr(values: Iterable[float]) -> float:
    """Mean over the lossy frames; capped frames are left out, and PSNR_CAP when every frame is lossless."""
    values = list(values)
    if not values:
        raise EvaluationError("no PSNR values to average")
    lossy = [v for v in values if not is_lossless(v)]
    if not lossy:
        return PSNR_CAP
    return sum(lossy) / len(lossy)


def frame_psnr(orig: Frame, rec: Frame) -> Tuple[float, float, float]:
    """Y, U, V PSNR over the display window."""
    if (orig.display_width, orig.display_height) != (rec.display_width, rec.display_height):
        raise EvaluationError(
            f"display size mismatch: {orig.display_width}x{orig.display_height} "
            f"vs {rec.display_width}x{rec.display_height}"
        )
    a, b = orig.cropped(), rec.cropped()
    return tuple(psnr(pa, pb) for pa, pb in zip(a.planes, b.planes))


# --- Rate-distortion curves ---

@dataclass(frozen=True)
class RdPoint:
    bitrate: float  # kbps, or total bits when no frame rate applies
    psnr_y: float
    psnr_u: float
    psnr_v: float
    qp: Optional[int] = None

    def __post_init__(self):
        if not self.bitrate > 0:
            raise EvaluationError(f"bitrate must be positive, got {self.bitrate}")
        for name in ("psnr_y", "psnr_u", "psnr_v"):
            if not math.isfinite(getattr(self, name)):
                raise EvaluationError(f"{name} must be finite")

    def psnr(self, component: str) -> float:
        return getattr(self, f"psnr_{component}")


class RdCurve:
    """Rate-distortion points sorted by bitrate."""

    def __init__(self, points: Iterable[RdPoint]):
        self.points: List[RdPoint] = sorted(points, key=lambda p: p.bitrate)
        if len(self.points) < MIN_CURVE_POINTS:
            raise EvaluationError(f"a curve needs at least {MIN_CURVE_POINTS} points, got {len(self.points)}")
        rates = [p.bitrate for p in self.points]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise EvaluationError("curve bitrates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.points)

    def log_rates(self) -> np.ndarray:
        return np.log10([p.bitrate for p in self.points])

    def qualities(self, component: str) -> np.ndarray:
        return np.array([p.psnr(component) for p in self.points])


def bd_rate(anchor: RdCurve, test: RdCurve, component: str = "y") -> float:
    """Average bitrate difference in percent at equal PSNR; negative means `test` saves rate.

    Third-order polynomial fits of log10(rate) over PSNR, integrated over the
    overlapping PSNR interval.
    """
    if component not in COMPONENTS:
        raise EvaluationError(f"unknown component {component!r}")
    anchor_q, test_q = anchor.qualities(component), test.qualities(component)
    low = max(anchor_q.min(), test_q.min())
    high = min(anchor_q.max(), test_q.max())
    if high <= low:
        raise EvaluationError(
            f"PSNR ranges do not overlap ({component}: anchor {anchor_q.min():.2f}..{anchor_q.max():.2f}, "
            f"test {test_q.min():.2f}..{test_q.max():.2f})"
        )

    anchor_poly = np.polyint(np.polyfit(anchor_q, anchor.log_rates(), 3))
    test_poly = np.polyint(np.polyfit(test_q, test.log_rates(), 3))
    anchor_area = np.polyval(anchor_poly, high) - np.polyval(anchor_poly, low)
    test_area = np.polyval(test_poly, high) - np.polyval(test_poly, low)
    average = (test_area - anchor_area) / (high - low)
    result = float((10.0 ** average - 1.0) * 100.0)
    logger.debug(f"BD-rate ({component}) over {low:.2f}..{high:.2f} dB: {result:.3f}%")
    return result
