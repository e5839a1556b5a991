"""CU-level adaptive loop filter: one Wiener filter per frame, on/off per flag cell.

The filter is a 5x5 point-symmetric diamond (13 taps, 7 unique values, 8
fractional bits) trained on luma and reused for chroma. Flag cells are the
coded CU leaves, with anything smaller than a CTU merged into its CTU.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from sbcodec.bitstream import BitCounter, BitReader, BitSink
from sbcodec.config import AlfSignaling
from sbcodec.errors import BitstreamError
from sbcodec.partition import CuNode, RdCost

logger = logging.getLogger(__name__)

# --- Configuration & Constants ---
ALF_SHIFT = 8
ALF_ONE = 1 << ALF_SHIFT
NUM_UNIQUE_TAPS = 7
CENTER_TAP = 6
REGULARIZATION = 1e-6
MAX_COEFFICIENT = 1023

# (dy, dx) of the 13 diamond taps; tap i mirrors tap 12 - i.
DIAMOND_TAPS: Tuple[Tuple[int, int], ...] = (
    (-2, 0),
    (-1, -1), (-1, 0), (-1, 1),
    (0, -2), (0, -1), (0, 0), (0, 1), (0, 2),
    (1, -1), (1, 0), (1, 1),
    (2, 0),
)


@dataclass(frozen=True)
class AlfFilter:
    coefficients: Tuple[int, ...]  # 7 unique values, the last is the center tap

    def __post_init__(self):
        if len(self.coefficients) != NUM_UNIQUE_TAPS:
            raise ValueError(f"ALF filter needs {NUM_UNIQUE_TAPS} coefficients, got {len(self.coefficients)}")
        if sum(self.taps) != ALF_ONE:
            raise ValueError(f"ALF taps must sum to {ALF_ONE}, got {sum(self.taps)}")

    @property
    def taps(self) -> Tuple[int, ...]:
        c = self.coefficients
        return tuple(c[i] if i <= CENTER_TAP else c[12 - i] for i in range(13))

    @classmethod
    def identity(cls) -> "AlfFilter":
        return cls((0,) * CENTER_TAP + (ALF_ONE,))


def quantize_filter(weights: Sequence[float]) -> AlfFilter:
    """Fixed-point filter from real weights; the center absorbs the rounding so taps sum to 256."""
    pairs = [int(np.clip(np.rint(w * ALF_ONE), -MAX_COEFFICIENT, MAX_COEFFICIENT)) for w in weights[:CENTER_TAP]]
    return AlfFilter(tuple(pairs) + (ALF_ONE - 2 * sum(pairs),))


def _support_features(rec: np.ndarray) -> np.ndarray:
    """(N, 7) features of every sample with full diamond support: mirrored pair sums, then the center."""
    h, w = rec.shape
    columns = []
    for dy, dx in DIAMOND_TAPS[:CENTER_TAP]:
        a = rec[2 + dy:h - 2 + dy, 2 + dx:w - 2 + dx]
        b = rec[2 - dy:h - 2 - dy, 2 - dx:w - 2 - dx]
        columns.append((a + b).ravel())
    columns.append(rec[2:h - 2, 2:w - 2].ravel())
    return np.stack(columns, axis=1)


def derive_wiener_filter(orig: np.ndarray, rec: np.ndarray) -> AlfFilter:
    """Least-squares filter mapping `rec` toward `orig` over samples with full support."""
    orig = np.asarray(orig, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    h, w = rec.shape
    if h < 5 or w < 5:
        raise ValueError(f"a {w}x{h} plane has no sample with full 5x5 diamond support")
    features = _support_features(rec)
    target = orig[2:h - 2, 2:w - 2].ravel()
    autocorrelation = features.T @ features
    crosscorrelation = features.T @ target
    epsilon = REGULARIZATION * np.trace(autocorrelation) / 13
    try:
        weights = np.linalg.solve(autocorrelation + epsilon * np.eye(NUM_UNIQUE_TAPS), crosscorrelation)
        if not np.all(np.isfinite(weights)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError as e:
        logger.warning(f"ALF normal equations are singular ({e}); using the identity filter")
        return AlfFilter.identity()
    return quantize_filter(weights)


def apply_alf(plane: np.ndarray, alf_filter: AlfFilter, mask: Optional[np.ndarray], bit_depth: int) -> np.ndarray:
    """Filters where `mask` is set (everywhere when None); reads only pre-ALF samples."""
    plane = np.asarray(plane, dtype=np.int64)
    h, w = plane.shape
    padded = np.pad(plane, 2, mode="edge")
    acc = np.zeros((h, w), dtype=np.int64)
    for (dy, dx), tap in zip(DIAMOND_TAPS, alf_filter.taps):
        if tap:
            acc += tap * padded[2 + dy:2 + dy + h, 2 + dx:2 + dx + w]
    filtered = np.clip((acc + (ALF_ONE >> 1)) >> ALF_SHIFT, 0, (1 << bit_depth) - 1)
    if mask is None:
        return filtered
    return np.where(mask, filtered, plane)


def write_alf_filter(sink: BitSink, alf_filter: AlfFilter) -> None:
    for c in alf_filter.coefficients:
        sink.write_se(c)


def read_alf_filter(reader: BitReader) -> AlfFilter:
    start = reader.tell()
    coefficients = tuple(reader.read_se() for _ in range(NUM_UNIQUE_TAPS))
    try:
        return AlfFilter(coefficients)
    except ValueError as e:
        raise BitstreamError(f"invalid ALF filter: {e}", bit_position=start) from None


# --- Flag cells and flags ---

def flag_cells(nodes: Iterable[CuNode], min_cell: int) -> List[Tuple[int, int, int]]:
    """(x, y, size) of each ALF flag cell: coded CU leaves, clipped to `min_cell`, in Z order."""
    cells = []

    def visit(node: CuNode):
        if node.split and node.size > min_cell:
            for child in node.children:
                visit(child)
        else:
            cells.append((node.x, node.y, node.size))

    for node in nodes:
        visit(node)
    return cells


@dataclass(frozen=True)
class AlfDecision:
    """Super-block flag, all-CU flag and per-cell flags of one super-block."""

    super_block_flag: bool
    all_cu_flag: bool
    cu_flags: Tuple[bool, ...]

    def __post_init__(self):
        if not self.super_block_flag and (self.all_cu_flag or any(self.cu_flags)):
            raise ValueError("a super-block with ALF off cannot carry CU flags")
        if self.all_cu_flag and not all(self.cu_flags):
            raise ValueError("all-CU flag set but some CU flags are off")

    @classmethod
    def off(cls, cell_count: int) -> "AlfDecision":
        return cls(False, False, (False,) * cell_count)

    @classmethod
    def from_flags(cls, flags: Sequence[bool], signaling: AlfSignaling) -> "AlfDecision":
        """The decision a given signaling variant sends for these per-cell flags."""
        flags = tuple(bool(f) for f in flags)
        if not any(flags):
            return cls.off(len(flags))
        if signaling == AlfSignaling.SUPERBLOCK:
            if not all(flags):
                raise ValueError("super-block signaling cannot express mixed CU flags")
            return cls(True, True, flags)
        if signaling == AlfSignaling.IMPROVED and all(flags):
            return cls(True, True, flags)
        return cls(True, False, flags)


def encode_alf_flags(sink: BitSink, decision: AlfDecision, signaling: AlfSignaling) -> None:
    sink.write_flag(decision.super_block_flag)
    if not decision.super_block_flag or signaling == AlfSignaling.SUPERBLOCK:
        return
    if signaling == AlfSignaling.IMPROVED:
        sink.write_flag(decision.all_cu_flag)
        if decision.all_cu_flag:
            return
    for flag in decision.cu_flags:
        sink.write_flag(flag)


def parse_alf_flags(reader: BitReader, cell_count: int, signaling: AlfSignaling) -> AlfDecision:
    if not reader.read_flag():
        return AlfDecision.off(cell_count)
    if signaling == AlfSignaling.SUPERBLOCK:
        return AlfDecision(True, True, (True,) * cell_count)
    if signaling == AlfSignaling.IMPROVED and reader.read_flag():
        return AlfDecision(True, True, (True,) * cell_count)
    return AlfDecision(True, False, tuple(reader.read_flag() for _ in range(cell_count)))


def bits_for_alf_flags(decision: AlfDecision, signaling: AlfSignaling) -> int:
    counter = BitCounter()
    encode_alf_flags(counter, decision, signaling)
    return counter.tell()


def cell_mask(shape: Tuple[int, int], cells: Sequence[Tuple[int, int, int]], flags: Sequence[bool]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for (x, y, size), on in zip(cells, flags):
        if on:
            mask[y:y + size, x:x + size] = True
    return mask


# --- RD decisions ---

@dataclass
class AlfContext:
    original: Sequence[np.ndarray]  # padded source planes
    reconstruction: Sequence[np.ndarray]  # post-SAO planes
    display: Sequence[Tuple[int, int]]  # (width, height) per plane
    bit_depth: int
    lam: float
    signaling: AlfSignaling = AlfSignaling.IMPROVED


class AlfErrorMaps:
    """Squared error with and without filtering, zero outside the display window."""

    def __init__(self, ctx: AlfContext, filtered: Sequence[np.ndarray]):
        self.off, self.on = [], []
        for component in range(3):
            dw, dh = ctx.display[component]
            orig = np.asarray(ctx.original[component], dtype=np.int64)
            window = np.zeros(orig.shape, dtype=bool)
            window[:dh, :dw] = True
            for target, rec in ((self.off, ctx.reconstruction[component]), (self.on, filtered[component])):
                diff = orig - np.asarray(rec, dtype=np.int64)
                target.append(np.where(window, diff * diff, 0))

    def cell(self, maps: List[np.ndarray], x: int, y: int, size: int) -> int:
        total = int(maps[0][y:y + size, x:x + size].sum())
        cx, cy, cs = x // 2, y // 2, size // 2
        for component in (1, 2):
            total += int(maps[component][cy:cy + cs, cx:cx + cs].sum())
        return total


@dataclass
class AlfScuResult:
    decision: AlfDecision
    cost: RdCost
    off_cost: RdCost  # super-block ALF off
    on_cost: RdCost  # best of the flagged alternatives
    cells: List[Tuple[int, int, int]] = field(default_factory=list)


def decide_cu_flags(
    ctx: AlfContext, errors: AlfErrorMaps, cells: Sequence[Tuple[int, int, int]]
) -> AlfScuResult:
    """Per-cell on/off by cost, versus turning ALF off for the whole super-block."""
    d_off = [errors.cell(errors.off, *cell) for cell in cells]
    d_on = [errors.cell(errors.on, *cell) for cell in cells]
    k = len(cells)

    def cost_of(decision: AlfDecision) -> RdCost:
        distortion = sum(on if flag else off for flag, on, off in zip(decision.cu_flags, d_on, d_off))
        return RdCost(distortion, bits_for_alf_flags(decision, ctx.signaling), ctx.lam)

    off = AlfDecision.off(k)
    off_cost = cost_of(off)
    flagged = [AlfDecision.from_flags((True,) * k, ctx.signaling)]
    if ctx.signaling != AlfSignaling.SUPERBLOCK:
        per_cell = tuple(on < off_ for on, off_ in zip(d_on, d_off))
        if any(per_cell) and not all(per_cell):
            flagged.append(AlfDecision.from_flags(per_cell, ctx.signaling))
    best_on, best_on_cost = flagged[0], cost_of(flagged[0])
    for decision in flagged[1:]:
        cost = cost_of(decision)
        if cost < best_on_cost:
            best_on, best_on_cost = decision, cost

    if best_on_cost < off_cost:
        return AlfScuResult(best_on, best_on_cost, off_cost, best_on_cost, list(cells))
    return AlfScuResult(off, off_cost, off_cost, best_on_cost, list(cells))


@dataclass
class AlfSlice:
    enabled: bool
    alf_filter: AlfFilter
    results: List[AlfScuResult]
    cost: Optional[RdCost] = None
    off_cost: Optional[RdCost] = None

    @property
    def decisions(self) -> List[AlfDecision]:
        return [r.decision for r in self.results]


def filter_bits(alf_filter: AlfFilter) -> int:
    counter = BitCounter()
    write_alf_filter(counter, alf_filter)
    return counter.tell()


def decide_alf_slice(ctx: AlfContext, scu_cells: Sequence[Sequence[Tuple[int, int, int]]]) -> AlfSlice:
    """Derives the frame filter and per-SCU flags; the slice flag is set only when it lowers the cost."""
    dw, dh = ctx.display[0]
    if dw < 5 or dh < 5:
        return AlfSlice(False, AlfFilter.identity(), [])
    alf_filter = derive_wiener_filter(ctx.original[0][:dh, :dw], ctx.reconstruction[0][:dh, :dw])
    filtered = [apply_alf(p, alf_filter, None, ctx.bit_depth) for p in ctx.reconstruction]
    errors = AlfErrorMaps(ctx, filtered)
    results = [decide_cu_flags(ctx, errors, cells) for cells in scu_cells]

    on_cost = RdCost(0, 1 + filter_bits(alf_filter), ctx.lam)
    off_distortion = 0
    for result in results:
        on_cost = on_cost + result.cost
        off_distortion += result.off_cost.distortion
    off_cost = RdCost(off_distortion, 1, ctx.lam)
    enabled = on_cost < off_cost
    logger.debug(f"ALF slice: on={on_cost.cost:.1f} off={off_cost.cost:.1f} coefficients={alf_filter.coefficients}")
    return AlfSlice(enabled, alf_filter, results if enabled else [], on_cost, off_cost)


def apply_alf_frame(
    planes: Sequence[np.ndarray],
    alf_filter: AlfFilter,
    scu_cells: Sequence[Sequence[Tuple[int, int, int]]],
    decisions: Sequence[AlfDecision],
    bit_depth: int,
) -> List[np.ndarray]:
    """Applies the slice filter to all three planes under the per-cell flags."""
    cells = [cell for scu in scu_cells for cell in scu]
    flags = [flag for decision in decisions for flag in decision.cu_flags]
    luma_mask = cell_mask(planes[0].shape, cells, flags)
    chroma_mask = luma_mask[::2, ::2]
    return [
        apply_alf(plane, alf_filter, luma_mask if component == 0 else chroma_mask, bit_depth)
        for component, plane in enumerate(planes)
    ]
