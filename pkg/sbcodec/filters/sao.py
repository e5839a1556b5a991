"""Sample adaptive offset with fixed-size or adaptive (SCU split flag) blocks.

Edge-offset classification is done per SCU; samples whose neighbor lies
outside the SCU are category 0. Every SAO block sits inside one SCU, so
SCUs can be filtered in any order.
"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from sbcodec.bitstream import BitCounter, BitReader, BitSink, ue_length
from sbcodec.config import SaoMode
from sbcodec.errors import BitstreamError
from sbcodec.partition import RdCost

logger = logging.getLogger(__name__)

# --- Configuration & Constants ---
NUM_BANDS = 32
BO_BANDS_PER_BLOCK = 4
BAND_POSITIONS = NUM_BANDS - BO_BANDS_PER_BLOCK + 1  # first band 0..28
BAND_POSITION_BITS = 5
# One slice enable flag per group: luma, then both chroma planes.
SAO_PLANE_GROUPS = ((0,), (1, 2))


class SaoBlockMode(IntEnum):
    OFF = 0
    NEW = 1
    MERGE_LEFT = 2
    MERGE_UP = 3


class SaoType(IntEnum):
    EO_0 = 0
    EO_90 = 1
    EO_45 = 2
    EO_135 = 3
    BO = 4


EO_TYPES = (SaoType.EO_0, SaoType.EO_90, SaoType.EO_45, SaoType.EO_135)

# (dy, dx) of the two neighbors compared against each sample.
_EO_NEIGHBORS = {
    SaoType.EO_0: ((0, -1), (0, 1)),
    SaoType.EO_90: ((-1, 0), (1, 0)),
    SaoType.EO_45: ((-1, 1), (1, -1)),
    SaoType.EO_135: ((-1, -1), (1, 1)),
}

# sign(c - n0) + sign(c - n1), shifted by 2, to category.
_SIGN_SUM_TO_CATEGORY = np.array([1, 2, 0, 3, 4], dtype=np.int8)


@dataclass(frozen=True)
class SaoParams:
    mode: SaoBlockMode = SaoBlockMode.OFF
    sao_type: SaoType = SaoType.EO_0
    offsets: Tuple[int, int, int, int] = (0, 0, 0, 0)
    band_position: int = 0

    @property
    def is_merge(self) -> bool:
        return self.mode in (SaoBlockMode.MERGE_LEFT, SaoBlockMode.MERGE_UP)


SAO_OFF = SaoParams()
SAO_MERGE_LEFT = SaoParams(SaoBlockMode.MERGE_LEFT)
SAO_MERGE_UP = SaoParams(SaoBlockMode.MERGE_UP)


def max_offset(bit_depth: int) -> int:
    return (1 << (min(bit_depth, 10) - 5)) - 1


# --- Classification ---

def eo_category(current: int, n0: int, n1: int) -> int:
    s = int(np.sign(current - n0) + np.sign(current - n1))
    return int(_SIGN_SUM_TO_CATEGORY[s + 2])


def eo_categories(window: np.ndarray, sao_type: SaoType) -> np.ndarray:
    """Category 0..4 of every sample; samples without both neighbors in the window are 0."""
    a = np.asarray(window, dtype=np.int64)
    h, w = a.shape
    (dy0, dx0), (dy1, dx1) = _EO_NEIGHBORS[SaoType(sao_type)]
    categories = np.zeros((h, w), dtype=np.int8)
    y0 = 1 if (dy0 or dy1) else 0
    x0 = 1 if (dx0 or dx1) else 0
    y1, x1 = h - y0, w - x0
    if y1 <= y0 or x1 <= x0:
        return categories
    c = a[y0:y1, x0:x1]
    n0 = a[y0 + dy0:y1 + dy0, x0 + dx0:x1 + dx0]
    n1 = a[y0 + dy1:y1 + dy1, x0 + dx1:x1 + dx1]
    categories[y0:y1, x0:x1] = _SIGN_SUM_TO_CATEGORY[np.sign(c - n0) + np.sign(c - n1) + 2]
    return categories


def bo_band(sample, bit_depth: int):
    """Band 0..31; works on ints and arrays."""
    return np.right_shift(sample, bit_depth - 5)


def classify(window: np.ndarray, sao_type: SaoType, bit_depth: int) -> np.ndarray:
    if sao_type == SaoType.BO:
        return bo_band(np.asarray(window, dtype=np.int64), bit_depth)
    return eo_categories(window, sao_type)


def offset_samples(rec: np.ndarray, classes: np.ndarray, params: SaoParams, bit_depth: int) -> np.ndarray:
    """Adds the class offsets of resolved params to `rec` and clips."""
    rec = np.asarray(rec, dtype=np.int64)
    if params.mode == SaoBlockMode.OFF:
        return rec.copy()
    if params.mode != SaoBlockMode.NEW:
        raise ValueError(f"SAO params must be resolved before application, got {params.mode.name}")
    if params.sao_type == SaoType.BO:
        lut = np.zeros(NUM_BANDS, dtype=np.int64)
        lut[params.band_position:params.band_position + BO_BANDS_PER_BLOCK] = params.offsets
    else:
        lut = np.zeros(5, dtype=np.int64)
        lut[1:] = params.offsets
    return np.clip(rec + lut[classes], 0, (1 << bit_depth) - 1)


# --- Offset estimation ---

@dataclass
class OffsetEstimate:
    sums: np.ndarray
    counts: np.ndarray
    offsets: np.ndarray


def estimate_offsets(
    orig: np.ndarray,
    rec: np.ndarray,
    classes: np.ndarray,
    sao_type: SaoType,
    bit_depth: int,
    valid: Optional[np.ndarray] = None,
) -> OffsetEstimate:
    """Mean orig - rec per class, rounded and clipped to the legal range and sign.

    EO yields the four categories 1..4, BO yields all 32 bands.
    """
    orig = np.asarray(orig, dtype=np.int64)
    rec = np.asarray(rec, dtype=np.int64)
    if valid is None:
        valid = np.ones(orig.shape, dtype=bool)
    n = NUM_BANDS if sao_type == SaoType.BO else 5
    cls = np.asarray(classes)[valid].astype(np.int64)
    diff = (orig - rec)[valid]
    sums = np.zeros(n, dtype=np.int64)
    np.add.at(sums, cls, diff)
    counts = np.bincount(cls, minlength=n).astype(np.int64)
    if sao_type != SaoType.BO:
        sums, counts = sums[1:], counts[1:]

    offsets = np.sign(sums) * ((np.abs(sums) + counts // 2) // np.maximum(counts, 1))
    offsets = np.where(counts > 0, offsets, 0)
    limit = max_offset(bit_depth)
    offsets = np.clip(offsets, -limit, limit)
    if sao_type != SaoType.BO:
        offsets[:2] = np.maximum(offsets[:2], 0)
        offsets[2:] = np.minimum(offsets[2:], 0)
    return OffsetEstimate(sums, counts, offsets.astype(np.int64))


def _offset_bits(offset: int, signed: bool) -> int:
    return ue_length(abs(offset)) + (1 if signed and offset != 0 else 0)


def _refine_offsets(
    region: "_Region", sao_type: SaoType, estimate: OffsetEstimate, lam: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per class, keeps the RD-best offset between 0 and the estimate.

    Returns (offsets, distortion deltas, offset bits) per class.
    """
    max_value = (1 << region.bit_depth) - 1
    signed = sao_type == SaoType.BO
    first_class = 0 if signed else 1
    classes = region.classes[sao_type]
    n = len(estimate.offsets)
    offsets = np.zeros(n, dtype=np.int64)
    deltas = np.zeros(n, dtype=np.int64)
    bits = np.full(n, _offset_bits(0, signed), dtype=np.int64)
    for k in range(n):
        est = int(estimate.offsets[k])
        if est == 0:
            continue
        mask = region.valid & (classes == k + first_class)
        o, r = region.orig[mask], region.rec[mask]
        base = int(np.sum((o - r) ** 2))
        best_cost = lam * bits[k]
        step = 1 if est > 0 else -1
        for candidate in range(step, est + step, step):
            delta = int(np.sum((o - np.clip(r + candidate, 0, max_value)) ** 2)) - base
            b = _offset_bits(candidate, signed)
            if delta + lam * b < best_cost:
                best_cost = delta + lam * b
                offsets[k], deltas[k], bits[k] = candidate, delta, b
    return offsets, deltas, bits


# --- Syntax ---

def write_sao_params(sink: BitSink, params: SaoParams) -> None:
    sink.write_ue(int(params.mode))
    if params.mode != SaoBlockMode.NEW:
        return
    sink.write_ue(int(params.sao_type))
    if params.sao_type == SaoType.BO:
        sink.write_bits(params.band_position, BAND_POSITION_BITS)
        for offset in params.offsets:
            sink.write_ue(abs(offset))
            if offset:
                sink.write_flag(offset < 0)
    else:
        for offset in params.offsets:
            sink.write_ue(abs(offset))


def sao_param_bits(params: SaoParams) -> int:
    counter = BitCounter()
    write_sao_params(counter, params)
    return counter.tell()


def read_sao_params(
    reader: BitReader, bit_depth: int, left_available: bool, up_available: bool, allow_merge: bool = True
) -> SaoParams:
    start = reader.tell()
    code = reader.read_ue()
    if code > SaoBlockMode.MERGE_UP:
        raise BitstreamError(f"invalid SAO mode {code}", bit_position=start)
    mode = SaoBlockMode(code)
    if mode == SaoBlockMode.MERGE_LEFT and not (allow_merge and left_available):
        raise BitstreamError("SAO merge-left without a left block", bit_position=start)
    if mode == SaoBlockMode.MERGE_UP and not (allow_merge and up_available):
        raise BitstreamError("SAO merge-up without an upper block", bit_position=start)
    if mode != SaoBlockMode.NEW:
        return SaoParams(mode)

    type_pos = reader.tell()
    type_code = reader.read_ue()
    if type_code > SaoType.BO:
        raise BitstreamError(f"invalid SAO type {type_code}", bit_position=type_pos)
    sao_type = SaoType(type_code)
    limit = max_offset(bit_depth)
    band_position = 0
    offsets = []
    if sao_type == SaoType.BO:
        band_pos = reader.tell()
        band_position = reader.read_bits(BAND_POSITION_BITS)
        if band_position >= BAND_POSITIONS:
            raise BitstreamError(f"SAO band position {band_position} leaves the band range", bit_position=band_pos)
        for _ in range(BO_BANDS_PER_BLOCK):
            pos = reader.tell()
            magnitude = reader.read_ue()
            if magnitude > limit:
                raise BitstreamError(f"SAO offset {magnitude} exceeds {limit}", bit_position=pos)
            offsets.append(-magnitude if magnitude and reader.read_flag() else magnitude)
    else:
        for category in range(4):
            pos = reader.tell()
            magnitude = reader.read_ue()
            if magnitude > limit:
                raise BitstreamError(f"SAO offset {magnitude} exceeds {limit}", bit_position=pos)
            offsets.append(magnitude if category < 2 else -magnitude)
    return SaoParams(SaoBlockMode.NEW, sao_type, tuple(offsets), band_position)


# --- Block grid ---

class SaoBlockGrid:
    """Signaled and resolved SAO params per block and plane, plus per-SCU split flags."""

    def __init__(self, width: int, height: int, block_size: int, scu_size: int):
        self.block_size = block_size
        self.scu_size = scu_size
        self.rows = height // block_size
        self.cols = width // block_size
        self.signaled = [[[SAO_OFF] * self.cols for _ in range(self.rows)] for _ in range(3)]
        self.effective = [[[SAO_OFF] * self.cols for _ in range(self.rows)] for _ in range(3)]
        self.split_flags: Dict[Tuple[int, int], bool] = {}
        self.enabled = [True, True, True]

    @property
    def any_enabled(self) -> bool:
        return any(self.enabled)

    def set_enabled(self, luma: bool, chroma: bool) -> None:
        """Applies the slice flags; disabled planes are reset to OFF."""
        for group, on in zip(SAO_PLANE_GROUPS, (luma, chroma)):
            for component in group:
                self.enabled[component] = on
                if not on:
                    self.signaled[component] = [[SAO_OFF] * self.cols for _ in range(self.rows)]
                    self.effective[component] = [[SAO_OFF] * self.cols for _ in range(self.rows)]

    @property
    def blocks_per_scu(self) -> int:
        return self.scu_size // self.block_size

    def scu_blocks(self, scu_x: int, scu_y: int) -> List[Tuple[int, int]]:
        """(row, col) of the blocks inside an SCU, raster order."""
        r0, c0, n = scu_y // self.block_size, scu_x // self.block_size, self.blocks_per_scu
        return [(r, c) for r in range(r0, r0 + n) for c in range(c0, c0 + n)]

    def neighbors(self, component: int, row: int, col: int) -> Tuple[Optional[SaoParams], Optional[SaoParams]]:
        left = self.effective[component][row][col - 1] if col > 0 else None
        up = self.effective[component][row - 1][col] if row > 0 else None
        return left, up

    def resolve(self, component: int, row: int, col: int, params: SaoParams) -> SaoParams:
        if not params.is_merge:
            return params
        left, up = self.neighbors(component, row, col)
        source = left if params.mode == SaoBlockMode.MERGE_LEFT else up
        if source is None:
            raise ValueError(f"unresolved SAO merge at block ({row},{col})")
        return source

    def set(self, component: int, row: int, col: int, params: SaoParams, effective: Optional[SaoParams] = None):
        self.signaled[component][row][col] = params
        self.effective[component][row][col] = effective if effective is not None else self.resolve(
            component, row, col, params
        )

    def set_unsplit(self, component: int, scu_x: int, scu_y: int, params: SaoParams) -> None:
        """Top-left block carries `params`; the rest merge left along the top row and up elsewhere."""
        blocks = self.scu_blocks(scu_x, scu_y)
        r0, c0 = blocks[0]
        for row, col in blocks:
            if (row, col) == (r0, c0):
                signaled = params
            else:
                signaled = SAO_MERGE_LEFT if row == r0 else SAO_MERGE_UP
            self.set(component, row, col, signaled, params)


def apply_sao(plane: np.ndarray, grid: SaoBlockGrid, component: int, bit_depth: int) -> np.ndarray:
    """Filters one plane with the resolved params; classification reads only `plane`."""
    plane = np.asarray(plane, dtype=np.int64)
    scale = 0 if component == 0 else 1
    s, b = grid.scu_size >> scale, grid.block_size >> scale
    out = plane.copy()
    height, width = plane.shape
    per_scu = s // b
    for sy in range(0, height, s):
        for sx in range(0, width, s):
            window = plane[sy:sy + s, sx:sx + s]
            classes: Dict[SaoType, np.ndarray] = {}
            for r in range(per_scu):
                for c in range(per_scu):
                    params = grid.effective[component][sy // b + r][sx // b + c]
                    if params.mode == SaoBlockMode.OFF:
                        continue
                    if params.sao_type not in classes:
                        classes[params.sao_type] = classify(window, params.sao_type, bit_depth)
                    ys, xs = slice(r * b, (r + 1) * b), slice(c * b, (c + 1) * b)
                    out[sy + r * b:sy + (r + 1) * b, sx + c * b:sx + (c + 1) * b] = offset_samples(
                        window[ys, xs], classes[params.sao_type][ys, xs], params, bit_depth
                    )
    return out


def write_scu_sao(sink: BitSink, grid: SaoBlockGrid, scu_x: int, scu_y: int, sao_mode: SaoMode) -> None:
    """SCU syntax for the planes enabled in the slice; nothing at all when none is."""
    if sao_mode == SaoMode.OFF or not grid.any_enabled:
        return
    components = [c for c in range(3) if grid.enabled[c]]
    blocks = grid.scu_blocks(scu_x, scu_y)
    if sao_mode == SaoMode.ADAPTIVE:
        split = grid.split_flags[(scu_x, scu_y)]
        sink.write_flag(split)
        if not split:
            row, col = blocks[0]
            for component in components:
                write_sao_params(sink, grid.signaled[component][row][col])
            return
    for row, col in blocks:
        for component in components:
            write_sao_params(sink, grid.signaled[component][row][col])


def read_scu_sao(
    reader: BitReader, grid: SaoBlockGrid, scu_x: int, scu_y: int, sao_mode: SaoMode, bit_depth: int
) -> None:
    if sao_mode == SaoMode.OFF or not grid.any_enabled:
        return
    components = [c for c in range(3) if grid.enabled[c]]
    if sao_mode == SaoMode.ADAPTIVE:
        split = reader.read_flag()
        grid.split_flags[(scu_x, scu_y)] = split
        if not split:
            for component in components:
                params = read_sao_params(reader, bit_depth, False, False, allow_merge=False)
                grid.set_unsplit(component, scu_x, scu_y, params)
            return
    for row, col in grid.scu_blocks(scu_x, scu_y):
        for component in components:
            left, up = grid.neighbors(component, row, col)
            params = read_sao_params(reader, bit_depth, left is not None, up is not None)
            grid.set(component, row, col, params)


# --- Slice flags ---

def write_sao_slice(sink: BitSink, luma: bool, chroma: bool) -> None:
    sink.write_flag(luma)
    sink.write_flag(chroma)


def read_sao_slice(reader: BitReader) -> Tuple[bool, bool]:
    luma = reader.read_flag()
    return luma, reader.read_flag()


# --- RD decisions ---

@dataclass
class SaoContext:
    original: Sequence[np.ndarray]  # padded source planes
    reconstruction: Sequence[np.ndarray]  # pre-SAO reconstruction
    display: Sequence[Tuple[int, int]]  # (width, height) per plane
    bit_depth: int
    lam: float


@dataclass
class _Region:
    """One plane's samples of an SCU or SAO block and their classifications."""

    orig: np.ndarray
    rec: np.ndarray
    valid: np.ndarray
    classes: Dict[SaoType, np.ndarray]
    bit_depth: int

    @property
    def base_distortion(self) -> int:
        d = (self.orig - self.rec)[self.valid]
        return int(np.sum(d * d))

    def sub(self, y: int, x: int, n: int) -> "_Region":
        ys, xs = slice(y, y + n), slice(x, x + n)
        return _Region(
            self.orig[ys, xs], self.rec[ys, xs], self.valid[ys, xs],
            {t: c[ys, xs] for t, c in self.classes.items()}, self.bit_depth,
        )

    def distortion(self, params: SaoParams) -> int:
        if params.mode == SaoBlockMode.OFF:
            return self.base_distortion
        filtered = offset_samples(self.rec, self.classes[params.sao_type], params, self.bit_depth)
        d = (self.orig - filtered)[self.valid]
        return int(np.sum(d * d))


def _scu_region(ctx: SaoContext, component: int, scu_x: int, scu_y: int, scu_size: int) -> _Region:
    scale = 0 if component == 0 else 1
    px, py, s = scu_x >> scale, scu_y >> scale, scu_size >> scale
    orig = np.asarray(ctx.original[component][py:py + s, px:px + s], dtype=np.int64)
    rec = np.asarray(ctx.reconstruction[component][py:py + s, px:px + s], dtype=np.int64)
    dw, dh = ctx.display[component]
    valid = np.zeros((s, s), dtype=bool)
    valid[:max(0, min(s, dh - py)), :max(0, min(s, dw - px))] = True
    classes = {t: classify(rec, t, ctx.bit_depth) for t in SaoType}
    return _Region(orig, rec, valid, classes, ctx.bit_depth)


def _new_candidates(region: _Region, lam: float) -> List[Tuple[SaoParams, int]]:
    """RD-refined NEW params for each EO class and the best BO band position, with distortion deltas."""
    candidates = []
    for sao_type in EO_TYPES:
        estimate = estimate_offsets(
            region.orig, region.rec, region.classes[sao_type], sao_type, region.bit_depth, region.valid
        )
        offsets, deltas, _ = _refine_offsets(region, sao_type, estimate, lam)
        candidates.append((SaoParams(SaoBlockMode.NEW, sao_type, tuple(int(o) for o in offsets)), int(deltas.sum())))

    estimate = estimate_offsets(
        region.orig, region.rec, region.classes[SaoType.BO], SaoType.BO, region.bit_depth, region.valid
    )
    offsets, deltas, bits = _refine_offsets(region, SaoType.BO, estimate, lam)
    band_costs = deltas + lam * bits
    window_costs = [band_costs[p:p + BO_BANDS_PER_BLOCK].sum() for p in range(BAND_POSITIONS)]
    p = int(np.argmin(window_costs))
    bands = slice(p, p + BO_BANDS_PER_BLOCK)
    candidates.append(
        (SaoParams(SaoBlockMode.NEW, SaoType.BO, tuple(int(o) for o in offsets[bands]), p), int(deltas[bands].sum()))
    )
    return candidates


@dataclass
class SaoChoice:
    params: SaoParams  # as signaled
    effective: SaoParams
    cost: RdCost
    candidates: Tuple[RdCost, ...] = ()


def choose_sao_params(
    region: _Region,
    left: Optional[SaoParams],
    up: Optional[SaoParams],
    lam: float,
    allow_merge: bool = True,
) -> SaoChoice:
    """Cheapest of OFF, NEW (4 EO classes and BO) and the available merges."""
    base = region.base_distortion
    options: List[Tuple[SaoParams, SaoParams, RdCost]] = [(SAO_OFF, SAO_OFF, RdCost(base, sao_param_bits(SAO_OFF), lam))]
    for params, delta in _new_candidates(region, lam):
        options.append((params, params, RdCost(base + delta, sao_param_bits(params), lam)))
    if allow_merge:
        for merge, source in ((SAO_MERGE_LEFT, left), (SAO_MERGE_UP, up)):
            if source is not None:
                options.append((merge, source, RdCost(region.distortion(source), sao_param_bits(merge), lam)))

    best = options[0]
    for option in options[1:]:
        if option[2] < best[2]:
            best = option
    return SaoChoice(best[0], best[1], best[2], tuple(o[2] for o in options))


@dataclass
class SaoScuResult:
    x: int
    y: int
    split: Optional[bool]  # None in the fixed scheme
    cost: RdCost
    off_cost: RdCost
    unsplit_cost: Optional[RdCost] = None
    split_cost: Optional[RdCost] = None
    # Chosen cost per plane, split flag excluded, and the unfiltered distortion per plane.
    plane_costs: Tuple[RdCost, ...] = ()
    plane_off: Tuple[int, ...] = ()


def _sum_costs(costs: Sequence[RdCost], lam: float) -> RdCost:
    total = RdCost(0, 0, lam)
    for cost in costs:
        total = total + cost
    return total


def _choose_blocks(
    ctx: SaoContext, grid: SaoBlockGrid, regions: Sequence[_Region], scu_x: int, scu_y: int
) -> List[RdCost]:
    totals = [RdCost(0, 0, ctx.lam)] * len(regions)
    r0, c0 = scu_y // grid.block_size, scu_x // grid.block_size
    for row, col in grid.scu_blocks(scu_x, scu_y):
        for component, region in enumerate(regions):
            b = grid.block_size >> (0 if component == 0 else 1)
            left, up = grid.neighbors(component, row, col)
            choice = choose_sao_params(region.sub((row - r0) * b, (col - c0) * b, b), left, up, ctx.lam)
            grid.set(component, row, col, choice.params, choice.effective)
            totals[component] = totals[component] + choice.cost
    return totals


def choose_scu_sao_fixed(ctx: SaoContext, grid: SaoBlockGrid, scu_x: int, scu_y: int) -> SaoScuResult:
    regions = [_scu_region(ctx, c, scu_x, scu_y, grid.scu_size) for c in range(3)]
    plane_costs = _choose_blocks(ctx, grid, regions, scu_x, scu_y)
    off_bits = 3 * len(grid.scu_blocks(scu_x, scu_y)) * sao_param_bits(SAO_OFF)
    plane_off = tuple(r.base_distortion for r in regions)
    off_cost = RdCost(sum(plane_off), off_bits, ctx.lam)
    return SaoScuResult(
        scu_x, scu_y, None, _sum_costs(plane_costs, ctx.lam), off_cost,
        plane_costs=tuple(plane_costs), plane_off=plane_off,
    )


def choose_scu_sao_split(ctx: SaoContext, grid: SaoBlockGrid, scu_x: int, scu_y: int) -> SaoScuResult:
    """One parameter set for the whole SCU versus independent blocks, plus the split flag."""
    regions = [_scu_region(ctx, c, scu_x, scu_y, grid.scu_size) for c in range(3)]

    unsplit_planes, unsplit_params = [], []
    for region in regions:
        choice = choose_sao_params(region, None, None, ctx.lam, allow_merge=False)
        unsplit_planes.append(choice.cost)
        unsplit_params.append(choice.params)
    unsplit_cost = _sum_costs(unsplit_planes, ctx.lam).with_bits(1)

    split_planes = _choose_blocks(ctx, grid, regions, scu_x, scu_y)
    split_cost = _sum_costs(split_planes, ctx.lam).with_bits(1)
    plane_off = tuple(r.base_distortion for r in regions)
    off_cost = RdCost(sum(plane_off), 1 + 3 * sao_param_bits(SAO_OFF), ctx.lam)

    split = split_cost < unsplit_cost
    grid.split_flags[(scu_x, scu_y)] = split
    if not split:
        for component, params in enumerate(unsplit_params):
            grid.set_unsplit(component, scu_x, scu_y, params)
    logger.debug(
        f"SAO SCU ({scu_x},{scu_y}): unsplit={unsplit_cost.cost:.1f} split={split_cost.cost:.1f} "
        f"-> {'split' if split else 'unsplit'}"
    )
    return SaoScuResult(
        scu_x, scu_y, split, split_cost if split else unsplit_cost, off_cost, unsplit_cost, split_cost,
        plane_costs=tuple(split_planes if split else unsplit_planes), plane_off=plane_off,
    )


@dataclass
class SaoSlice:
    luma: bool
    chroma: bool
    cost: RdCost
    off_cost: RdCost

    @property
    def enabled(self) -> bool:
        return self.luma or self.chroma


def decide_sao_slice(results: Sequence[SaoScuResult], lam: float, sao_mode: SaoMode) -> SaoSlice:
    """Per plane group, keeps SAO only when the frame's SAO cost beats leaving the group unfiltered.

    Both costs carry the two slice flag bits; the adaptive split flags are
    charged once whenever any group stays on.
    """
    slice_bits = len(SAO_PLANE_GROUPS)
    split_bits = len(results) if sao_mode == SaoMode.ADAPTIVE else 0
    on, off = [], []
    for group in SAO_PLANE_GROUPS:
        on.append(_sum_costs([r.plane_costs[c] for r in results for c in group], lam))
        off.append(RdCost(sum(r.plane_off[c] for r in results for c in group), 0, lam))
    flags = [on_cost < off_cost for on_cost, off_cost in zip(on, off)]

    off_cost = _sum_costs(off, lam).with_bits(slice_bits)
    cost = _sum_costs([o if f else d for o, d, f in zip(on, off, flags)], lam).with_bits(slice_bits)
    if any(flags):
        cost = cost.with_bits(split_bits)
        if not cost < off_cost:
            flags, cost = [False] * len(flags), off_cost
    logger.debug(
        f"SAO slice: luma={'on' if flags[0] else 'off'} chroma={'on' if flags[1] else 'off'} "
        f"cost={cost.cost:.1f} off={off_cost.cost:.1f}"
    )
    return SaoSlice(flags[0], flags[1], cost, off_cost)
