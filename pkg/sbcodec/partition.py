"""Super-block partitioning: CU quadtree RD search, Direct-CTU and SCU-to-CTU modes.

`CodingContext` holds the per-frame working reconstruction and the motion
field. The decoder drives the same object, so prediction and reconstruction
are shared code. `EncodingContext` adds the original picture, lambda and a
motion-search cache for the RD search.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from sbcodec.bitstream import BitCounter, BitSink, write_coefficients
from sbcodec.config import MIN_CU_SIZE, EncoderConfig
from sbcodec.errors import ConfigError
from sbcodec.prediction import (
    IntraMode,
    MotionVector,
    PaddedPlane,
    build_residual,
    eligible_intra_modes,
    intra_predict,
    motion_compensate,
    motion_search,
    predict_mv,
)
from sbcodec.transform import MAX_TRANSFORM_SIZE, QuantParams, code_residual, derive_quant_params, reconstruct_residual

logger = logging.getLogger(__name__)

# --- Configuration & Constants ---
DEFAULT_LAMBDA_FACTOR = 0.85
MV_GRID = MIN_CU_SIZE  # motion field granularity in luma pixels


@dataclass(frozen=True)
class PartitionSizes:
    m_scu: int
    m_ctu: int
    m_mcu: int

    @property
    def quadtree_bypassed(self) -> bool:
        """SCU-to-CTU is skipped (and no mode flag sent) when CTU and MCU coincide."""
        return self.m_ctu == self.m_mcu

    @property
    def ctus_per_side(self) -> int:
        return self.m_scu // self.m_ctu


def derive_partition_sizes(config: EncoderConfig) -> PartitionSizes:
    m_scu = config.scu_size
    log2_scu = m_scu.bit_length() - 1
    direct, depth = config.max_direct_partition_depth, config.max_partition_depth
    if direct > depth:
        raise ConfigError(f"max_direct_partition_depth ({direct}) exceeds max_partition_depth ({depth})")
    if depth > log2_scu:
        raise ConfigError(f"max_partition_depth {depth} is too deep for a {m_scu} SCU")
    sizes = PartitionSizes(m_scu, 1 << (log2_scu - direct), 1 << (log2_scu - depth))
    if sizes.m_mcu < MIN_CU_SIZE:
        raise ConfigError(f"minimum CU size {sizes.m_mcu} is below {MIN_CU_SIZE}")
    return sizes


def _morton_key(x: int, y: int) -> int:
    key = 0
    for bit in range(16):
        key |= ((x >> bit) & 1) << (2 * bit)
        key |= ((y >> bit) & 1) << (2 * bit + 1)
    return key


def z_scan_order(grid_width: int, grid_height: int) -> List[Tuple[int, int]]:
    """Recursive quadrant order (TL, TR, BL, BR) over a grid of blocks."""
    cells = [(x, y) for y in range(grid_height) for x in range(grid_width)]
    return sorted(cells, key=lambda c: _morton_key(*c))


def lambda_of_qp(qp: int, slice_is_intra: bool, factor: float = DEFAULT_LAMBDA_FACTOR) -> float:
    if not 0 <= qp <= 51:
        raise ValueError(f"qp must be in 0..51, got {qp}")
    lam = factor * 2.0 ** ((qp - 12) / 3.0)
    return lam / 2 if slice_is_intra else lam


@dataclass(frozen=True)
class RdCost:
    distortion: int
    rate: int
    lam: float

    @property
    def cost(self) -> float:
        return self.distortion + self.lam * self.rate

    def __add__(self, other: "RdCost") -> "RdCost":
        return RdCost(self.distortion + other.distortion, self.rate + other.rate, self.lam)

    def __lt__(self, other: "RdCost") -> bool:
        return (self.cost, self.rate) < (other.cost, other.rate)

    def with_bits(self, bits: int) -> "RdCost":
        return RdCost(self.distortion, self.rate + bits, self.lam)


# --- CU tree ---

class CuMode(str, Enum):
    INTRA = "intra"
    INTER = "inter"
    SKIP = "skip"


@dataclass
class CuNode:
    x: int
    y: int
    size: int
    split: bool = False
    mode: Optional[CuMode] = None
    intra_mode: Optional[IntraMode] = None
    mv: Optional[MotionVector] = None
    mvd: Optional[MotionVector] = None
    # Quantized levels per plane (Y, U, V), TUs in raster order. Empty for skip.
    levels: Tuple[List[np.ndarray], ...] = ()
    children: List["CuNode"] = field(default_factory=list)
    cost: Optional[RdCost] = field(default=None, compare=False, repr=False)
    alternatives: Tuple[RdCost, ...] = field(default=(), compare=False, repr=False)

    def leaves(self) -> Iterator["CuNode"]:
        if self.split:
            for child in self.children:
                yield from child.leaves()
        else:
            yield self


class ScuMode(str, Enum):
    DIRECT_CTU = "direct_ctu"
    SCU_TO_CTU = "scu_to_ctu"


@dataclass
class ScuDecision:
    x: int
    y: int
    mode: ScuMode
    nodes: List[CuNode]
    cost: RdCost
    direct_cost: RdCost
    quadtree_cost: Optional[RdCost] = None

    def leaves(self) -> Iterator[CuNode]:
        for node in self.nodes:
            yield from node.leaves()


def tu_layout(cu_size: int, chroma: bool) -> List[Tuple[int, int, int]]:
    """(x, y, n) of each TU inside a CU, relative to the CU in plane units."""
    n = cu_size // 2 if chroma else cu_size
    tu = min(n, MAX_TRANSFORM_SIZE)
    return [(tx, ty, tu) for ty in range(0, n, tu) for tx in range(0, n, tu)]


# --- CU syntax ---

def write_cu(sink: BitSink, node: CuNode, min_leaf: int, slice_is_intra: bool) -> None:
    if node.size > min_leaf:
        sink.write_flag(node.split)
    if node.split:
        for child in node.children:
            write_cu(sink, child, min_leaf, slice_is_intra)
        return
    if not slice_is_intra:
        sink.write_flag(node.mode == CuMode.SKIP)
        if node.mode == CuMode.SKIP:
            return
        sink.write_flag(node.mode == CuMode.INTER)
    if node.mode == CuMode.INTER:
        sink.write_se(node.mvd.dx)
        sink.write_se(node.mvd.dy)
    else:
        sink.write_ue(int(node.intra_mode))
    for plane_levels in node.levels:
        for levels in plane_levels:
            write_coefficients(sink, levels)


def write_scu(sink: BitSink, decision: ScuDecision, sizes: PartitionSizes, slice_is_intra: bool) -> int:
    """Writes the SCU mode flag and CU trees; returns the mode-flag bit count."""
    flag_bits = 0
    if not sizes.quadtree_bypassed:
        sink.write_flag(decision.mode == ScuMode.SCU_TO_CTU)
        flag_bits = 1
    min_leaf = sizes.m_mcu if decision.mode == ScuMode.DIRECT_CTU else sizes.m_ctu
    for node in decision.nodes:
        write_cu(sink, node, min_leaf, slice_is_intra)
    return flag_bits


# --- Working state ---

@dataclass
class _Snapshot:
    x: int
    y: int
    size: int
    blocks: List[np.ndarray]
    mv_field: np.ndarray
    inter_map: np.ndarray
    coded_map: np.ndarray


class CodingContext:
    """Reconstruction planes plus the motion/coded maps of one frame."""

    def __init__(
        self,
        width: int,
        height: int,
        bit_depth: int,
        qp: int,
        slice_is_intra: bool,
        sizes: PartitionSizes,
        reference: Optional[Tuple[PaddedPlane, PaddedPlane, PaddedPlane]] = None,
    ):
        self.bit_depth = bit_depth
        self.max_value = (1 << bit_depth) - 1
        self.qp = qp
        self.slice_is_intra = slice_is_intra
        self.sizes = sizes
        self.reference = reference
        self.planes = [
            np.zeros((height, width), dtype=np.int64),
            np.zeros((height // 2, width // 2), dtype=np.int64),
            np.zeros((height // 2, width // 2), dtype=np.int64),
        ]
        grid = (height // MV_GRID, width // MV_GRID)
        self.mv_field = np.zeros(grid + (2,), dtype=np.int64)
        self.inter_map = np.zeros(grid, dtype=bool)
        self.coded_map = np.zeros(grid, dtype=bool)
        self._qparams: Dict[int, QuantParams] = {}

    @property
    def width(self) -> int:
        return self.planes[0].shape[1]

    @property
    def height(self) -> int:
        return self.planes[0].shape[0]

    def qparams(self, n: int) -> QuantParams:
        if n not in self._qparams:
            self._qparams[n] = derive_quant_params(self.qp, self.slice_is_intra, n, self.bit_depth)
        return self._qparams[n]

    # Neighbors

    def intra_neighbors(self, component: int, x: int, y: int, n: int) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        plane = self.planes[component]
        top = plane[y - 1, x:x + n] if y > 0 else None
        left = plane[y:y + n, x - 1] if x > 0 else None
        return top, left

    def _mv_at(self, x: int, y: int) -> Optional[MotionVector]:
        if x < 0 or y < 0 or x >= self.width or y >= self.height:
            return None
        gy, gx = y // MV_GRID, x // MV_GRID
        if not (self.coded_map[gy, gx] and self.inter_map[gy, gx]):
            return None
        return MotionVector(int(self.mv_field[gy, gx, 0]), int(self.mv_field[gy, gx, 1]))

    def mv_neighbors(self, x: int, y: int, size: int) -> List[Optional[MotionVector]]:
        """Left, top and top-right MVs; None where not yet coded, intra or outside."""
        return [self._mv_at(x - 1, y), self._mv_at(x, y - 1), self._mv_at(x + size, y - 1)]

    def mv_predictor(self, x: int, y: int, size: int) -> MotionVector:
        return predict_mv(self.mv_neighbors(x, y, size))

    def mv_fits(self, x: int, y: int, size: int, mv: MotionVector) -> bool:
        if self.reference is None:
            return False
        luma, chroma, _ = self.reference
        c = mv.chroma()
        return luma.contains(x + mv.dx, y + mv.dy, size, size) and chroma.contains(
            x // 2 + c.dx, y // 2 + c.dy, size // 2, size // 2
        )

    # Prediction and reconstruction

    def predict(self, node: CuNode) -> List[np.ndarray]:
        preds = []
        for component in range(3):
            scale = 0 if component == 0 else 1
            px, py, n = node.x >> scale, node.y >> scale, node.size >> scale
            if node.mode == CuMode.INTRA:
                top, left = self.intra_neighbors(component, px, py, n)
                preds.append(intra_predict(node.intra_mode, top, left, n, self.bit_depth))
            else:
                mv = node.mv if component == 0 else node.mv.chroma()
                preds.append(motion_compensate(self.reference[component], (px, py), mv, n, n))
        return preds

    def reconstruct_from_levels(self, node: CuNode, preds: Sequence[np.ndarray]) -> List[np.ndarray]:
        if node.mode == CuMode.SKIP:
            return [np.asarray(p, dtype=np.int64) for p in preds]
        blocks = []
        for component, pred in enumerate(preds):
            residual = np.zeros_like(pred, dtype=np.int64)
            for (tx, ty, tu), levels in zip(tu_layout(node.size, component > 0), node.levels[component]):
                residual[ty:ty + tu, tx:tx + tu] = reconstruct_residual(levels, self.qparams(tu))
            blocks.append(np.clip(pred + residual, 0, self.max_value))
        return blocks

    def store_leaf(self, node: CuNode, blocks: Sequence[np.ndarray]) -> None:
        for component, block in enumerate(blocks):
            scale = 0 if component == 0 else 1
            px, py = node.x >> scale, node.y >> scale
            n = block.shape[0]
            self.planes[component][py:py + n, px:px + n] = block
        gx0, gy0 = node.x // MV_GRID, node.y // MV_GRID
        g = node.size // MV_GRID
        inter = node.mode in (CuMode.INTER, CuMode.SKIP)
        self.coded_map[gy0:gy0 + g, gx0:gx0 + g] = True
        self.inter_map[gy0:gy0 + g, gx0:gx0 + g] = inter
        if inter:
            self.mv_field[gy0:gy0 + g, gx0:gx0 + g] = (node.mv.dx, node.mv.dy)
        else:
            self.mv_field[gy0:gy0 + g, gx0:gx0 + g] = 0

    # Trial state

    def snapshot(self, x: int, y: int, size: int) -> _Snapshot:
        blocks = []
        for component in range(3):
            scale = 0 if component == 0 else 1
            px, py, n = x >> scale, y >> scale, size >> scale
            blocks.append(self.planes[component][py:py + n, px:px + n].copy())
        gx, gy, g = x // MV_GRID, y // MV_GRID, size // MV_GRID
        return _Snapshot(
            x, y, size, blocks,
            self.mv_field[gy:gy + g, gx:gx + g].copy(),
            self.inter_map[gy:gy + g, gx:gx + g].copy(),
            self.coded_map[gy:gy + g, gx:gx + g].copy(),
        )

    def restore(self, snap: _Snapshot) -> None:
        for component, block in enumerate(snap.blocks):
            scale = 0 if component == 0 else 1
            px, py, n = snap.x >> scale, snap.y >> scale, snap.size >> scale
            self.planes[component][py:py + n, px:px + n] = block
        gx, gy, g = snap.x // MV_GRID, snap.y // MV_GRID, snap.size // MV_GRID
        self.mv_field[gy:gy + g, gx:gx + g] = snap.mv_field
        self.inter_map[gy:gy + g, gx:gx + g] = snap.inter_map
        self.coded_map[gy:gy + g, gx:gx + g] = snap.coded_map


class EncodingContext(CodingContext):
    """CodingContext plus what only the encoder knows: the source and lambda."""

    def __init__(
        self,
        original: Sequence[np.ndarray],
        display_size: Tuple[int, int],
        config: EncoderConfig,
        slice_is_intra: bool,
        sizes: PartitionSizes,
        reference: Optional[Tuple[PaddedPlane, PaddedPlane, PaddedPlane]] = None,
    ):
        height, width = original[0].shape
        super().__init__(width, height, config.bit_depth, config.qp, slice_is_intra, sizes, reference)
        self.original = [np.asarray(p, dtype=np.int64) for p in original]
        dw, dh = display_size
        self.display = [(dw, dh), ((dw + 1) // 2, (dh + 1) // 2), ((dw + 1) // 2, (dh + 1) // 2)]
        self.search_range = config.search_range
        # 10-bit SSE is 16x the 8-bit SSE for the same relative error.
        self.lam = lambda_of_qp(config.qp, slice_is_intra, config.lambda_factor) * (1 << (2 * (config.bit_depth - 8)))
        self._motion_cache: Dict[Tuple[int, int, int], MotionVector] = {}

    def distortion(self, component: int, x: int, y: int, block: np.ndarray) -> int:
        """SSE against the source, restricted to the display window."""
        dw, dh = self.display[component]
        h, w = block.shape
        w, h = min(w, dw - x), min(h, dh - y)
        if w <= 0 or h <= 0:
            return 0
        diff = self.original[component][y:y + h, x:x + w] - block[:h, :w]
        return int(np.sum(diff * diff))

    def search(self, x: int, y: int, size: int) -> MotionVector:
        key = (x, y, size)
        if key not in self._motion_cache:
            orig = self.original[0][y:y + size, x:x + size]
            mv, _ = motion_search(orig, self.reference[0], (x, y), self.search_range)
            self._motion_cache[key] = mv
        return self._motion_cache[key]


# --- RD search ---

def _leaf_candidates(ctx: EncodingContext, x: int, y: int, size: int) -> Iterator[CuNode]:
    if not ctx.slice_is_intra and ctx.reference is not None:
        mvp = ctx.mv_predictor(x, y, size)
        if ctx.mv_fits(x, y, size, mvp):
            yield CuNode(x, y, size, mode=CuMode.SKIP, mv=mvp)
        mv = ctx.search(x, y, size)
        yield CuNode(x, y, size, mode=CuMode.INTER, mv=mv, mvd=mv - mvp)
    for intra_mode in eligible_intra_modes(top_available=y > 0, left_available=x > 0):
        yield CuNode(x, y, size, mode=CuMode.INTRA, intra_mode=intra_mode)


def _code_leaf(ctx: EncodingContext, node: CuNode, min_leaf: int) -> Tuple[RdCost, List[np.ndarray]]:
    """Fully codes one candidate leaf; fills node.levels and returns (cost, recon blocks)."""
    preds = ctx.predict(node)
    if node.mode == CuMode.SKIP:
        blocks = [np.asarray(p, dtype=np.int64) for p in preds]
    else:
        levels_per_plane, blocks = [], []
        for component, pred in enumerate(preds):
            scale = 0 if component == 0 else 1
            px, py, n = node.x >> scale, node.y >> scale, node.size >> scale
            residual = build_residual(ctx.original[component][py:py + n, px:px + n], pred)
            recon_residual = np.zeros_like(residual)
            plane_levels = []
            for tx, ty, tu in tu_layout(node.size, component > 0):
                levels, rres = code_residual(residual[ty:ty + tu, tx:tx + tu], ctx.qparams(tu))
                plane_levels.append(levels)
                recon_residual[ty:ty + tu, tx:tx + tu] = rres
            levels_per_plane.append(plane_levels)
            blocks.append(np.clip(pred + recon_residual, 0, ctx.max_value))
        node.levels = tuple(levels_per_plane)

    counter = BitCounter()
    write_cu(counter, node, min_leaf, ctx.slice_is_intra)
    distortion = sum(
        ctx.distortion(c, node.x >> (c > 0), node.y >> (c > 0), block) for c, block in enumerate(blocks)
    )
    return RdCost(distortion, counter.tell(), ctx.lam), blocks


def encode_cu(ctx: EncodingContext, x: int, y: int, size: int, min_leaf: int) -> Tuple[CuNode, RdCost]:
    """Best leaf versus four recursively coded children; the winner stays in ctx."""
    if size < min_leaf:
        raise ValueError(f"CU size {size} is below the minimum leaf {min_leaf}")
    before = ctx.snapshot(x, y, size) if size > min_leaf else None

    best: Optional[Tuple[CuNode, RdCost, List[np.ndarray]]] = None
    alternatives = []
    for candidate in _leaf_candidates(ctx, x, y, size):
        cost, blocks = _code_leaf(ctx, candidate, min_leaf)
        alternatives.append(cost)
        if best is None or cost < best[1]:
            best = (candidate, cost, blocks)
    leaf, leaf_cost, blocks = best
    ctx.store_leaf(leaf, blocks)
    leaf.cost = leaf_cost

    if before is None:
        leaf.alternatives = tuple(alternatives)
        return leaf, leaf_cost

    leaf_state = ctx.snapshot(x, y, size)
    ctx.restore(before)
    half = size // 2
    children = []
    split_cost = RdCost(0, 1, ctx.lam)
    for cx, cy in z_scan_order(2, 2):
        child, child_cost = encode_cu(ctx, x + cx * half, y + cy * half, half, min_leaf)
        children.append(child)
        split_cost = split_cost + child_cost
    alternatives.append(split_cost)

    if split_cost < leaf_cost:
        node = CuNode(x, y, size, split=True, children=children, cost=split_cost)
        node.alternatives = tuple(alternatives)
        return node, split_cost
    ctx.restore(leaf_state)
    leaf.alternatives = tuple(alternatives)
    return leaf, leaf_cost


def encode_scu_direct(ctx: EncodingContext, x: int, y: int) -> Tuple[List[CuNode], RdCost]:
    sizes = ctx.sizes
    total = RdCost(0, 0 if sizes.quadtree_bypassed else 1, ctx.lam)
    nodes = []
    n = sizes.ctus_per_side
    for cx, cy in z_scan_order(n, n):
        node, cost = encode_cu(ctx, x + cx * sizes.m_ctu, y + cy * sizes.m_ctu, sizes.m_ctu, sizes.m_mcu)
        nodes.append(node)
        total = total + cost
    return nodes, total


def encode_scu_quadtree(ctx: EncodingContext, x: int, y: int) -> Tuple[CuNode, RdCost]:
    sizes = ctx.sizes
    if sizes.quadtree_bypassed:
        raise ValueError("SCU-to-CTU mode is bypassed when both partition depths are equal")
    node, cost = encode_cu(ctx, x, y, sizes.m_scu, sizes.m_ctu)
    return node, cost.with_bits(1)


def select_scu_mode(ctx: EncodingContext, x: int, y: int) -> ScuDecision:
    """Runs both SCU modes on isolated state and keeps the cheaper one in ctx."""
    sizes = ctx.sizes
    if sizes.quadtree_bypassed:
        nodes, cost = encode_scu_direct(ctx, x, y)
        return ScuDecision(x, y, ScuMode.DIRECT_CTU, nodes, cost, direct_cost=cost)

    start = ctx.snapshot(x, y, sizes.m_scu)
    direct_nodes, direct_cost = encode_scu_direct(ctx, x, y)
    after_direct = ctx.snapshot(x, y, sizes.m_scu)
    ctx.restore(start)
    quad_node, quad_cost = encode_scu_quadtree(ctx, x, y)
    logger.debug(
        f"SCU ({x},{y}): direct={direct_cost.cost:.1f} ({direct_cost.rate} bits) "
        f"quadtree={quad_cost.cost:.1f} ({quad_cost.rate} bits)"
    )
    if quad_cost < direct_cost:
        return ScuDecision(x, y, ScuMode.SCU_TO_CTU, [quad_node], quad_cost, direct_cost, quad_cost)
    ctx.restore(after_direct)
    return ScuDecision(x, y, ScuMode.DIRECT_CTU, direct_nodes, direct_cost, direct_cost, quad_cost)
