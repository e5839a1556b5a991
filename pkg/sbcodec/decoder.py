"""Stream decoder. Mirrors the encoder's reconstruction path bit-exactly."""
import logging
from typing import List, Optional, Tuple

from sbcodec.bitstream import BitReader, FrameType, SequenceHeader, read_coefficients, read_frame_type
from sbcodec.config import SaoMode
from sbcodec.errors import BitstreamError
from sbcodec.filters.alf import AlfFilter, apply_alf_frame, flag_cells, parse_alf_flags, read_alf_filter
from sbcodec.filters.sao import SaoBlockGrid, apply_sao, read_sao_slice, read_scu_sao
from sbcodec.frame_io import Frame
from sbcodec.partition import (
    CodingContext,
    CuMode,
    CuNode,
    PartitionSizes,
    ScuMode,
    derive_partition_sizes,
    tu_layout,
    z_scan_order,
)
from sbcodec.prediction import IntraMode, MotionVector, RefStore, eligible_intra_modes

logger = logging.getLogger(__name__)


def _round_up(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


def read_header(data: bytes) -> SequenceHeader:
    return SequenceHeader.read(BitReader(data))


def _parse_leaf(reader: BitReader, ctx: CodingContext, node: CuNode) -> None:
    x, y, size = node.x, node.y, node.size
    if ctx.slice_is_intra:
        node.mode = CuMode.INTRA
    elif reader.read_flag():
        node.mode = CuMode.SKIP
    else:
        node.mode = CuMode.INTER if reader.read_flag() else CuMode.INTRA

    pos = reader.tell()
    if node.mode == CuMode.INTRA:
        code = reader.read_ue()
        eligible = eligible_intra_modes(top_available=y > 0, left_available=x > 0)
        if code not in [int(m) for m in eligible]:
            raise BitstreamError(f"intra mode {code} is not available for the CU at ({x},{y})", bit_position=pos)
        node.intra_mode = IntraMode(code)
    else:
        mvp = ctx.mv_predictor(x, y, size)
        if node.mode == CuMode.INTER:
            node.mvd = MotionVector(reader.read_se(), reader.read_se())
            node.mv = mvp + node.mvd
        else:
            node.mv = mvp
        if not ctx.mv_fits(x, y, size, node.mv):
            raise BitstreamError(f"motion vector {tuple(node.mv)} leaves the reference at ({x},{y})", bit_position=pos)

    if node.mode != CuMode.SKIP:
        node.levels = tuple(
            [read_coefficients(reader, tu) for _, _, tu in tu_layout(size, component > 0)] for component in range(3)
        )
    blocks = ctx.reconstruct_from_levels(node, ctx.predict(node))
    ctx.store_leaf(node, blocks)


def _parse_cu(reader: BitReader, ctx: CodingContext, x: int, y: int, size: int, min_leaf: int) -> CuNode:
    node = CuNode(x, y, size)
    node.split = size > min_leaf and reader.read_flag()
    if node.split:
        half = size // 2
        node.children = [
            _parse_cu(reader, ctx, x + cx * half, y + cy * half, half, min_leaf) for cx, cy in z_scan_order(2, 2)
        ]
    else:
        _parse_leaf(reader, ctx, node)
    return node


def _parse_scu(reader: BitReader, ctx: CodingContext, sizes: PartitionSizes, x: int, y: int) -> Tuple[ScuMode, List[CuNode]]:
    if not sizes.quadtree_bypassed and reader.read_flag():
        return ScuMode.SCU_TO_CTU, [_parse_cu(reader, ctx, x, y, sizes.m_scu, sizes.m_ctu)]
    n = sizes.ctus_per_side
    nodes = [
        _parse_cu(reader, ctx, x + cx * sizes.m_ctu, y + cy * sizes.m_ctu, sizes.m_ctu, sizes.m_mcu)
        for cx, cy in z_scan_order(n, n)
    ]
    return ScuMode.DIRECT_CTU, nodes


class Decoder:
    """Parses the sequence header on construction, then one frame per `decode_frame` call."""

    def __init__(self, data: bytes):
        self.reader = BitReader(data)
        self.header = SequenceHeader.read(self.reader)
        self.config = self.header.config
        self.sizes = derive_partition_sizes(self.config)
        self.width = _round_up(self.header.width, self.sizes.m_scu)
        self.height = _round_up(self.header.height, self.sizes.m_scu)
        self.refs = RefStore(capacity=1, pad=self.config.search_range)
        self.frame_index = 0

    def decode_frame(self) -> Frame:
        """Next frame at padded size, fully filtered, as the encoder's reference store holds it."""
        config, sizes, reader = self.config, self.sizes, self.reader
        index = self.frame_index
        try:
            frame_type = read_frame_type(reader)
            if frame_type == FrameType.P and self.refs.latest() is None:
                raise BitstreamError("P frame without a reference frame", bit_position=reader.tell() - 1)
            grid = None
            if config.sao_mode != SaoMode.OFF:
                grid = SaoBlockGrid(self.width, self.height, config.sao_block_size, sizes.m_scu)
                grid.set_enabled(*read_sao_slice(reader))
            alf_filter: Optional[AlfFilter] = None
            if config.alf_enabled and reader.read_flag():
                alf_filter = read_alf_filter(reader)
        except BitstreamError as e:
            raise e.located(frame_index=index) from e

        slice_is_intra = frame_type == FrameType.I
        ctx = CodingContext(
            self.width,
            self.height,
            config.bit_depth,
            config.qp,
            slice_is_intra,
            sizes,
            None if slice_is_intra else self.refs.latest_padded(),
        )
        scu_cells, decisions = [], []
        histogram = {ScuMode.DIRECT_CTU: 0, ScuMode.SCU_TO_CTU: 0}
        scu_index = 0
        for y in range(0, self.height, sizes.m_scu):
            for x in range(0, self.width, sizes.m_scu):
                try:
                    mode, nodes = _parse_scu(reader, ctx, sizes, x, y)
                    histogram[mode] += 1
                    if grid is not None:
                        read_scu_sao(reader, grid, x, y, config.sao_mode, config.bit_depth)
                    cells = flag_cells(nodes, sizes.m_ctu)
                    scu_cells.append(cells)
                    if alf_filter is not None:
                        decisions.append(parse_alf_flags(reader, len(cells), config.alf_signaling))
                except BitstreamError as e:
                    raise e.located(frame_index=index, scu_index=scu_index) from e
                scu_index += 1
        reader.byte_align()

        planes = ctx.planes
        if grid is not None and grid.any_enabled:
            planes = [apply_sao(p, grid, c, config.bit_depth) for c, p in enumerate(planes)]
        if alf_filter is not None:
            planes = apply_alf_frame(planes, alf_filter, scu_cells, decisions, config.bit_depth)
        frame = Frame.from_arrays(
            *planes,
            bit_depth=config.bit_depth,
            display_width=self.header.width,
            display_height=self.header.height,
        )
        self.refs.push(frame)
        self.frame_index += 1
        logger.debug(
            f"Decoded frame {index} ({frame_type.value}): SCUs direct={histogram[ScuMode.DIRECT_CTU]} "
            f"quadtree={histogram[ScuMode.SCU_TO_CTU]}, ALF {'on' if alf_filter is not None else 'off'}"
        )
        return frame

    def decode_all(self, crop: bool = True) -> List[Frame]:
        frames = []
        while self.frame_index < self.header.frame_count:
            frame = self.decode_frame()
            frames.append(frame.cropped() if crop else frame)
        if self.reader.bits_remaining:
            raise BitstreamError(
                f"{self.reader.bits_remaining} bits of trailing data after the last frame",
                bit_position=self.reader.tell(),
            )
        return frames


def decode_stream(data: bytes, crop: bool = True) -> List[Frame]:
    """All frames of a stream; cropped to the display window unless `crop` is False."""
    decoder = Decoder(data)
    frames = decoder.decode_all(crop)
    logger.info(f"Decoded {len(frames)} frames of {decoder.header.width}x{decoder.header.height}")
    return frames
