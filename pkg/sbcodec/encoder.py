"""Frame and sequence encoding.

SCUs are coded in raster order; SAO and then ALF run once all SCUs of the
frame are reconstructed, and the filtered frame becomes the next reference.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from sbcodec.bitstream import BitWriter, FrameType, SequenceHeader, write_frame_type
from sbcodec.config import EncoderConfig, SaoMode
from sbcodec.errors import ConfigError, FrameIOError
from sbcodec.eval.metrics import frame_psnr
from sbcodec.filters.alf import (
    AlfContext,
    AlfSlice,
    apply_alf_frame,
    decide_alf_slice,
    encode_alf_flags,
    flag_cells,
    write_alf_filter,
)
from sbcodec.filters.sao import (
    SaoBlockGrid,
    SaoContext,
    SaoScuResult,
    SaoSlice,
    apply_sao,
    choose_scu_sao_fixed,
    choose_scu_sao_split,
    decide_sao_slice,
    write_scu_sao,
    write_sao_slice,
)
from sbcodec.frame_io import Frame, pad_to_scu_grid
from sbcodec.partition import (
    EncodingContext,
    ScuDecision,
    ScuMode,
    derive_partition_sizes,
    select_scu_mode,
    write_scu,
)
from sbcodec.prediction import RefStore

logger = logging.getLogger(__name__)

MAX_FRAME_COUNT = (1 << 16) - 1
MAX_DIMENSION = (1 << 16) - 1


@dataclass
class FrameStats:
    index: int
    frame_type: FrameType
    bits: int
    psnr: Tuple[float, float, float]
    sao_bits: int = 0
    alf_bits: int = 0
    mode_flag_bits: int = 0
    direct_ctu_scus: int = 0
    scu_to_ctu_scus: int = 0
    seconds: float = field(default=0.0, compare=False)


@dataclass
class FrameResult:
    recon: Frame  # padded, fully filtered; what the reference store holds
    stats: FrameStats
    scu_decisions: List[ScuDecision]
    scu_bits: List[int]  # CU syntax bits written per SCU, mode flag included
    sao_results: List[SaoScuResult] = field(default_factory=list)
    alf_slice: Optional[AlfSlice] = None
    sao_slice: Optional[SaoSlice] = None


@dataclass
class EncodeResult:
    stream: bytes
    header: SequenceHeader
    frames: List[FrameResult]

    @property
    def recon(self) -> List[Frame]:
        """Reconstructed frames cropped to the display window."""
        return [f.recon.cropped() for f in self.frames]

    @property
    def stats(self) -> List[FrameStats]:
        return [f.stats for f in self.frames]


class Encoder:
    """Writes the sequence header up front, then one frame per `encode_frame` call."""

    def __init__(self, config: EncoderConfig, width: int, height: int, frame_count: int):
        if not 0 < width <= MAX_DIMENSION or not 0 < height <= MAX_DIMENSION:
            raise ConfigError(f"picture size {width}x{height} does not fit the 16-bit header fields")
        if not 0 < frame_count <= MAX_FRAME_COUNT:
            raise ConfigError(f"frame count must be in 1..{MAX_FRAME_COUNT}, got {frame_count}")
        self.config = config
        self.sizes = derive_partition_sizes(config)
        self.header = SequenceHeader(width, height, frame_count, config)
        self.writer = BitWriter()
        self.header.write(self.writer)
        self.refs = RefStore(capacity=1, pad=config.search_range)
        self.frame_index = 0

    def _check_frame(self, frame: Frame) -> None:
        if frame.bit_depth != self.config.bit_depth:
            raise ConfigError(f"frame is {frame.bit_depth}-bit but the encoder is configured for {self.config.bit_depth}-bit")
        if (frame.display_width, frame.display_height) != (self.header.width, self.header.height):
            raise FrameIOError(
                f"frame {self.frame_index} is {frame.display_width}x{frame.display_height}, "
                f"sequence is {self.header.width}x{self.header.height}"
            )
        if self.frame_index >= self.header.frame_count:
            raise FrameIOError(f"sequence header announces {self.header.frame_count} frames")

    def encode_frame(self, frame: Frame, frame_type: Optional[FrameType] = None) -> FrameResult:
        self._check_frame(frame)
        start_time = time.perf_counter()
        config, sizes = self.config, self.sizes
        if frame_type is None:
            frame_type = FrameType.I if config.is_intra_frame(self.frame_index) else FrameType.P
        if frame_type == FrameType.P and self.refs.latest() is None:
            raise ValueError("a P frame needs a reference frame")
        slice_is_intra = frame_type == FrameType.I

        padded = pad_to_scu_grid(frame, config)
        ctx = EncodingContext(
            [p.samples for p in padded.planes],
            (frame.display_width, frame.display_height),
            config,
            slice_is_intra,
            sizes,
            None if slice_is_intra else self.refs.latest_padded(),
        )

        decisions = []
        for y in range(0, padded.height, sizes.m_scu):
            for x in range(0, padded.width, sizes.m_scu):
                decisions.append(select_scu_mode(ctx, x, y))
        planes = ctx.planes

        # --- SAO ---
        grid, sao_results, sao_slice = None, [], None
        if config.sao_mode != SaoMode.OFF:
            grid = SaoBlockGrid(padded.width, padded.height, config.sao_block_size, sizes.m_scu)
            sao_ctx = SaoContext(ctx.original, planes, ctx.display, config.bit_depth, ctx.lam)
            choose = choose_scu_sao_split if config.sao_mode == SaoMode.ADAPTIVE else choose_scu_sao_fixed
            sao_results = [choose(sao_ctx, grid, d.x, d.y) for d in decisions]
            sao_slice = decide_sao_slice(sao_results, ctx.lam, config.sao_mode)
            grid.set_enabled(sao_slice.luma, sao_slice.chroma)
            if sao_slice.enabled:
                planes = [apply_sao(p, grid, c, config.bit_depth) for c, p in enumerate(planes)]

        # --- ALF ---
        scu_cells = [flag_cells(d.nodes, sizes.m_ctu) for d in decisions]
        alf_slice = None
        if config.alf_enabled:
            alf_ctx = AlfContext(ctx.original, planes, ctx.display, config.bit_depth, ctx.lam, config.alf_signaling)
            alf_slice = decide_alf_slice(alf_ctx, scu_cells)
            if alf_slice.enabled:
                planes = apply_alf_frame(planes, alf_slice.alf_filter, scu_cells, alf_slice.decisions, config.bit_depth)

        recon = Frame.from_arrays(
            *planes, bit_depth=config.bit_depth, display_width=frame.display_width, display_height=frame.display_height
        )
        stats, scu_bits = self._write_frame(frame_type, decisions, grid, alf_slice)
        stats.psnr = frame_psnr(frame, recon)
        stats.seconds = time.perf_counter() - start_time
        self.refs.push(recon)
        self.frame_index += 1

        logger.info(
            f"Frame {stats.index} ({frame_type.value}): {stats.bits} bits, "
            f"PSNR Y/U/V {stats.psnr[0]:.2f}/{stats.psnr[1]:.2f}/{stats.psnr[2]:.2f} dB, "
            f"SCUs direct={stats.direct_ctu_scus} quadtree={stats.scu_to_ctu_scus}, "
            f"SAO {'on' if sao_slice is not None and sao_slice.enabled else 'off'}, "
            f"ALF {'on' if alf_slice is not None and alf_slice.enabled else 'off'}, {stats.seconds:.2f}s"
        )
        return FrameResult(recon, stats, decisions, scu_bits, sao_results, alf_slice, sao_slice)

    def _write_frame(
        self,
        frame_type: FrameType,
        decisions: Sequence[ScuDecision],
        grid: Optional[SaoBlockGrid],
        alf_slice: Optional[AlfSlice],
    ) -> Tuple[FrameStats, List[int]]:
        config, w = self.config, self.writer
        slice_is_intra = frame_type == FrameType.I
        start = w.tell()
        stats = FrameStats(self.frame_index, frame_type, 0, (0.0, 0.0, 0.0))
        write_frame_type(w, frame_type)

        if grid is not None:
            mark = w.tell()
            write_sao_slice(w, grid.enabled[0], grid.enabled[1])
            stats.sao_bits += w.tell() - mark

        alf_on = alf_slice is not None and alf_slice.enabled
        if config.alf_enabled:
            mark = w.tell()
            w.write_flag(alf_on)
            if alf_on:
                write_alf_filter(w, alf_slice.alf_filter)
            stats.alf_bits += w.tell() - mark

        scu_bits = []
        for index, decision in enumerate(decisions):
            mark = w.tell()
            stats.mode_flag_bits += write_scu(w, decision, self.sizes, slice_is_intra)
            scu_bits.append(w.tell() - mark)
            if decision.mode == ScuMode.DIRECT_CTU:
                stats.direct_ctu_scus += 1
            else:
                stats.scu_to_ctu_scus += 1
            if grid is not None:
                mark = w.tell()
                write_scu_sao(w, grid, decision.x, decision.y, config.sao_mode)
                stats.sao_bits += w.tell() - mark
            if alf_on:
                mark = w.tell()
                encode_alf_flags(w, alf_slice.decisions[index], config.alf_signaling)
                stats.alf_bits += w.tell() - mark

        w.byte_align()
        stats.bits = w.tell() - start
        return stats, scu_bits

    def finish(self) -> bytes:
        if self.frame_index != self.header.frame_count:
            raise FrameIOError(f"encoded {self.frame_index} frames, header announces {self.header.frame_count}")
        return self.writer.getvalue()


def encode_sequence(frames: Sequence[Frame], config: EncoderConfig) -> EncodeResult:
    """Low-delay P: the first frame (and every intra_period-th) is intra, the rest predict from the previous one."""
    frames = list(frames)
    if not frames:
        raise FrameIOError("nothing to encode: the sequence is empty")
    first = frames[0]
    encoder = Encoder(config, first.display_width, first.display_height, len(frames))
    logger.info(
        f"Encoding {len(frames)} frames of {first.display_width}x{first.display_height} at qp {config.qp} "
        f"(SCU {encoder.sizes.m_scu}, CTU {encoder.sizes.m_ctu}, MCU {encoder.sizes.m_mcu})"
    )
    results = [encoder.encode_frame(frame) for frame in frames]
    stream = encoder.finish()
    logger.info(f"Encoded {len(results)} frames into {len(stream)} bytes")
    return EncodeResult(stream, encoder.header, results)
