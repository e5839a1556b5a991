"""Raw planar YUV 4:2:0 (I420) reading/writing, SCU-grid padding and block windows."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from sbcodec.errors import FrameIOError

logger = logging.getLogger(__name__)

SAMPLE_DTYPE = np.int32


def _chroma_size(luma: int) -> int:
    return (luma + 1) // 2


@dataclass
class Plane:
    """One sample plane, stored row-major as a (height, width) integer array."""

    samples: np.ndarray
    bit_depth: int

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=SAMPLE_DTYPE)
        if self.samples.ndim != 2:
            raise FrameIOError(f"plane samples must be 2-D, got shape {self.samples.shape}")
        if self.samples.size and (self.samples.min() < 0 or self.samples.max() > self.max_value):
            raise FrameIOError(f"plane samples outside 0..{self.max_value}")

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def copy(self) -> "Plane":
        return Plane(self.samples.copy(), self.bit_depth)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Plane):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.samples, other.samples)


@dataclass
class Frame:
    """Three planes in 4:2:0 layout; display size is the pre-padding size."""

    y: Plane
    u: Plane
    v: Plane
    display_width: int
    display_height: int

    def __post_init__(self):
        if not (self.y.bit_depth == self.u.bit_depth == self.v.bit_depth):
            raise FrameIOError("all planes of a frame must share the bit depth")
        cw, ch = _chroma_size(self.y.width), _chroma_size(self.y.height)
        for name, plane in (("u", self.u), ("v", self.v)):
            if (plane.width, plane.height) != (cw, ch):
                raise FrameIOError(
                    f"chroma plane {name} is {plane.width}x{plane.height}, expected {cw}x{ch} "
                    f"for luma {self.y.width}x{self.y.height}"
                )

    @classmethod
    def from_arrays(cls, y, u, v, bit_depth: int, display_width: int = None, display_height: int = None) -> "Frame":
        y_plane = Plane(np.asarray(y), bit_depth)
        return cls(
            y_plane,
            Plane(np.asarray(u), bit_depth),
            Plane(np.asarray(v), bit_depth),
            display_width if display_width is not None else y_plane.width,
            display_height if display_height is not None else y_plane.height,
        )

    @property
    def planes(self) -> tuple:
        return (self.y, self.u, self.v)

    @property
    def width(self) -> int:
        return self.y.width

    @property
    def height(self) -> int:
        return self.y.height

    @property
    def bit_depth(self) -> int:
        return self.y.bit_depth

    def copy(self) -> "Frame":
        return Frame(self.y.copy(), self.u.copy(), self.v.copy(), self.display_width, self.display_height)

    def cropped(self) -> "Frame":
        """The display window of this frame."""
        dw, dh = self.display_width, self.display_height
        cw, ch = _chroma_size(dw), _chroma_size(dh)
        return Frame(
            Plane(self.y.samples[:dh, :dw].copy(), self.bit_depth),
            Plane(self.u.samples[:ch, :cw].copy(), self.bit_depth),
            Plane(self.v.samples[:ch, :cw].copy(), self.bit_depth),
            dw,
            dh,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.display_width == other.display_width
            and self.display_height == other.display_height
            and all(a == b for a, b in zip(self.planes, other.planes))
        )


# --- Raw file access ---

def frame_byte_size(width: int, height: int, bit_depth: int) -> int:
    bytes_per_sample = 1 if bit_depth <= 8 else 2
    return (width * height + 2 * _chroma_size(width) * _chroma_size(height)) * bytes_per_sample


def _sample_dtype(bit_depth: int) -> np.dtype:
    if bit_depth == 8:
        return np.dtype(np.uint8)
    if bit_depth == 10:
        return np.dtype("<u2")
    raise FrameIOError(f"unsupported bit depth {bit_depth}")


def read_yuv(
    path: Union[str, Path], width: int, height: int, bit_depth: int, frame_count: int
) -> List[Frame]:
    """Reads `frame_count` I420 frames in display order.

    10-bit samples are 2-byte little-endian, LSB-aligned, and range-checked.
    """
    path = Path(path)
    if width <= 0 or height <= 0:
        raise FrameIOError(f"invalid frame size {width}x{height}")
    dtype = _sample_dtype(bit_depth)
    cw, ch = _chroma_size(width), _chroma_size(height)
    frame_bytes = frame_byte_size(width, height, bit_depth)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FrameIOError(f"cannot read {path}: {e}") from e

    frames = []
    max_value = (1 << bit_depth) - 1
    for index in range(frame_count):
        start = index * frame_bytes
        if start + frame_bytes > len(data):
            raise FrameIOError(
                f"{path} is truncated: frame {index} needs bytes {start}..{start + frame_bytes - 1}, "
                f"file has {len(data)}"
            )
        samples = np.frombuffer(data, dtype=dtype, count=frame_bytes // dtype.itemsize, offset=start)
        samples = samples.astype(SAMPLE_DTYPE)
        if samples.size and samples.max() > max_value:
            raise FrameIOError(f"frame {index} of {path} has a sample above {max_value} for {bit_depth}-bit input")
        y = samples[: width * height].reshape(height, width)
        u = samples[width * height: width * height + cw * ch].reshape(ch, cw)
        v = samples[width * height + cw * ch:].reshape(ch, cw)
        frames.append(Frame.from_arrays(y, u, v, bit_depth))
    logger.debug(f"Read {len(frames)} frames of {width}x{height} ({bit_depth}-bit) from {path}")
    return frames


def write_yuv(frames: Sequence[Frame], path: Union[str, Path]) -> None:
    """Writes frames as I420, each cropped to its display window."""
    path = Path(path)
    frames = list(frames)
    if frames:
        first = frames[0]
        for index, frame in enumerate(frames):
            if frame.bit_depth != first.bit_depth:
                raise FrameIOError(f"frame {index} has bit depth {frame.bit_depth}, sequence uses {first.bit_depth}")
            if (frame.display_width, frame.display_height) != (first.display_width, first.display_height):
                raise FrameIOError(f"frame {index} has a different display size than frame 0")
    chunks = []
    for frame in frames:
        dtype = _sample_dtype(frame.bit_depth)
        for plane in frame.cropped().planes:
            chunks.append(plane.samples.astype(dtype).tobytes())
    try:
        path.write_bytes(b"".join(chunks))
    except OSError as e:
        raise FrameIOError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {len(frames)} frames to {path}")


# --- Padding and block windows ---

def _round_up(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


def pad_to_scu_grid(frame: Frame, scu_size: Union[int, "object"]) -> Frame:
    """Edge-replicates the frame so luma dimensions are multiples of the SCU size.

    `scu_size` may be an int or anything with a `scu_size` attribute (EncoderConfig).
    Samples inside the display window are never touched; padding is idempotent.
    """
    m = scu_size if isinstance(scu_size, int) else scu_size.scu_size
    width, height = _round_up(frame.width, m), _round_up(frame.height, m)
    if (width, height) == (frame.width, frame.height):
        return frame.copy()

    def pad(plane: Plane, w: int, h: int) -> Plane:
        extra = ((0, h - plane.height), (0, w - plane.width))
        return Plane(np.pad(plane.samples, extra, mode="edge"), plane.bit_depth)

    return Frame(
        pad(frame.y, width, height),
        pad(frame.u, width // 2, height // 2),
        pad(frame.v, width // 2, height // 2),
        frame.display_width,
        frame.display_height,
    )


def _check_window(plane_or_array, x: int, y: int, w: int, h: int) -> np.ndarray:
    samples = plane_or_array.samples if isinstance(plane_or_array, Plane) else plane_or_array
    height, width = samples.shape
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise FrameIOError(f"window {w}x{h} at ({x},{y}) lies outside the {width}x{height} plane")
    return samples


def get_block(plane, x: int, y: int, w: int, h: int) -> np.ndarray:
    """Copy of the w x h window at (x, y) of a Plane or 2-D array."""
    samples = _check_window(plane, x, y, w, h)
    return samples[y:y + h, x:x + w].copy()


def put_block(plane, x: int, y: int, block: np.ndarray) -> None:
    """Stores `block` at (x, y), the inverse of get_block."""
    block = np.asarray(block)
    h, w = block.shape
    samples = _check_window(plane, x, y, w, h)
    samples[y:y + h, x:x + w] = block
