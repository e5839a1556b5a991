from typing import Optional


class CodecError(Exception):
    """Base class for every error raised by sbcodec."""


class ConfigError(CodecError, ValueError):
    """An EncoderConfig invariant is violated."""


class FrameIOError(CodecError):
    """Raw YUV input/output or block-window problem."""


class BitstreamError(CodecError):
    """Malformed, truncated or out-of-range stream content."""

    def __init__(
        self,
        message: str,
        bit_position: Optional[int] = None,
        frame_index: Optional[int] = None,
        scu_index: Optional[int] = None,
    ):
        self.bit_position = bit_position
        self.frame_index = frame_index
        self.scu_index = scu_index
        where = []
        if frame_index is not None:
            where.append(f"frame {frame_index}")
        if scu_index is not None:
            where.append(f"SCU {scu_index}")
        if bit_position is not None:
            where.append(f"bit {bit_position}")
        self.reason = message
        super().__init__(f"{message} ({', '.join(where)})" if where else message)

    def located(self, frame_index: Optional[int] = None, scu_index: Optional[int] = None) -> "BitstreamError":
        """Returns a copy of this error annotated with the frame/SCU being decoded."""
        return type(self)(
            self.reason,
            bit_position=self.bit_position,
            frame_index=frame_index if frame_index is not None else self.frame_index,
            scu_index=scu_index if scu_index is not None else self.scu_index,
        )


class UnsupportedFeatureError(BitstreamError):
    """The stream asks for something this decoder does not implement."""


class EvaluationError(CodecError, ValueError):
    """PSNR or BD-rate inputs that cannot be compared."""
