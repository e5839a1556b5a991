"""sbcodec: a block-based hybrid video codec with super-block partitioning, SAO and CU-level ALF."""
from sbcodec.config import AlfSignaling, EncoderConfig, SaoMode, load_config
from sbcodec.decoder import decode_stream
from sbcodec.encoder import EncodeResult, Encoder, encode_sequence
from sbcodec.errors import BitstreamError, CodecError, ConfigError, FrameIOError, UnsupportedFeatureError
from sbcodec.frame_io import Frame, Plane, read_yuv, write_yuv

__version__ = "0.1.0"

__all__ = [
    "AlfSignaling",
    "BitstreamError",
    "CodecError",
    "ConfigError",
    "EncodeResult",
    "Encoder",
    "EncoderConfig",
    "Frame",
    "FrameIOError",
    "Plane",
    "SaoMode",
    "UnsupportedFeatureError",
    "decode_stream",
    "encode_sequence",
    "load_config",
    "read_yuv",
    "write_yuv",
]
