import numpy as np
import pytest

from sbcodec.bitstream import (
    MAGIC,
    BitCounter,
    BitReader,
    BitWriter,
    FrameType,
    SequenceHeader,
    read_coefficients,
    read_frame_type,
    write_coefficients,
    write_frame_type,
    zigzag_order,
)
from sbcodec.config import EncoderConfig
from sbcodec.errors import BitstreamError, UnsupportedFeatureError


def bit_string(writer: BitWriter) -> str:
    bits = "".join(f"{byte:08b}" for byte in writer.getvalue())
    return bits[: writer.tell()]


@pytest.mark.parametrize("value,bits", [(0, "1"), (1, "010"), (2, "011"), (3, "00100"), (7, "0001000")])
def test_ue_codes(value, bits):
    w = BitWriter()
    w.write_ue(value)
    assert bit_string(w) == bits


@pytest.mark.parametrize("value,bits", [(0, "1"), (1, "010"), (-1, "011"), (2, "00100"), (-2, "00101")])
def test_se_codes(value, bits):
    w = BitWriter()
    w.write_se(value)
    assert bit_string(w) == bits


def test_ue_round_trip_up_to_2_16():
    values = range(0, (1 << 16) + 1)
    w = BitWriter()
    for v in values:
        w.write_ue(v)
    r = BitReader(w.getvalue())
    assert [r.read_ue() for _ in values] == list(values)


def test_se_round_trip():
    values = range(-1000, 1001)
    w = BitWriter()
    for v in values:
        w.write_se(v)
    r = BitReader(w.getvalue())
    assert [r.read_se() for _ in values] == list(values)


def test_counter_matches_writer():
    w, c = BitWriter(), BitCounter()
    for sink in (w, c):
        sink.write_ue(300)
        sink.write_se(-17)
        sink.write_flag(True)
        sink.write_bits(5, 5)
    assert c.tell() == w.tell()


def test_writer_is_msb_first():
    w = BitWriter()
    w.write_bits(0b101, 3)
    w.byte_align()
    assert w.getvalue() == bytes([0b10100000])


def test_value_must_fit():
    with pytest.raises(ValueError):
        BitWriter().write_bits(8, 3)
    with pytest.raises(ValueError):
        BitWriter().write_ue(-1)


def test_malformed_prefix():
    r = BitReader(bytes(8))
    with pytest.raises(BitstreamError, match="exp-Golomb"):
        r.read_ue()


def test_reading_past_the_end():
    r = BitReader(b"\x01")
    r.read_bits(7)
    with pytest.raises(BitstreamError, match="truncated"):
        r.read_bits(2)


def test_zigzag_starts_like_the_classic_scan():
    assert zigzag_order(4)[:6] == (0, 1, 4, 8, 5, 2)
    assert sorted(zigzag_order(8)) == list(range(64))


def test_all_zero_block_is_one_bit():
    w = BitWriter()
    write_coefficients(w, np.zeros((8, 8), dtype=np.int64))
    assert bit_string(w) == "0"


def test_dc_only_block_layout():
    levels = np.zeros((4, 4), dtype=np.int64)
    levels[0, 0] = 5
    w = BitWriter()
    write_coefficients(w, levels)
    # cbf, run 0, level se(5) = ue(9), end-of-block ue(16)
    assert bit_string(w) == "1" + "1" + "0001010" + "000010001"


def test_random_sparse_blocks_round_trip():
    rng = np.random.default_rng(3)
    w = BitWriter()
    blocks = []
    for i in range(200):
        n = (4, 8, 16, 32)[i % 4]
        levels = rng.integers(-40, 41, size=(n, n)) * (rng.random((n, n)) < 0.1)
        blocks.append(levels)
        write_coefficients(w, levels)
    r = BitReader(w.getvalue())
    for levels in blocks:
        assert np.array_equal(read_coefficients(r, levels.shape[0]), levels)
    assert r.tell() == w.tell()


def test_run_overrun_is_rejected():
    w = BitWriter()
    w.write_flag(True)
    w.write_ue(16)  # remaining is 16: neither a valid run nor the end code 17
    w.write_se(1)
    r = BitReader(w.getvalue())
    with pytest.raises(BitstreamError, match="overruns"):
        read_coefficients(r, 4)


def test_frame_type_flag():
    w = BitWriter()
    write_frame_type(w, FrameType.P)
    write_frame_type(w, FrameType.I)
    assert bit_string(w) == "10"
    r = BitReader(w.getvalue())
    assert [read_frame_type(r), read_frame_type(r)] == [FrameType.P, FrameType.I]


def _header_bytes(config: EncoderConfig, width: int = 176, height: int = 144, frames: int = 10) -> bytes:
    w = BitWriter()
    SequenceHeader(width, height, frames, config).write(w)
    return w.getvalue()


def test_sequence_header_round_trip():
    config = EncoderConfig(qp=27, sao_mode="fixed", alf_signaling="cu", bit_depth=10, intra_period=8)
    data = _header_bytes(config)
    assert data[:4] == MAGIC
    assert len(data) == 24
    header = SequenceHeader.read(BitReader(data))
    assert (header.width, header.height, header.frame_count) == (176, 144, 10)
    assert header.config == config


def test_bad_magic():
    data = b"XBC1" + _header_bytes(EncoderConfig())[4:]
    with pytest.raises(BitstreamError, match="magic"):
        SequenceHeader.read(BitReader(data))


def test_unsupported_bit_depth():
    data = bytearray(_header_bytes(EncoderConfig()))
    data[8] = 12
    with pytest.raises(UnsupportedFeatureError, match="bit depth 12"):
        SequenceHeader.read(BitReader(bytes(data)))


def test_header_with_invalid_config():
    data = bytearray(_header_bytes(EncoderConfig()))
    data[13] = 9  # max_direct_partition_depth above max_partition_depth
    with pytest.raises(BitstreamError, match="invalid configuration"):
        SequenceHeader.read(BitReader(bytes(data)))
