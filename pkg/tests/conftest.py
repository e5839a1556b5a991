import numpy as np
import pytest

from sbcodec.config import EncoderConfig
from sbcodec.frame_io import Frame


def make_frame(y: np.ndarray, bit_depth: int = 8, u: np.ndarray = None, v: np.ndarray = None) -> Frame:
    """Frame from a luma array; chroma defaults to subsampled luma and its complement."""
    y = np.asarray(y, dtype=np.int64)
    max_value = (1 << bit_depth) - 1
    if u is None:
        u = y[::2, ::2]
    if v is None:
        v = max_value - y[::2, ::2]
    return Frame.from_arrays(y, u, v, bit_depth)


def flat_noise_clip(width: int = 64, height: int = 64, frames: int = 3, bit_depth: int = 8, seed: int = 7):
    """Left half flat mid-grey, right half uniform noise that changes every frame."""
    rng = np.random.default_rng(seed)
    scale = 1 << (bit_depth - 8)
    clip = []
    for _ in range(frames):
        y = np.full((height, width), 128 * scale, dtype=np.int64)
        y[:, width // 2:] = rng.integers(16, 240, size=(height, width - width // 2)) * scale
        clip.append(make_frame(y, bit_depth))
    return clip


def translating_texture_clip(width: int = 64, height: int = 64, frames: int = 3, bit_depth: int = 8, seed: int = 11):
    """A smooth random texture panning right by 2 and down by 1 pixel per frame."""
    rng = np.random.default_rng(seed)
    margin = 2 * frames + 2
    base = rng.integers(0, 256, size=(height + margin, width + margin)).astype(np.int64)
    base = (base + np.roll(base, 1, axis=0) + np.roll(base, 1, axis=1) + np.roll(base, (1, 1), axis=(0, 1))) // 4
    scale = 1 << (bit_depth - 8)
    return [make_frame(base[k:k + height, 2 * k:2 * k + width] * scale, bit_depth) for k in range(frames)]


def gradient_clip(width: int = 64, height: int = 64, frames: int = 3, bit_depth: int = 8):
    """Diagonal ramp brightening by 4 levels per frame."""
    yy, xx = np.mgrid[0:height, 0:width]
    ramp = (xx * 160 // max(width - 1, 1) + yy * 60 // max(height - 1, 1)) + 16
    scale = 1 << (bit_depth - 8)
    return [make_frame(np.clip(ramp + 4 * k, 0, 255) * scale, bit_depth) for k in range(frames)]


CLIPS = {
    "flat_noise": flat_noise_clip,
    "translating": translating_texture_clip,
    "gradient": gradient_clip,
}


@pytest.fixture
def small_config() -> EncoderConfig:
    return EncoderConfig(
        max_scu_width=32,
        max_scu_height=32,
        max_partition_depth=2,
        max_direct_partition_depth=1,
        qp=32,
        search_range=4,
        sao_block_size=16,
    )


@pytest.fixture(params=sorted(CLIPS))
def clip(request):
    return CLIPS[request.param](width=64, height=48, frames=3)
