import numpy as np
import pytest

from sbcodec.bitstream import BitReader, BitWriter
from sbcodec.config import SaoMode
from sbcodec.errors import BitstreamError
from sbcodec.filters.sao import (
    SAO_MERGE_LEFT,
    SAO_MERGE_UP,
    SAO_OFF,
    SaoBlockGrid,
    SaoBlockMode,
    SaoContext,
    SaoParams,
    SaoScuResult,
    SaoType,
    apply_sao,
    bo_band,
    choose_scu_sao_fixed,
    choose_scu_sao_split,
    classify,
    decide_sao_slice,
    eo_categories,
    eo_category,
    estimate_offsets,
    max_offset,
    offset_samples,
    read_sao_params,
    read_sao_slice,
    read_scu_sao,
    sao_param_bits,
    write_sao_params,
    write_sao_slice,
    write_scu_sao,
)
from sbcodec.partition import RdCost


@pytest.mark.parametrize(
    "current,n0,n1,category",
    [(5, 9, 9, 1), (5, 5, 9, 2), (5, 9, 5, 2), (5, 5, 5, 0), (5, 1, 9, 0), (5, 5, 1, 3), (9, 5, 5, 4)],
)
def test_edge_categories(current, n0, n1, category):
    assert eo_category(current, n0, n1) == category


def test_window_border_samples_are_category_zero():
    window = np.array([[9, 1, 9, 1], [1, 9, 1, 9], [9, 1, 9, 1]])
    horizontal = eo_categories(window, SaoType.EO_0)
    assert not horizontal[:, 0].any() and not horizontal[:, -1].any()
    assert horizontal[1, 1] == 4 and horizontal[1, 2] == 1
    diagonal = eo_categories(window, SaoType.EO_45)
    assert not diagonal[0].any() and not diagonal[-1].any()
    assert not diagonal[:, 0].any() and not diagonal[:, -1].any()


@pytest.mark.parametrize("sample,bit_depth,band", [(0, 8, 0), (8, 8, 1), (255, 8, 31), (32, 10, 1), (1023, 10, 31)])
def test_band_index(sample, bit_depth, band):
    assert bo_band(sample, bit_depth) == band


def test_offset_range():
    assert max_offset(8) == 7
    assert max_offset(10) == 31


def test_band_offsets_apply_to_four_bands_and_clip():
    rec = np.array([[0, 8, 16, 24, 32, 255]])
    params = SaoParams(SaoBlockMode.NEW, SaoType.BO, (-3, 2, 5, 7), band_position=0)
    out = offset_samples(rec, bo_band(rec, 8), params, 8)
    assert out.tolist() == [[0, 10, 21, 31, 32, 255]]


def test_merge_params_must_be_resolved():
    with pytest.raises(ValueError):
        offset_samples(np.zeros((2, 2)), np.zeros((2, 2), dtype=np.int8), SAO_MERGE_UP, 8)


def test_band_offset_estimate():
    rec = np.full((4, 4), 100)
    orig = rec + 3
    estimate = estimate_offsets(orig, rec, bo_band(rec, 8), SaoType.BO, 8)
    assert estimate.offsets[100 >> 3] == 3
    assert np.count_nonzero(estimate.offsets) == 1
    assert estimate.counts.sum() == 16


def test_edge_offset_signs_are_restricted():
    rec = np.array([[10, 5, 10]])
    classes = eo_categories(rec, SaoType.EO_0)
    brighter = estimate_offsets(np.array([[10, 8, 10]]), rec, classes, SaoType.EO_0, 8)
    darker = estimate_offsets(np.array([[10, 2, 10]]), rec, classes, SaoType.EO_0, 8)
    assert brighter.offsets.tolist() == [3, 0, 0, 0]
    assert darker.offsets.tolist() == [0, 0, 0, 0]


def test_estimate_is_clipped():
    rec = np.full((2, 2), 50)
    estimate = estimate_offsets(rec + 40, rec, bo_band(rec, 8), SaoType.BO, 8)
    assert estimate.offsets.max() == 7


@pytest.mark.parametrize(
    "params",
    [
        SAO_OFF,
        SAO_MERGE_LEFT,
        SAO_MERGE_UP,
        SaoParams(SaoBlockMode.NEW, SaoType.EO_135, (3, 1, 0, -7)),
        SaoParams(SaoBlockMode.NEW, SaoType.BO, (-2, 0, 7, -1), band_position=28),
    ],
)
def test_param_syntax(params):
    w = BitWriter()
    write_sao_params(w, params)
    assert w.tell() == sao_param_bits(params)
    assert read_sao_params(BitReader(w.getvalue()), 8, True, True) == params


def test_merge_without_neighbor_is_rejected():
    w = BitWriter()
    write_sao_params(w, SAO_MERGE_LEFT)
    with pytest.raises(BitstreamError, match="merge-left"):
        read_sao_params(BitReader(w.getvalue()), 8, left_available=False, up_available=True)


def test_band_position_out_of_range_is_rejected():
    w = BitWriter()
    w.write_ue(int(SaoBlockMode.NEW))
    w.write_ue(int(SaoType.BO))
    w.write_bits(29, 5)
    with pytest.raises(BitstreamError, match="band position"):
        read_sao_params(BitReader(w.getvalue() + bytes(4)), 8, False, False)


def test_unsplit_scu_merges_its_blocks():
    grid = SaoBlockGrid(64, 64, 16, 32)
    params = SaoParams(SaoBlockMode.NEW, SaoType.EO_0, (1, 1, 0, 0))
    grid.set_unsplit(0, 32, 0, params)
    blocks = grid.scu_blocks(32, 0)
    assert blocks[0] == (0, 2)
    assert grid.signaled[0][0][2] == params
    assert grid.signaled[0][0][3] == SAO_MERGE_LEFT
    assert grid.signaled[0][1][2] == SAO_MERGE_UP
    assert all(grid.effective[0][r][c] == params for r, c in blocks)


# --- RD decisions on a reconstruction ---

def _sao_context(seed=0, width=64, height=32, lam=20.0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    luma = (xx * 3 + yy * 2 + 20) % 256
    chroma = luma[::2, ::2]
    original = [luma, chroma, 255 - chroma]
    # a biased, ringing reconstruction
    reconstruction = [np.clip(p - 2 + rng.integers(-3, 4, size=p.shape), 0, 255) for p in original]
    display = [(width, height), (width // 2, height // 2), (width // 2, height // 2)]
    return SaoContext(original, reconstruction, display, 8, lam)


def test_fixed_blocks_never_cost_more_than_off():
    ctx = _sao_context()
    grid = SaoBlockGrid(64, 32, 16, 32)
    for scu_x in (0, 32):
        result = choose_scu_sao_fixed(ctx, grid, scu_x, 0)
        assert result.split is None
        assert result.cost.cost <= result.off_cost.cost + 1e-9


def test_adaptive_takes_the_cheaper_layout():
    ctx = _sao_context(seed=1)
    grid = SaoBlockGrid(64, 32, 16, 32)
    for scu_x in (0, 32):
        result = choose_scu_sao_split(ctx, grid, scu_x, 0)
        assert result.cost == min(result.unsplit_cost, result.split_cost)
        assert result.cost.cost <= result.off_cost.cost + 1e-9
        assert grid.split_flags[(scu_x, 0)] == result.split


def test_offsets_correct_a_biased_reconstruction():
    ctx = _sao_context(seed=2, lam=1.0)
    grid = SaoBlockGrid(64, 32, 16, 32)
    choose_scu_sao_split(ctx, grid, 0, 0)
    choose_scu_sao_split(ctx, grid, 32, 0)
    filtered = apply_sao(ctx.reconstruction[0], grid, 0, 8)
    before = np.sum((ctx.original[0] - ctx.reconstruction[0]) ** 2)
    after = np.sum((ctx.original[0] - filtered) ** 2)
    assert after < before


@pytest.mark.parametrize("sao_mode", [SaoMode.FIXED, SaoMode.ADAPTIVE])
def test_scu_syntax_reproduces_the_filter(sao_mode):
    ctx = _sao_context(seed=3, lam=4.0)
    grid = SaoBlockGrid(64, 32, 16, 32)
    choose = choose_scu_sao_split if sao_mode == SaoMode.ADAPTIVE else choose_scu_sao_fixed
    w = BitWriter()
    for scu_x in (0, 32):
        choose(ctx, grid, scu_x, 0)
        write_scu_sao(w, grid, scu_x, 0, sao_mode)

    decoded = SaoBlockGrid(64, 32, 16, 32)
    r = BitReader(w.getvalue())
    for scu_x in (0, 32):
        read_scu_sao(r, decoded, scu_x, 0, sao_mode, 8)
    assert r.tell() == w.tell()
    assert decoded.effective == grid.effective
    for component in range(3):
        assert np.array_equal(
            apply_sao(ctx.reconstruction[component], decoded, component, 8),
            apply_sao(ctx.reconstruction[component], grid, component, 8),
        )


def test_sao_off_writes_nothing():
    grid = SaoBlockGrid(32, 32, 16, 32)
    w = BitWriter()
    write_scu_sao(w, grid, 0, 0, SaoMode.OFF)
    assert w.tell() == 0


# --- Slice flags ---

def _scu_result(luma_cost, chroma_cost, luma_off, chroma_off, lam=1.0):
    plane_costs = (RdCost(luma_cost, 0, lam), RdCost(chroma_cost, 0, lam), RdCost(chroma_cost, 0, lam))
    plane_off = (luma_off, chroma_off, chroma_off)
    total = plane_costs[0] + plane_costs[1] + plane_costs[2]
    return SaoScuResult(0, 0, None, total, RdCost(sum(plane_off), 0, lam), plane_costs=plane_costs, plane_off=plane_off)


def test_slice_keeps_only_the_groups_that_pay():
    results = [_scu_result(10, 50, 60, 40), _scu_result(10, 50, 60, 40)]
    decision = decide_sao_slice(results, 1.0, SaoMode.FIXED)
    assert (decision.luma, decision.chroma) == (True, False)
    assert decision.cost.cost == 20 + 160 + 2
    assert decision.off_cost.cost == 120 + 160 + 2


def test_split_flags_are_charged_to_the_slice():
    results = [_scu_result(49, 0, 50, 0), _scu_result(49, 0, 50, 0)]
    assert decide_sao_slice(results, 1.0, SaoMode.FIXED).luma
    adaptive = decide_sao_slice(results, 1.0, SaoMode.ADAPTIVE)
    assert not adaptive.enabled
    assert adaptive.cost == adaptive.off_cost


def test_disabled_planes_are_reset_and_skipped_in_the_syntax():
    ctx = _sao_context(seed=4, lam=1.0)
    exact_chroma = SaoContext(
        ctx.original, [ctx.reconstruction[0], ctx.original[1], ctx.original[2]], ctx.display, 8, ctx.lam
    )
    grid = SaoBlockGrid(64, 32, 16, 32)
    results = [choose_scu_sao_fixed(exact_chroma, grid, scu_x, 0) for scu_x in (0, 32)]
    decision = decide_sao_slice(results, ctx.lam, SaoMode.FIXED)
    assert (decision.luma, decision.chroma) == (True, False)
    grid.set_enabled(decision.luma, decision.chroma)
    assert all(p == SAO_OFF for component in (1, 2) for row in grid.effective[component] for p in row)

    w = BitWriter()
    write_sao_slice(w, decision.luma, decision.chroma)
    for scu_x in (0, 32):
        write_scu_sao(w, grid, scu_x, 0, SaoMode.FIXED)
    luma_only = sum(sao_param_bits(p) for row in grid.signaled[0] for p in row)
    assert w.tell() == 2 + luma_only

    r = BitReader(w.getvalue())
    decoded = SaoBlockGrid(64, 32, 16, 32)
    decoded.set_enabled(*read_sao_slice(r))
    for scu_x in (0, 32):
        read_scu_sao(r, decoded, scu_x, 0, SaoMode.FIXED, 8)
    assert r.tell() == w.tell()
    assert decoded.effective == grid.effective


@pytest.mark.parametrize("sao_mode", [SaoMode.FIXED, SaoMode.ADAPTIVE])
def test_exact_reconstruction_switches_the_slice_off(sao_mode):
    ctx = _sao_context(seed=5)
    exact = SaoContext(ctx.original, ctx.original, ctx.display, 8, ctx.lam)
    grid = SaoBlockGrid(64, 32, 16, 32)
    choose = choose_scu_sao_split if sao_mode == SaoMode.ADAPTIVE else choose_scu_sao_fixed
    decision = decide_sao_slice([choose(exact, grid, scu_x, 0) for scu_x in (0, 32)], ctx.lam, sao_mode)
    assert not decision.enabled
    grid.set_enabled(decision.luma, decision.chroma)
    w = BitWriter()
    for scu_x in (0, 32):
        write_scu_sao(w, grid, scu_x, 0, sao_mode)
    assert w.tell() == 0


# --- Block layouts on constructed degradations ---

def _tiled_context(corner_only=False, lam=4.0):
    """One 32x32 SCU whose 16x16 luma blocks (8x8 chroma) hold the same texture in bands 12..15."""
    rng = np.random.default_rng(8)
    luma_tile = rng.integers(96, 128, size=(16, 16))
    chroma_tile = rng.integers(96, 128, size=(8, 8))
    reconstruction = [np.tile(luma_tile, (2, 2)), np.tile(chroma_tile, (2, 2)), np.tile(chroma_tile, (2, 2))]
    original = []
    for p in reconstruction:
        o = p.copy()
        half = p.shape[0] // 2
        if corner_only:
            o[:half, :half] += 3
        else:
            o += 3
        original.append(o)
    return SaoContext(original, reconstruction, [(32, 32), (16, 16), (16, 16)], 8, lam)


def test_identical_blocks_merge():
    ctx = _tiled_context()
    grid = SaoBlockGrid(32, 32, 16, 32)
    choose_scu_sao_fixed(ctx, grid, 0, 0)
    for component in range(3):
        modes = [[p.mode for p in row] for row in grid.signaled[component]]
        assert modes == [
            [SaoBlockMode.NEW, SaoBlockMode.MERGE_LEFT],
            [SaoBlockMode.MERGE_UP, SaoBlockMode.MERGE_LEFT],
        ]
        assert grid.effective[component][0][0].sao_type == SaoType.BO


def test_uniform_degradation_keeps_the_scu_whole():
    result = choose_scu_sao_split(_tiled_context(), SaoBlockGrid(32, 32, 16, 32), 0, 0)
    assert result.split is False
    assert result.cost == result.unsplit_cost


def test_corner_degradation_splits_the_scu():
    ctx = _tiled_context(corner_only=True)
    grid = SaoBlockGrid(32, 32, 16, 32)
    result = choose_scu_sao_split(ctx, grid, 0, 0)
    assert result.split is True
    assert grid.effective[0][0][0].mode == SaoBlockMode.NEW
    assert all(grid.effective[0][r][c] == SAO_OFF for r, c in ((0, 1), (1, 0), (1, 1)))
    filtered = apply_sao(ctx.reconstruction[0], grid, 0, 8)
    assert np.sum((ctx.original[0] - filtered) ** 2) < np.sum((ctx.original[0] - ctx.reconstruction[0]) ** 2)


def test_filtering_does_not_depend_on_scu_order():
    ctx = _sao_context(seed=6, lam=1.0)
    grid = SaoBlockGrid(64, 32, 16, 32)
    for scu_x in (0, 32):
        choose_scu_sao_split(ctx, grid, scu_x, 0)
    rec = np.asarray(ctx.reconstruction[0], dtype=np.int64)
    out = apply_sao(rec, grid, 0, 8)

    # right SCU filtered first: the left one must come out the same
    right_first = rec.copy()
    right_first[:, 32:] = out[:, 32:]
    assert np.array_equal(apply_sao(right_first, grid, 0, 8)[:, :32], out[:, :32])

    # blocks in reverse raster order, each classified on the unfiltered SCU window
    reverse = rec.copy()
    for row, col in reversed([(r, c) for r in range(grid.rows) for c in range(grid.cols)]):
        params = grid.effective[0][row][col]
        if params.mode == SaoBlockMode.OFF:
            continue
        sx = (col * 16 // 32) * 32
        window = rec[:, sx:sx + 32]
        classes = classify(window, params.sao_type, 8)
        ys, xs = slice(row * 16, row * 16 + 16), slice(col * 16 - sx, col * 16 - sx + 16)
        reverse[ys, col * 16:col * 16 + 16] = offset_samples(window[ys, xs], classes[ys, xs], params, 8)
    assert np.array_equal(reverse, out)
