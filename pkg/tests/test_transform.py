from fractions import Fraction

import numpy as np
import pytest

from sbcodec.transform import (
    F_TABLE,
    G_TABLE,
    INT16_MAX,
    build_core_matrix,
    code_residual,
    derive_quant_params,
    dequantize,
    forward_transform,
    inverse_transform,
    qstep_of,
    quantize,
)


def test_scaling_tables():
    assert F_TABLE == (26214, 23302, 20560, 18396, 16384, 14564)
    assert G_TABLE == (40, 45, 51, 57, 64, 72)


def test_qstep_doubles_every_six():
    assert qstep_of(4) == 1
    for qp in range(46):
        assert qstep_of(qp + 6) == 2 * qstep_of(qp)


def test_four_point_matrix():
    m = build_core_matrix(4).entries
    assert m.tolist() == [[64, 64, 64, 64], [83, 36, -36, -83], [64, -64, -64, 64], [36, -83, 83, -36]]


def test_eight_point_odd_rows():
    m = build_core_matrix(8).entries
    assert m[1].tolist() == [89, 75, 50, 18, -18, -50, -75, -89]


def test_thirty_two_point_first_odd_row():
    m = build_core_matrix(32).entries
    assert m[1, :4].tolist() == [90, 90, 88, 85]


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_core_matrix_is_nearly_orthogonal(n):
    m = build_core_matrix(n).entries
    gram = m @ m.T
    target = 64 * 64 * n
    assert np.all(np.abs(np.diag(gram) - target) <= 0.01 * target)
    off_diagonal = gram - np.diag(np.diag(gram))
    assert np.abs(off_diagonal).max() <= 0.01 * target


def test_unsupported_size():
    with pytest.raises(ValueError):
        build_core_matrix(64)


def test_iqbits_and_rounding_offset():
    intra = derive_quant_params(22, True, 8, 8)
    inter = derive_quant_params(22, False, 8, 8)
    assert intra.iq_bits == 29 - 8 - 3 + 3
    assert intra.round_offset == (1 << intra.iq_bits) // 3
    assert inter.round_offset == (1 << inter.iq_bits) // 6
    assert derive_quant_params(22, True, 8, 10).iq_bits == intra.iq_bits - 2


def test_constant_block_chain():
    qparams = derive_quant_params(4, True, 4, 8)
    m = build_core_matrix(4)
    x = np.full((4, 4), 64)
    y = forward_transform(x, m, 8)
    assert y[0, 0] == 8192 and np.count_nonzero(y) == 1
    levels = quantize(y, qparams)
    assert levels[0, 0] == 256 and np.count_nonzero(levels) == 1
    coefficients = dequantize(levels, qparams)
    assert coefficients[0, 0] == 8192
    assert np.array_equal(inverse_transform(coefficients, m, 8), x)


def _round_trip_error(count: int, bit_depth: int, seed: int) -> int:
    rng = np.random.default_rng(seed)
    peak = (1 << bit_depth) - 1
    worst = 0
    for i in range(count):
        n = (4, 8, 16, 32)[i % 4]
        residual = rng.integers(-peak, peak + 1, size=(n, n))
        _, recon = code_residual(residual, derive_quant_params(4, True, n, bit_depth))
        worst = max(worst, int(np.abs(recon - residual).max()))
    return worst


@pytest.mark.parametrize("bit_depth", [8, 10])
def test_round_trip_at_qp4(bit_depth):
    assert _round_trip_error(400, bit_depth, seed=bit_depth) <= 2


@pytest.mark.slow
@pytest.mark.parametrize("bit_depth", [8, 10])
def test_round_trip_at_qp4_full_corpus(bit_depth):
    assert _round_trip_error(10_000, bit_depth, seed=100 + bit_depth) <= 2


def test_quantization_is_sign_symmetric():
    qparams = derive_quant_params(30, False, 8, 8)
    y = np.arange(-4000, 4000, 125).reshape(8, 8)
    assert np.array_equal(quantize(-y, qparams), -quantize(y, qparams))


def test_zero_levels_reconstruct_zero():
    qparams = derive_quant_params(51, False, 16, 8)
    levels, recon = code_residual(np.ones((16, 16), dtype=np.int64), qparams)
    assert not levels.any()
    assert not recon.any()


def test_qstep_is_exact_fraction():
    assert isinstance(qstep_of(0), Fraction)
    assert qstep_of(0) == Fraction(16384, 26214)


def test_scaling_tables_are_near_reciprocal():
    for f, g in zip(F_TABLE, G_TABLE):
        assert abs(f * g - (1 << 20)) <= 1 << 11


@pytest.mark.parametrize("qp", [0, 4, 17, 30, 51])
@pytest.mark.parametrize("slice_is_intra", [True, False])
@pytest.mark.parametrize("n", [4, 32])
def test_quantized_levels_grow_with_the_coefficient(qp, slice_is_intra, n):
    qparams = derive_quant_params(qp, slice_is_intra, n, 8)
    magnitudes = np.arange(0, INT16_MAX + 1)
    levels = quantize(magnitudes, qparams)
    assert np.all(np.diff(levels) >= 0)
    assert np.array_equal(quantize(-magnitudes, qparams), -levels)


# Per-sample reconstruction error stays within QSTEP_ERROR_FACTOR * qstep.
QSTEP_ERROR_FACTOR = 8


@pytest.fixture(scope="module")
def error_by_qp():
    """(summed squared error, worst sample error) per qp over 200 random 8x8 residuals."""
    rng = np.random.default_rng(0)
    corpus = [rng.integers(-255, 256, size=(8, 8)) for _ in range(200)]
    table = []
    for qp in range(52):
        qparams = derive_quant_params(qp, True, 8, 8)
        sse, worst = 0, 0
        for residual in corpus:
            _, recon = code_residual(residual, qparams)
            error = np.abs(recon - residual)
            sse += int(np.sum(error * error))
            worst = max(worst, int(error.max()))
        table.append((sse, worst))
    return table


def test_coarser_qp_never_lowers_the_corpus_error(error_by_qp):
    sse = [row[0] for row in error_by_qp]
    assert all(b >= a for a, b in zip(sse, sse[1:]))


def test_sample_error_is_bounded_by_the_step_size(error_by_qp):
    for qp, (_, worst) in enumerate(error_by_qp):
        assert worst <= QSTEP_ERROR_FACTOR * qstep_of(qp)
