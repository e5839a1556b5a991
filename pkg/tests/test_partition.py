import numpy as np
import pytest

from sbcodec.bitstream import BitWriter
from sbcodec.config import EncoderConfig
from sbcodec.errors import ConfigError
from sbcodec.frame_io import pad_to_scu_grid
from sbcodec.partition import (
    CuMode,
    EncodingContext,
    RdCost,
    ScuMode,
    derive_partition_sizes,
    ScuDecision,
    encode_cu,
    encode_scu_direct,
    encode_scu_quadtree,
    lambda_of_qp,
    select_scu_mode,
    tu_layout,
    write_scu,
    z_scan_order,
)

from conftest import make_frame


def _context(frame, config, slice_is_intra=True):
    padded = pad_to_scu_grid(frame, config)
    return EncodingContext(
        [p.samples for p in padded.planes],
        (frame.display_width, frame.display_height),
        config,
        slice_is_intra,
        derive_partition_sizes(config),
    )


@pytest.mark.parametrize(
    "scu,depth,direct,expected",
    [(64, 3, 1, (64, 32, 8)), (256, 5, 2, (256, 64, 8)), (128, 4, 1, (128, 64, 8)), (32, 2, 2, (32, 8, 8))],
)
def test_partition_sizes(scu, depth, direct, expected):
    config = EncoderConfig(
        max_scu_width=scu, max_scu_height=scu, max_partition_depth=depth, max_direct_partition_depth=direct
    )
    sizes = derive_partition_sizes(config)
    assert (sizes.m_scu, sizes.m_ctu, sizes.m_mcu) == expected
    assert sizes.quadtree_bypassed == (depth == direct)


def test_partition_sizes_reject_deep_direct_depth():
    with pytest.raises(ConfigError):
        derive_partition_sizes(EncoderConfig(max_partition_depth=2, max_direct_partition_depth=3))


def test_z_scan_order():
    assert z_scan_order(2, 2) == [(0, 0), (1, 0), (0, 1), (1, 1)]
    assert z_scan_order(4, 4)[:8] == [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (3, 0), (2, 1), (3, 1)]


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_z_scan_is_causal(n):
    order = z_scan_order(n, n)
    assert len(order) == n * n
    seen = set()
    for x, y in order:
        if x > 0:
            assert (x - 1, y) in seen
        if y > 0:
            assert (x, y - 1) in seen
        seen.add((x, y))


def test_lambda_model():
    assert lambda_of_qp(12, False) == pytest.approx(0.85)
    assert lambda_of_qp(12, True) == pytest.approx(0.425)
    assert lambda_of_qp(15, False) == pytest.approx(1.7)
    lams = [lambda_of_qp(qp, False) for qp in range(52)]
    assert all(b > a for a, b in zip(lams, lams[1:]))


def test_rd_cost_ties_prefer_fewer_bits():
    cheap = RdCost(10, 2, 1.0)
    same_cost = RdCost(8, 4, 1.0)
    assert cheap.cost == same_cost.cost
    assert cheap < same_cost
    assert not same_cost < cheap
    assert (cheap + same_cost).rate == 6
    assert cheap.with_bits(3).rate == 5


def test_tu_layout():
    assert tu_layout(64, False) == [(0, 0, 32), (32, 0, 32), (0, 32, 32), (32, 32, 32)]
    assert tu_layout(64, True) == [(0, 0, 32)]
    assert tu_layout(16, True) == [(0, 0, 8)]
    assert tu_layout(8, True) == [(0, 0, 4)]


def test_encode_cu_returns_the_cheapest_alternative():
    rng = np.random.default_rng(2)
    frame = make_frame(rng.integers(0, 256, size=(32, 32)))
    config = EncoderConfig(max_scu_width=32, max_scu_height=32, max_partition_depth=2, max_direct_partition_depth=1, qp=27)
    ctx = _context(frame, config)
    node, cost = encode_cu(ctx, 0, 0, 32, 8)
    assert node.alternatives
    assert min(node.alternatives) == cost
    assert all(not alt < cost for alt in node.alternatives)


def _flat_and_noise_frame(scu=32, seed=3):
    rng = np.random.default_rng(seed)
    y = np.full((scu, 2 * scu), 128, dtype=np.int64)
    y[:, scu:] = rng.integers(16, 241, size=(scu, scu))
    chroma = np.full((scu // 2, scu), 128, dtype=np.int64)
    return make_frame(y, u=chroma, v=chroma)


@pytest.mark.parametrize("seed", [3, 5, 8, 13])
def test_flat_scu_prefers_quadtree_and_noise_scu_prefers_direct(seed):
    config = EncoderConfig(max_scu_width=64, max_scu_height=64, max_partition_depth=3, max_direct_partition_depth=1, qp=22)
    ctx = _context(_flat_and_noise_frame(64, seed), config)
    flat = select_scu_mode(ctx, 0, 0)
    noise = select_scu_mode(ctx, 64, 0)
    assert flat.mode == ScuMode.SCU_TO_CTU
    assert noise.mode == ScuMode.DIRECT_CTU
    assert flat.cost == min(flat.direct_cost, flat.quadtree_cost)
    assert noise.cost == min(noise.direct_cost, noise.quadtree_cost)


def test_equal_depths_bypass_the_quadtree_mode():
    config = EncoderConfig(max_scu_width=32, max_scu_height=32, max_partition_depth=1, max_direct_partition_depth=1)
    ctx = _context(_flat_and_noise_frame(), config)
    decision = select_scu_mode(ctx, 0, 0)
    assert decision.mode == ScuMode.DIRECT_CTU
    assert decision.quadtree_cost is None


def test_intra_slice_codes_only_intra_leaves():
    rng = np.random.default_rng(4)
    frame = make_frame(rng.integers(0, 256, size=(32, 32)))
    config = EncoderConfig(max_scu_width=32, max_scu_height=32, max_partition_depth=2, max_direct_partition_depth=1)
    decision = select_scu_mode(_context(frame, config), 0, 0)
    assert all(leaf.mode == CuMode.INTRA for leaf in decision.leaves())


# --- Depth and trial state ---

def _noise_frame(seed, size=64):
    return make_frame(np.random.default_rng(seed).integers(0, 256, size=(size, size)))


def _depth_config(depth):
    return EncoderConfig(max_scu_width=64, max_scu_height=64, max_partition_depth=depth, max_direct_partition_depth=1, qp=27)


@pytest.mark.parametrize("seed", [2, 5])
@pytest.mark.parametrize("depth", [1, 2])
def test_one_more_depth_costs_at_most_its_new_split_flags(seed, depth):
    frame = _noise_frame(seed)
    shallow_ctx = _context(frame, _depth_config(depth))
    shallow_nodes, shallow = encode_scu_direct(shallow_ctx, 0, 0)
    deep_ctx = _context(frame, _depth_config(depth + 1))
    _, deep = encode_scu_direct(deep_ctx, 0, 0)

    # Every minimum-size leaf of the shallow tree gains a split flag; a bypassed
    # quadtree mode gains its SCU mode flag.
    min_leaf = shallow_ctx.sizes.m_mcu
    new_flags = sum(1 for node in shallow_nodes for leaf in node.leaves() if leaf.size == min_leaf)
    if shallow_ctx.sizes.quadtree_bypassed:
        new_flags += 1
    assert deep.cost <= shallow.cost + deep_ctx.lam * new_flags + 1e-6


def _replay(ctx, decision):
    """Codes only the mode `decision` settled on."""
    if decision.mode == ScuMode.DIRECT_CTU:
        nodes, cost = encode_scu_direct(ctx, decision.x, decision.y)
    else:
        node, cost = encode_scu_quadtree(ctx, decision.x, decision.y)
        nodes = [node]
    return ScuDecision(decision.x, decision.y, decision.mode, nodes, cost, direct_cost=cost)


def _syntax(decision, sizes, slice_is_intra=True):
    writer = BitWriter()
    write_scu(writer, decision, sizes, slice_is_intra)
    return writer.tell(), writer.getvalue()


@pytest.mark.parametrize("frame_seed", [0, 1])
def test_losing_trial_leaves_no_trace(frame_seed):
    config = EncoderConfig(max_scu_width=32, max_scu_height=32, max_partition_depth=2, max_direct_partition_depth=1, qp=32)
    rng = np.random.default_rng(frame_seed)
    y = np.full((32, 64), 100, dtype=np.int64)
    y[:, 32:] = rng.integers(0, 256, size=(32, 32))
    frame = make_frame(y)

    ctx = _context(frame, config)
    decisions = [select_scu_mode(ctx, 0, 0), select_scu_mode(ctx, 32, 0)]
    replay_ctx = _context(frame, config)
    for decision in decisions:
        replayed = _replay(replay_ctx, decision)
        assert _syntax(replayed, ctx.sizes) == _syntax(decision, ctx.sizes)
        assert replayed.cost == decision.cost
    for component in range(3):
        np.testing.assert_array_equal(replay_ctx.planes[component], ctx.planes[component])
    np.testing.assert_array_equal(replay_ctx.coded_map, ctx.coded_map)
