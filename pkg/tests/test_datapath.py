"""Adder tree, accumulator, SFU and transpose unit tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pimsim.datapath import (
    AccumulatorState,
    BatchNormParams,
    CapacityError,
    PoolState,
    SequencingError,
    SfuParams,
    ShapeError,
    TransposeBuffer,
    TreeConfigError,
    accumulate_bitplane,
    bank_execute,
    batchnorm,
    build_adder_tree,
    maxpool_step,
    quantize,
    relu,
    transpose_read,
    transpose_write,
    tree_reduce,
)
from pimsim import oracle
from pimsim.mapper import conv_layer, linear_layer, map_network, NetworkDescription
from pimsim.engine import build_bank, place_operands


# --------------------------------------------------------------------------
# Adder tree
# --------------------------------------------------------------------------

class TestBuildAdderTree:
    def test_sixteen_input_levels(self):
        cfg = build_adder_tree(16, [16])
        assert [len(m) for m in cfg.node_modes] == [8, 4, 2, 1]
        assert cfg.levels == 4
        # one full group: every node adds, tap at the root
        assert all(m.all() for m in cfg.node_modes)
        assert cfg.tap_points == [(4, 0)]

    def test_two_groups_of_eight(self):
        cfg = build_adder_tree(16, [8, 8])
        assert cfg.tap_points == [(3, 0), (3, 1)]
        assert not cfg.node_modes[3][0]          # root forwards

    def test_group_sums_by_direct_summation(self):
        cfg = build_adder_tree(16, [8, 8])
        plane = np.arange(16)
        sums = tree_reduce(cfg, plane)
        assert list(sums) == [sum(range(8)), sum(range(8, 16))]

    def test_non_power_of_two_group_padded(self):
        cfg = build_adder_tree(16, [3, 3])
        g0, g1 = cfg.groups
        assert (g0.padded, g1.padded) == (4, 4)
        assert (g0.start, g1.start) == (0, 4)
        plane = np.zeros(16, dtype=int)
        plane[0:3] = 1
        plane[4:7] = (2, 2, 2)
        assert list(tree_reduce(cfg, plane)) == [3, 6]

    def test_overflowing_layout_rejected(self):
        with pytest.raises(TreeConfigError, match="mapper must pad"):
            build_adder_tree(16, [9, 9])
        with pytest.raises(TreeConfigError):
            build_adder_tree(16, [32])
        with pytest.raises(TreeConfigError):
            build_adder_tree(12, [4])


class TestTreeReduce:
    def test_all_zero_plane(self):
        cfg = build_adder_tree(16, [5, 7])
        assert list(tree_reduce(cfg, np.zeros(16, dtype=int))) == [0, 0]

    def test_popcount_matches_oracle(self):
        cfg = build_adder_tree(8, [8])
        plane = np.array([1, 0, 1, 1, 0, 1, 1, 0])
        assert tree_reduce(cfg, plane)[0] == int(plane.sum())

    def test_two_group_example(self):
        cfg = build_adder_tree(8, [4, 4])
        assert list(tree_reduce(cfg, [1, 1, 1, 1, 0, 0, 1, 1])) == [4, 2]

    def test_shape_error(self):
        cfg = build_adder_tree(8, [8])
        with pytest.raises(ShapeError):
            tree_reduce(cfg, np.zeros(4, dtype=int))

    def test_forward_mode_neutrality(self):
        cfg = build_adder_tree(16, [4, 4])
        plane = np.zeros(16, dtype=int)
        plane[:8] = 1
        base = list(tree_reduce(cfg, plane))
        # flip nodes above the taps between forward and add
        cfg.node_modes[2][:] = True
        cfg.node_modes[3][:] = True
        assert list(tree_reduce(cfg, plane)) == base

    @settings(max_examples=30, deadline=None)
    @given(data=st.data())
    def test_random_groups_equal_popcount(self, data):
        sizes = data.draw(
            st.lists(st.integers(1, 8), min_size=1, max_size=4)
        )
        cfg = build_adder_tree(64, sizes)
        plane = np.zeros(64, dtype=int)
        bits = {}
        for g in cfg.groups:
            vals = data.draw(
                st.lists(st.integers(0, 1), min_size=g.size, max_size=g.size)
            )
            plane[g.start : g.start + g.size] = vals
            bits[g.index] = sum(vals)
        sums = tree_reduce(cfg, plane)
        for g in cfg.groups:
            assert sums[g.index] == bits[g.index]


# --------------------------------------------------------------------------
# Accumulator
# --------------------------------------------------------------------------

class TestAccumulator:
    def test_shift_add_sequence(self):
        acc = AccumulatorState()
        for idx, s in enumerate((5, 3, 1)):
            accumulate_bitplane(acc, s, idx)
        assert acc.value == 5 + 6 + 4
        assert acc.bit_counter == 3

    def test_all_zero_planes(self):
        acc = AccumulatorState()
        for idx in range(6):
            accumulate_bitplane(acc, 0, idx)
        assert acc.value == 0

    def test_mac_bitplane_identity(self):
        # columns hold products {3*2, 1*1} = {6, 1}; planes rebuild 7
        products = [6, 1]
        acc = AccumulatorState()
        for idx in range(4):
            plane_sum = sum((p >> idx) & 1 for p in products)
            accumulate_bitplane(acc, plane_sum, idx)
        assert acc.value == 7

    def test_out_of_order_plane_rejected(self):
        acc = AccumulatorState()
        accumulate_bitplane(acc, 1, 0)
        with pytest.raises(SequencingError):
            accumulate_bitplane(acc, 1, 2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 4096), min_size=1, max_size=16))
    def test_matches_shift_add_oracle(self, sums):
        acc = AccumulatorState()
        for idx, s in enumerate(sums):
            accumulate_bitplane(acc, s, idx)
        assert acc.value == sum(s << i for i, s in enumerate(sums))


# --------------------------------------------------------------------------
# SFU blocks
# --------------------------------------------------------------------------

class TestSfu:
    def test_relu(self):
        assert relu(-7) == 0
        assert relu(7) == 7
        assert relu(0) == 0

    def test_batchnorm_identity(self):
        p = BatchNormParams()
        assert batchnorm(123, p) == 123

    def test_batchnorm_shift(self):
        assert batchnorm(10, BatchNormParams(mu=4)) == 6

    def test_batchnorm_fixed_point_half_scale(self):
        p = BatchNormParams(mu=2, scale=0.5, beta=1)
        assert batchnorm(10, p) == 5           # (10-2)*0.5 + 1

    def test_quantize_clamps_and_rounds(self):
        assert quantize(300, 4) == 15
        assert quantize(7, 4) == 7
        assert quantize(37, 4, shift=3) == 5   # round(37/8) = round(4.625)
        assert quantize(-3, 4) == 0

    def test_quantize_round_half_even(self):
        assert quantize(4, 4, shift=3) == 0    # 0.5 rounds to even 0
        assert quantize(12, 4, shift=3) == 2   # 1.5 rounds to even 2

    def test_maxpool_window(self):
        pool = PoolState(window=4)
        outs = [maxpool_step(pool, x) for x in (1, 9, 3, 4)]
        assert outs == [None, None, None, 9]

    def test_maxpool_window_one_is_identity(self):
        pool = PoolState(window=1)
        assert [maxpool_step(pool, x) for x in (5, 2)] == [5, 2]

    def test_maxpool_two_windows(self):
        pool = PoolState(window=2)
        outs = [maxpool_step(pool, x) for x in (2, 8, 5, 1)]
        assert outs == [None, 8, None, 5]

    def test_passthrough_pooling(self):
        pool = PoolState(window=None)
        stream = [3, 1, 4, 1, 5]
        assert [maxpool_step(pool, x) for x in stream] == stream


# --------------------------------------------------------------------------
# Transpose buffer
# --------------------------------------------------------------------------

class TestTranspose:
    def test_element_mapping(self):
        buf = TransposeBuffer(rows=2, width=2)
        transpose_write(buf, 0b01)
        transpose_write(buf, 0b10)
        # element (i, j) written horizontally reads back at (j, i)
        assert buf.grid[0, 0] == 1 and buf.grid[1, 1] == 1
        first, second = transpose_read(buf), transpose_read(buf)
        assert (first >> 0) & 1 == 1 and (second >> 1) & 1 == 1

    def test_identity_matrix_round_trip(self):
        buf = TransposeBuffer(rows=4, width=4)
        for i in range(4):
            transpose_write(buf, 1 << i)
        assert [transpose_read(buf) for _ in range(4)] == [1, 2, 4, 8]

    def test_double_transpose_is_identity(self):
        rng = np.random.default_rng(3)
        words = [int(w) for w in rng.integers(0, 256, size=8)]
        buf = TransposeBuffer(rows=8, width=8)
        for w in words:
            transpose_write(buf, w)
        once = [transpose_read(buf) for _ in range(8)]
        buf2 = TransposeBuffer(rows=8, width=8)
        for w in once:
            transpose_write(buf2, w)
        assert [transpose_read(buf2) for _ in range(8)] == words

    def test_capacity_errors(self):
        buf = TransposeBuffer(rows=1, width=2)
        transpose_write(buf, 1)
        with pytest.raises(CapacityError):
            transpose_write(buf, 1)
        transpose_read(buf)
        transpose_read(buf)
        with pytest.raises(CapacityError):
            transpose_read(buf)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(0, 255), min_size=8, max_size=8))
    def test_involution_property(self, words):
        buf = TransposeBuffer(rows=8, width=8)
        for w in words:
            transpose_write(buf, w)
        once = [transpose_read(buf) for _ in range(8)]
        buf2 = TransposeBuffer(rows=8, width=8)
        for w in once:
            transpose_write(buf2, w)
        assert [transpose_read(buf2) for _ in range(8)] == words


# --------------------------------------------------------------------------
# Whole-bank execution
# --------------------------------------------------------------------------

def _run_single_layer(layer, x, w, n, sfu, rows=64, cols=64):
    net = NetworkDescription("t", n, [layer])
    plan = map_network(net, column_size=cols)
    place = plan.layers[0]
    subarrays = build_bank(place, rows, cols, n)
    place_operands(subarrays, place, layer, x, w)
    return bank_execute(subarrays, place, layer, sfu)


class TestBankExecute:
    def test_single_mac_dot_product(self):
        # MAC of size 2 at n=2: (3, 2) . (1, 1) = 5 with identity SFUs
        layer = linear_layer(w1=2, w2=1)
        x = np.array([3, 2])
        w = np.array([[1, 1]])
        outputs, acct = _run_single_layer(layer, x, w, 2, SfuParams())
        assert outputs == [5]
        assert acct.multiplies == 1

    def test_all_zero_weights(self):
        layer = linear_layer(w1=3, w2=4)
        x = np.array([1, 2, 3])
        w = np.zeros((4, 3), dtype=np.int64)
        outputs, _ = _run_single_layer(layer, x, w, 3, SfuParams())
        assert outputs == [0, 0, 0, 0]

    def test_linear_3_to_4_matches_mvm(self):
        rng = np.random.default_rng(11)
        layer = linear_layer(w1=3, w2=4)
        x = rng.integers(0, 16, size=3)
        w = rng.integers(0, 16, size=(4, 3))
        outputs, acct = _run_single_layer(layer, x, w, 4, SfuParams())
        assert outputs == list(w @ x)
        assert acct.aap_total == acct.multiplies * 168

    def test_oversized_mac_folds_through_tree(self):
        # MAC wider than the tree: chunks share one accumulator
        rng = np.random.default_rng(5)
        layer = linear_layer(w1=40, w2=1)
        x = rng.integers(0, 4, size=40)
        w = rng.integers(0, 4, size=(1, 40))
        outputs, _ = _run_single_layer(
            layer, x, w, 2, SfuParams(), rows=64, cols=64
        )
        assert outputs == [int(x @ w[0])]

    def test_sfu_chain_applies_relu_before_batchnorm(self):
        # x = 3 with mu = 5: relu first leaves -2 after the shift; the
        # reversed order would clamp at the relu instead
        layer = linear_layer(w1=1, w2=1)
        x = np.array([3])
        w = np.array([[1]])
        sfu = SfuParams(batchnorm=[BatchNormParams(mu=5)])
        outputs, _ = _run_single_layer(layer, x, w, 3, sfu)
        assert outputs == [-2]

    def test_sfu_chain_quantize_after_batchnorm(self):
        layer = linear_layer(w1=1, w2=1)
        x = np.array([3])
        w = np.array([[2]])
        sfu = SfuParams(batchnorm=[BatchNormParams(beta=10)],
                        quantize_width=3)
        outputs, _ = _run_single_layer(layer, x, w, 3, sfu)
        assert outputs == [7]          # 6 + 10 clamps into 3 bits

    def test_sequential_passes_for_stacked_pairs(self):
        layer = linear_layer(w1=2, w2=2, k=2)
        x = np.array([1, 2])
        w = np.array([[3, 1], [2, 2]])
        net = NetworkDescription("t", 3, [layer], parallelism=[2])
        plan = map_network(net, column_size=8)
        place = plan.layers[0]
        assert place.passes == 2
        subarrays = build_bank(place, 64, 8, 3)
        place_operands(subarrays, place, layer, x, w)
        outputs, acct = bank_execute(subarrays, place, layer, SfuParams())
        assert outputs == [5, 6]
        assert acct.multiplies == 2

    def test_full_sfu_chain_matches_oracle(self):
        rng = np.random.default_rng(21)
        layer = conv_layer(H=6, W=6, I=2, O=2, K=3, p=1, s=1, pool=2)
        x = rng.integers(0, 8, size=(2, 6, 6))
        w = rng.integers(0, 8, size=(2, 2, 3, 3))
        bns = [BatchNormParams(mu=30, scale=0.75, beta=1),
               BatchNormParams(mu=10, scale=1.25, beta=0)]
        sfu = SfuParams(batchnorm=bns, quantize_width=3, quantize_shift=2,
                        pool_window=2)
        outputs, _ = _run_single_layer(layer, x, w, 3, sfu, rows=64, cols=128)
        ref = oracle.layer_ref(
            layer, x, w,
            bn=[(b.mu, b.scale_fp, b.beta) for b in bns],
            quant=(3, 2),
        )
        assert outputs == list(ref.reshape(-1))
