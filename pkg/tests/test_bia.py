import numpy as np
import pytest

from bia import (CONDITION_LIMIT, NotAZPattern, ReceivedFrame, SingularEffectiveChannel, SymbolFrame,
                 alignment_residual, average_sum_rate, beamformers, block_csir,
                 check_alignment, effective_channel, estimate_dof, propagate, signal_columns,
                 single_stream_beamformers, single_stream_rate, sum_rate, transmit, zf_decode)
from fading import ChannelProcess, coefficients_at, schedules_for
from zpattern import Orientation, ZBlock, decompose_period, feasible


def _constant_csir(rng):
    per_receiver = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
    return np.repeat(per_receiver[:, None, :], 3, axis=1)


# ============================================================================
# PRECODING
# ============================================================================

def test_beamformer_examples():
    right = beamformers(Orientation.RIGHT)
    assert right.v1 == right.u1 == (1, 1, 0)
    assert right.v2 == right.u2 == (0, 1, 1)
    left = beamformers(Orientation.LEFT)
    assert left.v1 == left.u1 == (0, 1, 1)
    assert left.v2 == left.u2 == (1, 1, 0)


def test_no_beamformers_for_non_z():
    with pytest.raises(NotAZPattern):
        beamformers(Orientation.NOT_Z)


def test_single_stream_keeps_only_v1():
    bf = single_stream_beamformers(Orientation.RIGHT)
    assert bf.v1 == (1, 1, 0)
    assert bf.v2 == bf.u1 == bf.u2 == (0, 0, 0)


def test_transmit_right():
    tx = transmit(SymbolFrame(1, 2, 3, 4), beamformers(Orientation.RIGHT))
    assert tx.shape == (3, 2)
    assert np.allclose(tx[:, 0], [1, 3, 2])
    assert np.allclose(tx[:, 1], [3, 7, 4])


def test_transmit_left():
    tx = transmit(SymbolFrame(1, 2, 3, 4), beamformers(Orientation.LEFT))
    assert np.allclose(tx[:, 0], [2, 3, 1])
    assert np.allclose(tx[:, 1], [4, 7, 3])


def test_symbol_frame_rejects_non_finite():
    with pytest.raises(ValueError):
        SymbolFrame(np.nan, 0, 0, 0)


# ============================================================================
# CHANNEL
# ============================================================================

def test_propagate_matches_hand_evaluation(process, example_schedules, example_plan):
    block = example_plan.blocks[0]
    tx = transmit(SymbolFrame(1 + 1j, -2, 0.5j, 3), beamformers(block.orientation))
    frames = propagate(process, example_schedules, block, tx, 0.0)
    for j, frame in enumerate(frames):
        expected = [coefficients_at(process, example_schedules[j], j, n) @ tx[k]
                    for k, n in enumerate(block.slots)]
        assert np.allclose(frame.y, expected)


def test_propagate_zero_signal(process, example_schedules, example_plan):
    frames = propagate(process, example_schedules, example_plan.blocks[2],
                       np.zeros((3, 2)), 0.0)
    assert all(np.all(f.y == 0) for f in frames)


def test_propagate_constant_within_a_block(process, example_schedules):
    # slots 0 and 1 share a block for both users when user 2 is offset by 2
    block = ZBlock((0, 1, 7), Orientation.LEFT, ((1, 1, 2), (0, 0, 2)))
    rx1, rx2 = propagate(process, example_schedules, block, np.ones((3, 2)), 0.0)
    assert rx1.y[0] == rx1.y[1]
    assert rx2.y[0] == rx2.y[1]
    assert rx1.y[2] != rx1.y[1]


def test_propagate_noise_is_reproducible(process, example_schedules, example_plan):
    block = example_plan.blocks[0]
    tx = np.zeros((3, 2))
    a = propagate(process, example_schedules, block, tx, 0.5, noise_seed=3)
    b = propagate(process, example_schedules, block, tx, 0.5, noise_seed=3)
    assert np.array_equal(a[0].y, b[0].y)
    assert np.any(a[0].y != 0)
    with pytest.raises(ValueError):
        propagate(process, example_schedules, block, tx, -1.0)
    with pytest.raises(ValueError):
        propagate(process, example_schedules, block, tx, 0.5)


def test_received_frame_shape():
    with pytest.raises(ValueError):
        ReceivedFrame(np.zeros(2))


# ============================================================================
# ALIGNMENT
# ============================================================================

def test_alignment_on_five_slot_example(example_schedules, example_plan):
    base = ChannelProcess(seed=11)
    for r in range(1000):
        process = base.realization(0, r)
        for block in example_plan.blocks:
            residual = check_alignment(process, example_schedules, block,
                                       beamformers(block.orientation))
            assert residual <= 1e-12


def _relative_error(decoded, sent):
    sent = np.asarray(sent)
    return np.linalg.norm(decoded - sent) / np.linalg.norm(sent)


def _align_and_decode(process, schedules, block, rng):
    """Alignment residual and worst relative decode error of one block draw."""
    bf = beamformers(block.orientation)
    csir = block_csir(process, schedules, block)
    frame = SymbolFrame.random(rng)
    rx1, rx2 = propagate(process, schedules, block, transmit(frame, bf), 0.0)
    s1, _ = zf_decode(rx1, csir[0], bf, 1)
    s2, _ = zf_decode(rx2, csir[1], bf, 2)
    error = max(_relative_error(s1, [frame.s12, frame.s22]),
                _relative_error(s2, [frame.s11, frame.s21]))
    return alignment_residual(csir, bf), error


def test_every_feasible_plan_aligns_and_decodes():
    base = ChannelProcess(seed=5)
    rng = np.random.default_rng(5)
    draws = 0
    for N in range(3, 61):
        for offset in range(N):
            if not feasible(N, offset):
                continue
            schedules = schedules_for(N, offset)
            for k, block in enumerate(decompose_period(N, offset, 1).blocks):
                process = base.realization(N * 64 + offset, k)
                residual, error = _align_and_decode(process, schedules, block, rng)
                assert residual <= 1e-12, (N, offset, block.slots)
                assert error <= 1e-9, (N, offset, block.slots)
                draws += 1
    assert draws >= 1000


def test_mirrored_plan_over_many_draws():
    N, offset = 5, 3
    schedules = schedules_for(N, offset)
    plan = decompose_period(N, offset, 0)
    base = ChannelProcess(seed=17)
    rng = np.random.default_rng(17)
    for r in range(1000):
        process = base.realization(0, r)
        for block in plan.blocks:
            residual, error = _align_and_decode(process, schedules, block, rng)
            assert residual <= 1e-12
            assert error <= 1e-9


def test_mismatched_beamformers_leave_interference(example_schedules, example_plan):
    block = next(b for b in example_plan.blocks if b.orientation is Orientation.LEFT)
    wrong = beamformers(block.orientation.flipped())
    base = ChannelProcess(seed=12)
    misaligned = sum(check_alignment(base.realization(0, r), example_schedules, block, wrong) > 0.01
                     for r in range(1000))
    assert misaligned >= 990


def test_static_channel_aligns_both_ways():
    rng = np.random.default_rng(4)
    csir = _constant_csir(rng)
    assert alignment_residual(csir, beamformers(Orientation.RIGHT)) <= 1e-12
    assert alignment_residual(csir, beamformers(Orientation.LEFT)) <= 1e-12


def test_signal_space_dimensions(example_schedules, example_plan):
    base = ChannelProcess(seed=13)
    for r in range(200):
        process = base.realization(0, r)
        for block in example_plan.blocks:
            csir = block_csir(process, example_schedules, block)
            bf = beamformers(block.orientation)
            rx1 = signal_columns(csir[0], bf)
            s = np.linalg.svd(rx1[:, [0, 2]], compute_uv=False)
            assert s[1] <= 1e-12 * s[0]
            assert np.linalg.matrix_rank(rx1) == 3
            rx2 = signal_columns(csir[1], bf)
            assert np.linalg.matrix_rank(rx2) == 3


# ============================================================================
# DECODING
# ============================================================================

def test_noiseless_recovery(example_schedules, example_plan):
    base = ChannelProcess(seed=21)
    rng = np.random.default_rng(21)
    for r in range(1000):
        process = base.realization(0, r)
        block = example_plan.blocks[r % len(example_plan.blocks)]
        bf = beamformers(block.orientation)
        frame = SymbolFrame.random(rng)
        rx1, rx2 = propagate(process, example_schedules, block, transmit(frame, bf), 0.0)
        csir = block_csir(process, example_schedules, block)
        s1, _ = zf_decode(rx1, csir[0], bf, 1)
        s2, _ = zf_decode(rx2, csir[1], bf, 2)
        assert np.allclose(s1, [frame.s12, frame.s22], atol=1e-9)
        assert np.allclose(s2, [frame.s11, frame.s21], atol=1e-9)


def test_zero_frame_decodes_to_zero(process, example_schedules, example_plan):
    block = example_plan.blocks[0]
    csir = block_csir(process, example_schedules, block)
    symbols, _ = zf_decode(ReceivedFrame(np.zeros(3, dtype=complex)), csir[0],
                           beamformers(block.orientation), 1)
    assert np.allclose(symbols, 0)


def _difference_decode(y, csir_1, orientation):
    """Receiver 1 decoder that cancels interference by subtracting two slots."""
    if orientation is Orientation.RIGHT:
        rhs = np.array([y[1] - y[0], y[2]])
        M = csir_1[[1, 2]]
    else:
        rhs = np.array([y[0], y[1] - y[2]])
        M = csir_1[[0, 1]]
    return np.linalg.solve(M, rhs)


def test_projection_agrees_with_slot_differencing(example_schedules, example_plan):
    base = ChannelProcess(seed=31)
    rng = np.random.default_rng(31)
    for r in range(50):
        process = base.realization(0, r)
        for block in example_plan.blocks:
            bf = beamformers(block.orientation)
            frame = SymbolFrame.random(rng)
            rx1, _ = propagate(process, example_schedules, block, transmit(frame, bf), 0.0)
            csir = block_csir(process, example_schedules, block)
            projected, _ = zf_decode(rx1, csir[0], bf, 1)
            differenced = _difference_decode(rx1.y, csir[0], block.orientation)
            assert np.allclose(projected, differenced, atol=1e-9)


def test_projection_basis_is_orthonormal(process, example_schedules, example_plan):
    for block in example_plan.blocks:
        csir = block_csir(process, example_schedules, block)
        for role in (1, 2):
            eff = effective_channel(csir[role - 1], beamformers(block.orientation), role)
            assert np.allclose(eff.basis @ eff.basis.conj().T, np.eye(2), atol=1e-12)
            assert np.allclose(eff.basis @ eff.interference_direction, 0, atol=1e-12)
            assert eff.G.shape == (2, 2)
            assert eff.condition < CONDITION_LIMIT


def test_static_channel_is_singular():
    csir = _constant_csir(np.random.default_rng(8))
    with pytest.raises(SingularEffectiveChannel):
        effective_channel(csir[0], beamformers(Orientation.RIGHT), 1)


def test_unknown_role(process, example_schedules, example_plan):
    csir = block_csir(process, example_schedules, example_plan.blocks[0])
    with pytest.raises(ValueError):
        effective_channel(csir[0], beamformers(Orientation.LEFT), 3)


# ============================================================================
# RATES
# ============================================================================

def test_rate_vanishes_at_low_snr(process, example_schedules, example_plan):
    assert sum_rate(process, example_schedules, example_plan.blocks[0], 1e-9) < 1e-6


def test_rate_increases_with_snr(process, example_schedules, example_plan):
    block = example_plan.blocks[1]
    rates = [sum_rate(process, example_schedules, block, 10 ** (db / 10))
             for db in range(0, 60, 5)]
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_rate_slope_approaches_four_thirds(example_schedules, example_plan):
    base = ChannelProcess(seed=41)
    slopes = []
    for r in range(20):
        process = base.realization(0, r)
        block = example_plan.blocks[r % len(example_plan.blocks)]
        high = sum_rate(process, example_schedules, block, 1e8)
        low = sum_rate(process, example_schedules, block, 1e6)
        slopes.append((high - low) / np.log2(100))
    assert np.mean(slopes) == pytest.approx(4 / 3, abs=0.05)


def test_rates_reject_non_positive_snr(process, example_schedules, example_plan):
    with pytest.raises(ValueError):
        sum_rate(process, example_schedules, example_plan.blocks[0], 0.0)
    with pytest.raises(ValueError):
        single_stream_rate(process, example_schedules, example_plan.blocks[0], -1.0)


def test_dof_estimate(example_schedules, example_plan):
    estimate = estimate_dof(ChannelProcess(seed=1), example_schedules, example_plan,
                            30.0, 50.0, realizations=200, seed=1)
    assert 1.28 <= estimate.dof_mean <= 1.40
    assert estimate.singular_skips == 0
    assert estimate.dof_stderr > 0


def test_single_stream_dof(example_schedules, example_plan):
    estimate = estimate_dof(ChannelProcess(seed=1), example_schedules, example_plan,
                            30.0, 50.0, realizations=200, seed=1, scheme="single_stream")
    assert 0.30 <= estimate.dof_mean <= 0.37


@pytest.mark.parametrize("low, high, realizations, scheme", [
    (20.0, 50.0, 10, "bia"),
    (40.0, 40.0, 10, "bia"),
    (30.0, 50.0, 0, "bia"),
    (30.0, 50.0, 10, "tdma"),
])
def test_dof_preconditions(process, example_schedules, example_plan, low, high,
                           realizations, scheme):
    with pytest.raises(ValueError):
        estimate_dof(process, example_schedules, example_plan, low, high,
                     realizations=realizations, seed=0, scheme=scheme)


def test_dof_independent_of_workers(process, example_schedules, example_plan):
    serial = estimate_dof(process, example_schedules, example_plan, 30.0, 50.0,
                          realizations=8, seed=3, workers=1)
    parallel = estimate_dof(process, example_schedules, example_plan, 30.0, 50.0,
                            realizations=8, seed=3, workers=2)
    assert serial.dof_mean == parallel.dof_mean
    assert serial.to_row() == parallel.to_row()


def test_average_sum_rate_rows(process, example_schedules, example_plan):
    rows = average_sum_rate(process, example_schedules, example_plan, [0.0, 20.0, 40.0],
                            realizations=10, seed=2)
    assert [row["snr_db"] for row in rows] == [0.0, 20.0, 40.0]
    means = [row["sum_rate_mean"] for row in rows]
    assert means[0] < means[1] < means[2]
    assert all(row["scheme"] == "bia" for row in rows)
    with pytest.raises(ValueError):
        average_sum_rate(process, example_schedules, example_plan, [], realizations=1, seed=0)
