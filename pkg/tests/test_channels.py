import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import chanprobe as cp
from chanprobe.channels import Alphabet, parse_channel, format_channel
from chanprobe.errors import (
    ChannelParse,
    EmptySequence,
    LengthMismatch,
    NegativeWeight,
    SumNotOne,
    SymbolOutOfRange,
)


class TestPmf:
    def test_uniform_binary(self):
        pmf = cp.validate_pmf([0.5, 0.5])
        assert pmf.size == 2
        assert pmf[0] == 0.5

    def test_degenerate_singleton(self):
        assert cp.validate_pmf([1.0]).size == 1

    def test_sum_not_one_reports_deviation(self):
        with pytest.raises(SumNotOne) as err:
            cp.validate_pmf([0.6, 0.5])
        assert err.value.deviation == pytest.approx(0.1, abs=1e-12)

    def test_negative_weight(self):
        with pytest.raises(NegativeWeight):
            cp.validate_pmf([1.2, -0.2])

    def test_weights_stored_as_given(self):
        raw = [0.3, 0.7]
        pmf = cp.validate_pmf(raw)
        assert pmf.weights.tolist() == raw

    def test_tolerance_edge(self):
        cp.validate_pmf([0.5, 0.5 + 5e-13])  # inside 1e-12
        with pytest.raises(SumNotOne):
            cp.validate_pmf([0.5, 0.5 + 5e-12])

    def test_immutable(self):
        pmf = cp.validate_pmf([0.5, 0.5])
        with pytest.raises(ValueError):
            pmf.weights[0] = 1.0


class TestAlphabet:
    def test_membership(self):
        alpha = Alphabet(3)
        assert 2 in alpha and 3 not in alpha
        assert list(alpha) == [0, 1, 2]

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            Alphabet(0)


class TestChannels:
    def test_bsc_rows(self):
        dmc = cp.Dmc.bsc(0.3)
        assert dmc.matrix.tolist() == [[0.7, 0.3], [0.3, 0.7]]
        assert dmc.num_inputs == dmc.num_outputs == 2

    def test_row_validation_sweeps_all_rows(self):
        with pytest.raises(SumNotOne):
            cp.Dmc([[0.5, 0.5], [0.6, 0.6]])
        with pytest.raises(NegativeWeight):
            cp.Sdmc(np.array([[[1.0, 0.0], [-0.1, 1.1]]]))

    def test_row_out_of_range(self):
        with pytest.raises(SymbolOutOfRange):
            cp.Dmc.bsc(0.3).row(2)

    def test_sdmc_marginal(self):
        sdmc = cp.Sdmc(np.array([
            [[0.9, 0.1], [0.7, 0.3]],
            [[0.1, 0.9], [0.3, 0.7]],
        ]))
        marg = sdmc.marginal(cp.uniform_pmf(2))
        assert marg.matrix[0].tolist() == pytest.approx([0.8, 0.2], abs=1e-15)


class TestSampling:
    def test_point_mass_row_always_returns_it(self):
        dmc = cp.Dmc([[0.0, 1.0, 0.0]])
        rng = cp.RngStream(7)
        assert all(cp.dmc_sample(dmc, 0, rng) == 1 for _ in range(50))

    def test_bsc_frequency_within_three_sigma(self):
        # fixed seed; 3 sigma of Bin(1e6, 0.3) is ~0.0014 < 0.002
        dmc = cp.Dmc.bsc(0.3)
        draws = cp.dmc_sample_many(dmc, 0, 1_000_000, cp.RngStream(123, 5))
        freq = float(np.mean(draws == 1))
        assert abs(freq - 0.3) < 0.002

    def test_every_symbol_frequency_within_four_sigma(self):
        # seed-pinned; the 4-sigma band leaves ~1e-4 reseeding flake odds
        row = [0.2, 0.5, 0.3]
        dmc = cp.Dmc([row])
        draws = cp.dmc_sample_many(dmc, 0, 1_000_000, cp.RngStream(2718, 0))
        for symbol, p in enumerate(row):
            freq = float(np.mean(draws == symbol))
            band = 4.0 * (p * (1.0 - p) / 1e6) ** 0.5
            assert abs(freq - p) < band

    def test_reproducible_stream(self):
        dmc = cp.Dmc.bsc(0.3)
        a = [cp.dmc_sample(dmc, 0, cp.RngStream(9, 3)) for _ in range(1)]
        first = cp.dmc_sample_many(dmc, 0, 64, cp.RngStream(9, 3))
        second = cp.dmc_sample_many(dmc, 0, 64, cp.RngStream(9, 3))
        assert first.tolist() == second.tolist()
        assert a[0] == first[0]

    def test_many_matches_repeated_single_draws(self):
        dmc = cp.Dmc([[0.2, 0.5, 0.3]])
        loop_rng = cp.RngStream(11, 1)
        loop = [cp.dmc_sample(dmc, 0, loop_rng) for _ in range(200)]
        vec = cp.dmc_sample_many(dmc, 0, 200, cp.RngStream(11, 1))
        assert loop == vec.tolist()

    def test_distinct_streams_differ(self):
        dmc = cp.Dmc.bsc(0.5)
        a = cp.dmc_sample_many(dmc, 0, 128, cp.RngStream(1, 0))
        b = cp.dmc_sample_many(dmc, 0, 128, cp.RngStream(1, 1))
        assert a.tolist() != b.tolist()

    def test_sdmc_point_mass_and_reproducibility(self):
        sdmc = cp.Sdmc(np.array([[[0.0, 1.0], [1.0, 0.0]]]))
        rng = cp.RngStream(3)
        assert cp.sdmc_sample(sdmc, 0, 0, rng) == 1
        assert cp.sdmc_sample(sdmc, 0, 1, rng) == 0
        once = cp.sdmc_sample_many(sdmc, 0, 0, 32, cp.RngStream(5, 2))
        again = cp.sdmc_sample_many(sdmc, 0, 0, 32, cp.RngStream(5, 2))
        assert once.tolist() == again.tolist()

    def test_state_independent_sdmc_matches_dmc_statistics(self):
        rows = np.array([[0.7, 0.3], [0.3, 0.7]])
        sdmc = cp.Sdmc(np.stack([rows, rows], axis=1))
        draws = cp.sdmc_sample_many(sdmc, 0, 1, 1_000_000, cp.RngStream(77, 0))
        freq = float(np.mean(draws == 1))
        sigma = (0.3 * 0.7 / 1e6) ** 0.5
        assert abs(freq - 0.3) < 3 * sigma + 1e-4

    def test_out_of_range_input(self):
        with pytest.raises(SymbolOutOfRange):
            cp.dmc_sample(cp.Dmc.bsc(0.1), 5, cp.RngStream(0))


class TestJointType:
    def test_one_of_each_cell(self):
        t = cp.joint_type([0, 0, 1, 1], [0, 1, 0, 1])
        assert t.counts.tolist() == [[1, 1], [1, 1]]
        assert t.normalized().tolist() == [[0.25, 0.25], [0.25, 0.25]]

    def test_constant_sequences(self):
        t = cp.joint_type([0, 0, 0], [1, 1, 1])
        assert t.counts[0, 1] == 3 and t.counts.sum() == 3

    def test_marginal_matches_single_sequence_type(self):
        xs, ys = [0, 1, 1, 2, 0], [1, 0, 1, 1, 0]
        t = cp.joint_type(xs, ys)
        assert np.array_equal(t.marginal(axis=1).counts, cp.sequence_type(xs).counts)

    @given(
        st.lists(st.integers(0, 2), min_size=1, max_size=40),
        st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_marginalization_commutes(self, xs, data):
        ys = data.draw(st.lists(st.integers(0, 3), min_size=len(xs), max_size=len(xs)))
        t = cp.joint_type(xs, ys, x_size=3, y_size=4)
        assert int(t.counts.sum()) == len(xs)
        assert np.array_equal(
            t.marginal(axis=1).counts, cp.sequence_type(xs, size=3).counts
        )
        assert np.array_equal(
            t.marginal(axis=0).counts, cp.sequence_type(ys, size=4).counts
        )

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            cp.joint_type([0, 1], [0])
        with pytest.raises(EmptySequence):
            cp.joint_type([], [])
        with pytest.raises(SymbolOutOfRange):
            cp.joint_type([0, 5], [0, 1], x_size=2)

    def test_triple_type(self):
        t = cp.triple_type([0, 1], [1, 1], [0, 1], x_size=2, s_size=2, y_size=2)
        assert t.counts[0, 1, 0] == 1 and t.counts[1, 1, 1] == 1


class TestConditionalDeviation:
    def test_direct_substitution(self):
        dmc = cp.Dmc([[0.5, 0.5]])
        t = cp.joint_type([0, 0], [1, 1], x_size=1, y_size=2)
        m = t.marginal(axis=1)
        assert cp.conditional_deviation(t, m, 0, 1, dmc) == pytest.approx(0.5, abs=0)

    def test_exact_match_gives_zero(self):
        dmc = cp.Dmc([[0.5, 0.5], [0.5, 0.5]])
        t = cp.joint_type([0, 0, 1, 1], [0, 1, 0, 1])
        m = t.marginal(axis=1)
        assert cp.conditional_deviation(t, m, 0, 0, dmc) == 0.0

    def test_hand_computed_value(self):
        dmc = cp.Dmc([[0.7, 0.3], [0.5, 0.5]])
        t = cp.joint_type([0, 1], [0, 0])
        m = t.marginal(axis=1)
        assert cp.conditional_deviation(t, m, 0, 0, dmc) == pytest.approx(0.15, abs=1e-15)

    def test_mismatched_marginal_rejected(self):
        dmc = cp.Dmc.bsc(0.3)
        t = cp.joint_type([0, 0], [0, 1])
        wrong = cp.sequence_type([0, 1])
        with pytest.raises(ValueError):
            cp.conditional_deviation(t, wrong, 0, 0, dmc)


class TestChannelFiles:
    def test_round_trip_dmc(self, tmp_path):
        dmc = cp.Dmc([[0.25, 0.75], [0.5, 0.5]])
        path = tmp_path / "c.txt"
        cp.channels.save_channel(dmc, path)
        back = cp.load_channel(path)
        assert isinstance(back, cp.Dmc)
        assert np.array_equal(back.matrix, dmc.matrix)

    def test_round_trip_sdmc(self, tmp_path):
        sdmc = cp.Sdmc(np.array([
            [[0.9, 0.1], [0.7, 0.3]],
            [[0.1, 0.9], [0.3, 0.7]],
        ]))
        path = tmp_path / "c.txt"
        cp.channels.save_channel(sdmc, path)
        back = cp.load_channel(path)
        assert isinstance(back, cp.Sdmc)
        assert np.array_equal(back.tensor, sdmc.tensor)

    def test_comments_and_blank_lines(self):
        text = "# a channel\n\ndmc 1 2  # sizes\n0.5 0.5\n"
        dmc = parse_channel(text)
        assert dmc.matrix.tolist() == [[0.5, 0.5]]

    def test_parse_errors(self):
        for text in [
            "",
            "dmc 2 2\n0.5 0.5\n",  # missing row
            "dmc 2\n",  # bad header
            "dmc 1 2\n0.5 x\n",  # non-numeric
            "dmc 1 2\n0.5 0.5 0.5\n",  # wrong row width
        ]:
            with pytest.raises(ChannelParse):
                parse_channel(text)

    def test_every_loaded_row_is_a_pmf(self):
        # validate-all sweep over a channel that fails it
        with pytest.raises(SumNotOne):
            parse_channel("dmc 2 2\n0.5 0.5\n0.9 0.2\n")

    def test_format_preserves_exact_values(self):
        dmc = cp.Dmc([[0.1, 0.9]])
        assert parse_channel(format_channel(dmc)).matrix.tolist() == [[0.1, 0.9]]
