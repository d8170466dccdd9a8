import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsmasim.channel import flat_channel
from rsmasim.metrics import (QUADRANTS, BerCurve, OutcomeTally, OutOfRangeError, SinrMap,
                             bottleneck_proxy, coded_ber, compute_sinr, demapper_input_snr_db,
                             empirical_throughput, expected_throughput, nominal_rate, quadrant_tally,
                             threshold_gain, threshold_snr)
from rsmasim.transceiver import MCS_TABLE, McsGroup, design_precoders


def _flat_map(values):
    v = np.asarray(values, dtype=float)
    return SinrMap(np.stack([v, v]), np.stack([v, v]))


class _Flags:
    def __init__(self, c_ok, p_ok):
        self.c_ok, self.p_ok = c_ok, p_ok


class TestSinr:
    def _setup(self, sigma2):
        rng = np.random.default_rng(4)
        h1, h2 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        return flat_channel(h1, h2, sigma2), design_precoders(h1, h2, 0.3)

    def test_hand_computed(self):
        ch, P = self._setup(0.1)
        sinr = compute_sinr(ch, P)
        h = ch.h1[0]
        gc, g1, g2 = (abs(np.vdot(h, p)) ** 2 for p in (P.p_c, P.p_1, P.p_2))
        assert sinr.common[0, 0] == pytest.approx(gc / (g1 + g2 + 0.1))
        assert sinr.private[0, 0] == pytest.approx(g1 / (g2 + 0.1))

    def test_huge_noise(self):
        ch, P = self._setup(1e12)
        sinr = compute_sinr(ch, P)
        assert np.all(sinr.common < 1e-10) and np.all(sinr.private < 1e-10)

    def test_zf_private_without_interference(self):
        ch, P = self._setup(0.5)
        P0 = design_precoders(ch.h1[0], ch.h2[0], 0.0)
        sinr = compute_sinr(ch, P0)
        expected = abs(np.vdot(ch.h1[0], P0.p_1)) ** 2 / 0.5
        assert sinr.private[0, 0] == pytest.approx(expected)


class TestProxy:
    def test_flat_unity(self):
        assert bottleneck_proxy(_flat_map([1.0] * 48))["private1"] == pytest.approx(1.0)

    def test_minimum(self):
        assert bottleneck_proxy(_flat_map([3.0, 1.0, 7.0]))["common"] == pytest.approx(1.0)

    def test_common_uses_worse_user(self):
        sinr = SinrMap(np.array([[3.0, 3.0], [3.0, 1.0]]), np.ones((2, 2)) * 3)
        assert bottleneck_proxy(sinr)["common"] == pytest.approx(1.0)

    @given(st.lists(st.floats(0, 1e4), min_size=1, max_size=20))
    def test_min_property(self, values):
        r = bottleneck_proxy(_flat_map(values))
        assert all(r["private1"] <= np.log2(1 + v) + 1e-12 for v in values)


class TestThroughput:
    def test_all_success_90(self):
        group = McsGroup.parse("QPSK-3/4", "16QAM-3/4", "16QAM-3/4")
        assert expected_throughput(group, (1, 1, 1)) == 90e6

    def test_zero(self):
        group = McsGroup.parse("QPSK-3/4", "16QAM-3/4", "16QAM-3/4")
        assert expected_throughput(group, (0, 0, 0)) == 0

    def test_partial_45(self):
        group = McsGroup.parse("QPSK-3/4", "16QAM-3/4", "16QAM-3/4")
        assert expected_throughput(group, (0.5, 1, 0)) == pytest.approx(45e6)

    def test_empirical_43_2(self):
        group = McsGroup.parse("QPSK-3/4", "16QAM-1/2", "QPSK-1/2")
        tally = OutcomeTally(T=75, D_sc=60, D_s1=75, D_s2=30)
        assert empirical_throughput(tally, group) == pytest.approx(43.2e6, rel=1e-12)

    def test_empirical_matches_expected(self):
        group = McsGroup.parse("BPSK-3/4", "QPSK-3/4", "16QAM-1/2")
        tally = OutcomeTally(T=75, D_sc=75, D_s1=75, D_s2=75)
        assert empirical_throughput(tally, group) == expected_throughput(group, (1, 1, 1))

    def test_no_common(self):
        group = McsGroup.parse("BPSK-3/4", "QPSK-3/4", "16QAM-1/2")
        assert empirical_throughput(OutcomeTally(T=10, D_sc=0, D_s1=10, D_s2=10), group) == 18e6 + 24e6

    @given(st.integers(1, 100), st.integers(0, 100), st.integers(0, 100), st.integers(0, 100))
    def test_monotone(self, T, a, b, c):
        a, b, c = min(a, T), min(b, T), min(c, T)
        group = McsGroup(MCS_TABLE[2], MCS_TABLE[5], MCS_TABLE[1])
        base = empirical_throughput(OutcomeTally(T, a, b, c), group)
        if a < T:
            assert empirical_throughput(OutcomeTally(T, a + 1, b, c), group) >= base

    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            expected_throughput(McsGroup(*MCS_TABLE[:3]), (1.2, 0, 0))
        with pytest.raises(ValueError):
            empirical_throughput(OutcomeTally(), McsGroup(*MCS_TABLE[:3]))

    def test_nominal_rates(self):
        assert [nominal_rate(m) for m in MCS_TABLE] == [6e6, 9e6, 12e6, 18e6, 24e6, 36e6]


class TestTally:
    def test_all_success(self):
        t = quadrant_tally([(_Flags(True, True), _Flags(True, True))] * 5)
        assert t.D_sc == t.T == 5 and t.quadrants[:, 0].tolist() == [5, 5]

    def test_user_one_private_only(self):
        t = quadrant_tally([(_Flags(False, True), _Flags(True, True))] * 3)
        assert t.quadrants[0].tolist() == [0, 0, 3, 0] and t.quadrants[1].tolist() == [3, 0, 0, 0]
        assert t.D_sc == 0 and t.D_s1 == 3

    def test_mixed_batch(self):
        flags = [((True, True), (True, False)), ((False, False), (True, True)),
                 ((True, False), (False, True)), ((False, True), (False, False))]
        t = quadrant_tally([(_Flags(*a), _Flags(*b)) for a, b in flags])
        assert t.quadrants.tolist() == [[1, 1, 1, 1], [1, 1, 1, 1]]
        assert (t.T, t.D_sc, t.D_s1, t.D_s2) == (4, 1, 2, 2)
        assert np.all(t.quadrants.sum(axis=1) == t.T)

    def test_empty(self):
        with pytest.raises(ValueError):
            quadrant_tally([])

    def test_reduction_and_serialization(self):
        a, b = OutcomeTally(), OutcomeTally()
        a.add_run((True, False), (True, True))
        b.add_run((False, False), (False, True))
        c = a + b
        assert c.T == 2 and c.D_s1 == 1
        assert OutcomeTally.from_dict(c.to_dict()).to_dict() == c.to_dict()
        assert list(c.to_dict()["quadrants"]["user1"]) == list(QUADRANTS)

    def test_coded_ber(self):
        assert coded_ber([0, 1, 1, 0], [0, 0, 1, 1]) == 0.5
        with pytest.raises(ValueError):
            coded_ber([0], [0, 1])


def _waterfall(shift=0.0):
    snr = np.arange(0.0, 16.0, 1.0)
    return BerCurve("x", snr, 0.5 * 10 ** (-(np.clip(snr - 4.0 - shift, 0, None)) / 2.0))


class TestThreshold:
    def test_identical(self):
        c = _waterfall()
        assert threshold_gain(c, c, 1e-3) == pytest.approx(0.0)

    def test_two_db_shift(self):
        sic, jd = _waterfall(), _waterfall(-2.0)
        assert threshold_gain(sic, jd, 1e-3) == pytest.approx(2.0, abs=0.01)

    def test_antisymmetric(self):
        a, b = _waterfall(), _waterfall(-1.3)
        assert threshold_gain(a, b, 1e-4) == pytest.approx(-threshold_gain(b, a, 1e-4))

    def test_log_linear_interpolation(self):
        c = BerCurve("x", [0.0, 2.0], [1e-2, 1e-4])
        assert threshold_snr(c, 1e-3) == pytest.approx(1.0)

    def test_out_of_range(self):
        c = _waterfall()
        with pytest.raises(OutOfRangeError):
            threshold_snr(c, 0.9)
        with pytest.raises(OutOfRangeError):
            threshold_snr(BerCurve("x", [0, 1], [0.3, 0.2]), 1e-3)

    def test_zero_ber_floor(self):
        c = BerCurve("x", [0.0, 1.0], [0.1, 0.0], n_bits=np.array([1000, 1000]))
        assert 0.0 < threshold_snr(c, 1e-3) < 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            BerCurve("x", [1.0, 0.0], [0.1, 0.01])
        with pytest.raises(ValueError):
            BerCurve("x", [0.0, 1.0], [0.1, 1.5])


def test_demapper_snr():
    ch = flat_channel([1, 0], [0, 1], 0.01)
    P = design_precoders([1, 0], [0, 1], 0.5)
    # orthogonal unit channels: each user receives t/2 common + (1-t)/2 own private
    assert demapper_input_snr_db(ch, P) == pytest.approx(10 * np.log10(0.5 / 0.01))
