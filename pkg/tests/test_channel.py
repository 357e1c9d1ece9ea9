import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfiqkd.channel import (
    ALL_STATES,
    ChannelPoint,
    StateLabel,
    correlator,
    expected_counts,
    gain_wcs,
    overlap,
    pair_statistics,
    transmittance,
    wrap_angle,
    yield_n,
)
from rfiqkd.decoy import BASES
from rfiqkd.params import APD, SNSPD, ProtocolParams

from reference import IDEAL, ideal_correlator, poisson_average, yield_by_enumeration

angles = st.floats(0.0, 2 * math.pi, allow_nan=False)
probs = st.floats(0.0, 1.0, allow_nan=False)


@pytest.fixture
def proto():
    return ProtocolParams(mu=0.6, nu=0.25, omega=0.0, p_mu=0.5, p_nu=0.35, p_omega=0.15,
                          p_z=0.9, n_pulses=1e11)


class TestOverlap:
    @pytest.mark.parametrize("a", BASES)
    @pytest.mark.parametrize("b", BASES)
    @pytest.mark.parametrize("beta", [0.0, 0.3, 1.7, 4.0])
    def test_correlator_table(self, a, b, beta):
        assert correlator(a, b, beta) == pytest.approx(ideal_correlator(a, b, beta), abs=1e-15)

    @given(beta=angles)
    def test_outcomes_complete(self, beta):
        for alice in ALL_STATES:
            for basis in BASES:
                total = sum(overlap(alice, StateLabel(basis, v), beta) for v in (0, 1))
                assert total == pytest.approx(1.0, abs=1e-15)

    @given(beta=angles)
    def test_range(self, beta):
        for alice in ALL_STATES:
            for bob in ALL_STATES:
                assert 0.0 <= overlap(alice, bob, beta) <= 1.0

    def test_z_crossing_uncorrelated(self):
        assert overlap(StateLabel("Z", 0), StateLabel("X", 1), 0.4) == 0.5

    def test_wrap(self):
        assert wrap_angle(2 * math.pi + 0.5) == pytest.approx(0.5)
        assert wrap_angle(-0.5) == pytest.approx(2 * math.pi - 0.5)


class TestTransmittance:
    def test_values(self):
        # 50 km fiber (10 dB) + Z path (10 dB) -> 1e-2 of photons reach the detectors
        assert transmittance(50, "Z", APD) == pytest.approx(1e-2 * 0.15)
        # XY path carries the extra 3 dB sift loss by default
        assert transmittance(50, "XY", APD) == pytest.approx(10 ** -2.5 * 0.15)

    def test_negative_distance(self):
        with pytest.raises(ValueError):
            transmittance(-1, "Z", APD)

    def test_channel_point(self):
        pt = ChannelPoint.at(100, SNSPD, beta=7.0)
        assert pt.beta == pytest.approx(7.0 - 2 * math.pi)
        assert pt.eta("Z") == pt.eta_total_z and pt.eta("Y") == pt.eta_total_xy


class TestYield:
    @pytest.mark.parametrize("n,eta,c,e_d,expected", [
        (1, 1.0, 1.0, 0.0, 1.0),
        (1, 1.0, 0.0, 0.0, 0.0),
        (0, 0.3, 0.5, 0.0, 0.0),
        (5, 0.0, 0.7, 0.0, 0.0),
        (2, 1.0, 0.5, 0.0, 0.5),
    ])
    def test_trivial_cases(self, n, eta, c, e_d, expected):
        assert yield_n(n, eta, c, e_d) == pytest.approx(expected, abs=1e-15)

    def test_vacuum_is_dark_count_split(self):
        e_d = 1e-3
        assert yield_n(0, 0.5, 0.3, e_d) == pytest.approx(e_d * (1 - e_d) + e_d**2 / 2)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(0, 8), eta=probs, c=probs, e_d=st.floats(0, 0.2))
    def test_matches_route_enumeration(self, n, eta, c, e_d):
        assert yield_n(n, eta, c, e_d) == pytest.approx(
            yield_by_enumeration(n, eta, c, e_d), abs=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(k=st.floats(0.01, 1.2), eta=probs, c=probs, e_d=st.floats(0, 0.1))
    def test_gain_is_poisson_average(self, k, eta, c, e_d):
        assert gain_wcs(k, eta, c, e_d) == pytest.approx(
            poisson_average(k, lambda n: yield_n(n, eta, c, e_d), n_max=60), abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(0, 10), eta=probs, c=probs, e_d=st.floats(0, 0.2))
    def test_outcome_yields_bounded(self, n, eta, c, e_d):
        total = yield_n(n, eta, c, e_d) + yield_n(n, eta, 1 - c, e_d)
        assert -1e-15 <= total <= 1 + 1e-15


class TestPairStatistics:
    def test_ideal_no_errors_at_zero_angle(self):
        pt = ChannelPoint.at(0, IDEAL, 0.0)
        # <YY> = -cos(beta): the YY pair is anti-correlated by convention
        for a, qber in (("X", 0.0), ("Y", 1.0), ("Z", 0.0)):
            stats = pair_statistics(a, a, 0.5, pt, IDEAL)
            assert stats.qber == pytest.approx(qber, abs=1e-15)
            assert stats.gain == pytest.approx(1 - math.exp(-0.5))

    def test_misalignment_sets_floor(self):
        pt = ChannelPoint.at(0, SNSPD, 0.0)
        assert pair_statistics("Z", "Z", 0.5, pt, SNSPD).qber == pytest.approx(SNSPD.e0, rel=1e-3)

    def test_no_signal(self):
        pt = ChannelPoint.at(0, IDEAL, 0.0)
        stats = pair_statistics("Z", "Z", 0.0, pt, IDEAL)
        assert stats.no_signal and stats.qber == 0.5

    def test_uncorrelated_crossing(self):
        pt = ChannelPoint.at(20, APD, 0.3)
        assert pair_statistics("Z", "X", 0.5, pt, APD).qber == pytest.approx(0.5)

    @given(beta=angles)
    def test_qber_in_range(self, beta):
        pt = ChannelPoint.at(80, APD, beta)
        for a in BASES:
            for b in BASES:
                s = pair_statistics(a, b, 0.4, pt, APD)
                assert 0.0 <= s.qber <= 1.0 and 0.0 <= s.gain <= 1.0


class TestExpectedCounts:
    def test_rounds_and_errors(self, proto):
        pt = ChannelPoint.at(50, APD, 0.4)
        counts = expected_counts(proto, APD, pt)
        s = pair_statistics("X", "Y", proto.nu, pt, APD)
        rounds = proto.n_pulses * proto.p_x * proto.p_y * proto.p_nu
        n, m = counts.cell("X", "Y", "nu")
        assert n == pytest.approx(rounds * s.gain)
        assert m == pytest.approx(rounds * s.gain * s.qber)

    @given(beta=angles)
    @settings(max_examples=20, deadline=None)
    def test_zz_independent_of_frame(self, beta):
        p = ProtocolParams(mu=0.6, nu=0.25, omega=0.0, p_mu=0.5, p_nu=0.35, p_omega=0.15,
                           p_z=0.9, n_pulses=1e11)
        a = expected_counts(p, SNSPD, ChannelPoint.at(100, SNSPD, 0.0))
        b = expected_counts(p, SNSPD, ChannelPoint.at(100, SNSPD, beta))
        np.testing.assert_allclose(a.pair("Z", "Z"), b.pair("Z", "Z"), rtol=1e-14)

    def test_all_nine_pairs_present(self, proto):
        counts = expected_counts(proto, APD, ChannelPoint.at(10, APD))
        assert np.all(counts.valid > 0)
