import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitjscc import modem
from bitjscc.harness import brute_force_posterior
from bitjscc.modem import ChannelRealization, get_constellation

NAMES = ["bpsk", "qpsk", "16qam"]
A = 1 / math.sqrt(2)


@pytest.mark.parametrize("name", NAMES)
def test_unit_energy_and_bijective_labels(name):
    c = get_constellation(name)
    assert abs(np.mean(np.abs(c.symbols) ** 2) - 1.0) < 1e-12
    labels = {tuple(l) for l in c.labels}
    assert len(labels) == c.order == 2 ** c.bits_per_symbol


@pytest.mark.parametrize("name", NAMES)
def test_gray_property_exhaustive(name):
    # nearest neighbours (minimum Euclidean distance pairs) differ in one bit
    c = get_constellation(name)
    d = np.abs(c.symbols[:, None] - c.symbols[None, :])
    dmin = d[d > 0].min()
    pairs = np.argwhere(np.isclose(d, dmin))
    assert len(pairs) > 0
    for i, j in pairs:
        assert int(np.sum(c.labels[i] != c.labels[j])) == 1


def test_unknown_modulation():
    with pytest.raises(modem.UnsupportedModulation):
        get_constellation("8psk")


def test_qpsk_mapping_examples():
    c = get_constellation("qpsk")
    np.testing.assert_allclose(modem.modulate([1, 1], c), [A + 1j * A])
    np.testing.assert_allclose(modem.modulate([0, 0], c), [-A - 1j * A])


def test_bpsk_mapping_example():
    np.testing.assert_array_equal(modem.modulate([1, 0, 1], get_constellation("bpsk")), [1, -1, 1])


def test_modulate_pads_with_zero_bits():
    c = get_constellation("16qam")
    assert modem.pad_length(6, c) == 2
    s = modem.modulate([1, 0, 1, 1, 0, 1], c)
    np.testing.assert_array_equal(s, modem.modulate([1, 0, 1, 1, 0, 1, 0, 0], c))


def test_relaxed_modulation_agrees_on_bits():
    rng = np.random.default_rng(0)
    for name in ("bpsk", "qpsk"):
        c = get_constellation(name)
        bits = rng.integers(0, 2, 37)
        np.testing.assert_allclose(modem.modulate_relaxed(bits.astype(float), c),
                                   modem.modulate(bits, c), atol=1e-15)
    with pytest.raises(modem.UnsupportedModulation):
        modem.modulate_relaxed(np.zeros(4), get_constellation("16qam"))


class TestChannel:
    def test_sigma(self):
        assert ChannelRealization(3.0).sigma2_per_dim == pytest.approx(10 ** -0.3 / 2)

    def test_bsc_field_consistency(self):
        with pytest.raises(ValueError):
            ChannelRealization(3.0, "bsc")
        with pytest.raises(ValueError):
            ChannelRealization(3.0, "soft", bsc_ber=0.1)
        with pytest.raises(ValueError):
            ChannelRealization(3.0, "bsc", bsc_ber=0.6)
        with pytest.raises(ValueError):
            ChannelRealization(3.0, "fuzzy")

    def test_noiseless_sentinel(self):
        s = modem.modulate(np.random.default_rng(1).integers(0, 2, 64), get_constellation("qpsk"))
        np.testing.assert_array_equal(modem.awgn(s, ChannelRealization(math.inf), 0), s)

    def test_awgn_rejects_bsc(self):
        with pytest.raises(ValueError):
            modem.awgn(np.zeros(2), ChannelRealization(3.0, "bsc", 0.1), 0)

    def test_noise_variance(self):
        ch = ChannelRealization(3.0)
        n = modem.awgn(np.zeros(1_000_000), ch, 7)
        target = 10 ** -0.3 / 2
        assert abs(np.var(n.real) / target - 1) < 0.01
        assert abs(np.var(n.imag) / target - 1) < 0.01

    def test_seed_determinism(self):
        ch = ChannelRealization(5.0)
        s = np.ones(100, complex)
        assert np.array_equal(modem.awgn(s, ch, [3, 4]), modem.awgn(s, ch, [3, 4]))


class TestLlr:
    def test_equidistant_point_is_zero(self):
        c = get_constellation("qpsk")
        llr = modem.demodulate_llr(np.array([0.0 + 0.5j]), c, ChannelRealization(0.0))
        assert llr[0] == 0.0

    def test_qpsk_closed_form_example(self):
        # sigma^2 = 0.5 per dimension <=> Es/N0 = 0 dB
        c = get_constellation("qpsk")
        ch = ChannelRealization(0.0)
        assert ch.sigma2_per_dim == 0.5
        llr = modem.demodulate_llr(np.array([A + 0.3j]), c, ch)
        assert llr[0] == pytest.approx(2.0, abs=1e-12)
        post = brute_force_posterior(np.array([A + 0.3j]), c, 0.5)[0, 0]
        assert post == pytest.approx(1 / (1 + math.exp(-2.0)), abs=1e-12)

    def test_qpsk_linear_form(self):
        c = get_constellation("qpsk")
        ch = ChannelRealization(4.0)
        r = np.random.default_rng(2).standard_normal(50) + 1j * np.random.default_rng(3).standard_normal(50)
        llr = modem.demodulate_llr(r, c, ch).reshape(-1, 2)
        s2 = ch.sigma2_per_dim
        expected = np.clip(np.stack([2 * A * r.real / s2, 2 * A * r.imag / s2], 1), -40, 40)
        np.testing.assert_allclose(llr, expected, rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("name", NAMES)
    def test_sigmoid_llr_matches_enumeration(self, name):
        c = get_constellation(name)
        rng = np.random.default_rng(11)
        sigma2 = rng.uniform(0.05, 1.0, 2000)
        sym = c.symbols[rng.integers(c.order, size=2000)]
        r = sym + rng.normal(0, 1, 2000) * np.sqrt(sigma2) + 1j * rng.normal(0, 1, 2000) * np.sqrt(sigma2)
        for ri, s2 in zip(r, sigma2):
            ch = ChannelRealization(-10 * math.log10(2 * s2))
            got = modem.soft_posterior(modem.demodulate_llr(np.array([ri]), c, ch))
            exact = brute_force_posterior(np.array([ri]), c, s2)[0]
            assert np.max(np.abs(got - exact)) <= 1e-9

    def test_clamp(self):
        c = get_constellation("bpsk")
        llr = modem.demodulate_llr(np.array([5.0]), c, ChannelRealization(30.0))
        assert llr[0] == modem.LLR_CLAMP
        assert np.isfinite(llr).all()


class TestDecisions:
    def test_hard_decide_example(self):
        np.testing.assert_array_equal(modem.hard_decide([2.0, -0.1, 0.0]), [1, 0, 0])

    def test_all_positive(self):
        assert modem.hard_decide(np.full(9, 0.3)).all()

    @pytest.mark.parametrize("name", NAMES)
    def test_zero_noise_round_trip_all_groups(self, name):
        c = get_constellation(name)
        bits = c.labels.reshape(-1)
        for snr in (math.inf, 200.0):
            llr = modem.transmit_llr(bits, c, ChannelRealization(snr), 0)
            np.testing.assert_array_equal(modem.hard_decide(llr), bits)

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=64), st.sampled_from(NAMES))
    @settings(max_examples=50, deadline=None)
    def test_zero_noise_round_trip_random(self, bits, name):
        c = get_constellation(name)
        llr = modem.transmit_llr(bits, c, ChannelRealization(math.inf), 0)
        assert llr.shape == (len(bits),)
        np.testing.assert_array_equal(modem.hard_decide(llr), bits)

    def test_soft_posterior_examples(self):
        assert modem.soft_posterior(0.0) == 0.5
        assert modem.soft_posterior(math.log(3)) == pytest.approx(0.75, abs=1e-15)
        floor = modem.soft_posterior(-40.0)
        assert 0 < floor and floor == pytest.approx(4.248354255291589e-18, rel=1e-12)


class TestBsc:
    def test_zero_rate_is_identity(self):
        bits = np.random.default_rng(0).integers(0, 2, 1000)
        np.testing.assert_array_equal(modem.bsc_transmit(bits, 0.0, 1), bits)

    def test_half_rate(self):
        bits = np.zeros(100_000, np.uint8)
        assert abs(modem.bsc_transmit(bits, 0.5, 2).mean() - 0.5) <= 0.005

    def test_tenth_rate(self):
        bits = np.ones(1_000_000, np.uint8)
        assert abs(1 - modem.bsc_transmit(bits, 0.1, 3).mean() - 0.1) <= 0.001

    @pytest.mark.parametrize("ber", [-0.1, 0.51])
    def test_rejects_bad_rate(self, ber):
        with pytest.raises(ValueError):
            modem.bsc_transmit(np.zeros(3), ber, 0)


class TestAnalyticBer:
    def test_infinite_snr(self):
        assert modem.analytic_ber(get_constellation("qpsk"), math.inf) == 0.0

    def test_qpsk_3db_matches_monte_carlo(self):
        c = get_constellation("qpsk")
        an = modem.analytic_ber(c, 3.0)
        # 3 dB is 10**0.3 = 1.995, so Eb/N0 is 0.998 and BER sits just above Q(sqrt(2))
        assert an == pytest.approx(0.5 * math.erfc(math.sqrt(10 ** 0.3 / 2)), rel=1e-14)
        assert an == pytest.approx(0.0786, abs=5e-4)
        bits = np.random.default_rng(5).integers(0, 2, 1_000_000).astype(np.uint8)
        mc = np.mean(modem.hard_decide(modem.transmit_llr(bits, c, ChannelRealization(3.0), 6)) != bits)
        assert abs(mc / an - 1) < 0.03

    def test_strictly_decreasing(self):
        for name in ("bpsk", "qpsk"):
            c = get_constellation(name)
            vals = [modem.analytic_ber(c, s) for s in np.arange(-5, 15, 0.5)]
            assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_16qam_unsupported(self):
        with pytest.raises(modem.UnsupportedModulation):
            modem.analytic_ber(get_constellation("16qam"), 5.0)
