import pytest

from kerrchannel import pdfcheck
from kerrchannel.channel import reference_channel
from kerrchannel.pulses import envelope_moments

T0 = 1e-10
DELTA = T0 / 256


@pytest.mark.parametrize("mu", [0.0, 0.5, 1.0, 3.0])
def test_coefficient_density_normalized(channel, cos2_envelope, mu):
    assert pdfcheck.coefficient_pdf_residual(mu, channel, envelope_moments(cos2_envelope)) <= 1e-6


@pytest.mark.parametrize("mu", [0.0, 0.5, 1.0])
def test_per_sample_core_normalized(channel, mu):
    assert pdfcheck.per_sample_pdf_residual(mu, channel, DELTA) <= 1e-3


def test_per_sample_covariance_linear_limit(channel):
    cov = pdfcheck.per_sample_covariance(0.0, channel, DELTA)
    s = channel.linear_noise_power(DELTA)
    assert cov[0, 0] == pytest.approx(s / 2) and cov[1, 1] == pytest.approx(s / 2)
    assert cov[0, 1] == 0


def test_histogram_matches_density():
    ch = reference_channel()
    h = pdfcheck.histogram_chi2(0.5, ch, T0 / 64, samples=100_000, seed=11)
    assert h.samples > 99_000
    assert h.reduced < 1.5
    assert 0 < h.p_value <= 1
