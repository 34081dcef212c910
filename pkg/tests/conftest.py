import math

import pytest

from kerrchannel.channel import reference_channel
from kerrchannel.pulses import EnvelopeMoments, PulseEnvelope

# Frozen high-precision reference values (mpmath, 30 digits) for the
# cosine-power envelopes and the optimal input distribution.
COS2 = EnvelopeMoments(n4=35.0 / 18.0, n6=77.0 / 18.0, n8=9.9305555555555556)
COS2_XI = 2.4017740356908096
COS4 = EnvelopeMoments(n4=2.626530612244898, n6=7.8838367346938776, n8=25.034585172844648)
COS4_XI = 3.2923179930858493

# b = xi*gamma*L*P -> (lambda0*P, P*N0, capacity - Shannon in nats)
OPTIMAL_TABLE = {
    5.08: (0.39790545389117784, 0.41779290257410304, -0.87405501433842189),
    100.0: (0.16721547762199955, 3.0818665009113448, -3.1030498284543174),
    1e4: (0.089346435222421108, 164.20011227914548, -7.1564693314401126),
    1e6: (0.061862104010638979, 11368.789709030018, -11.421494916921965),
}


def gaussian_moments_closed_form(r: float) -> tuple[float, float, float]:
    """n4, n6, n8 of the unit-energy Gaussian with T0/T1 = r."""
    return (
        r / math.sqrt(2.0 * math.pi),
        r * r / (math.pi * math.sqrt(3.0)),
        r**3 / (2.0 * math.pi**1.5),
    )


@pytest.fixture
def channel():
    return reference_channel()


@pytest.fixture
def gaussian_envelope(channel):
    return PulseEnvelope.gaussian(channel.slot_T0, channel.slot_T0 / 10.0)


@pytest.fixture
def cos2_envelope(channel):
    return PulseEnvelope.cos_power(channel.slot_T0, 2)


# one summary line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
