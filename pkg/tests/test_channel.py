import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kerrchannel.channel import (
    ChannelParams,
    ComplexSignal,
    SymbolSequence,
    TimeGrid,
    average_power,
    reference_channel,
    validate_power_range,
)
from kerrchannel.errors import ConfigError, DomainError


def test_reference_values(channel):
    assert channel.gamma == 1.25
    assert channel.length_L == 800.0
    assert channel.gamma_L == 1000.0
    assert math.isclose(channel.linear_noise_power(channel.slot_T0), 8e-9)


@pytest.mark.parametrize("field", ["length_L", "noise_Q", "slot_T0"])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_rejects_nonpositive(field, bad):
    with pytest.raises(ConfigError):
        reference_channel().replace(**{field: bad})


def test_gamma_zero_is_linear_channel():
    ch = reference_channel().replace(gamma=0.0)
    assert ch.gamma_L == 0.0
    with pytest.raises(ConfigError):
        reference_channel().replace(gamma=-1.0)


def test_gamma_length_overflow():
    with pytest.raises(ConfigError):
        ChannelParams(gamma=1e300, length_L=1e300, noise_Q=1.0, slot_T0=1.0)


def test_dict_roundtrip(channel):
    assert ChannelParams.from_dict(channel.to_dict()) == channel


def test_grid_spacing_and_points():
    g = TimeGrid(total_T=6.4e-9, half_count_M=8192)
    assert g.spacing_delta == 6.4e-9 / 16384
    assert g.spacing_delta * 2 * g.half_count_M == g.total_T
    assert g.size == 16384
    assert g.indices[0] == -8192 and g.indices[-1] == 8191
    assert g.times[8192] == 0.0


def test_grid_for_slots():
    g = TimeGrid.for_slots(16, 1e-10, 256)
    assert g.half_count_M == 2048
    assert math.isclose(g.spacing_delta, 1e-10 / 256)
    with pytest.raises(ConfigError):
        TimeGrid.for_slots(3, 1e-10, 3)


def test_symbols_and_signal():
    s = SymbolSequence([1 + 1j, 2.0])
    assert s.count == 2
    with pytest.raises(DomainError):
        SymbolSequence([])
    with pytest.raises(DomainError):
        SymbolSequence([np.nan])
    g = TimeGrid(1.0, 2)
    with pytest.raises(ConfigError):
        ComplexSignal(g, np.zeros(3, complex))


def test_average_power():
    assert average_power(SymbolSequence(np.full(7, 1e-3**0.5))) == pytest.approx(1e-3, rel=1e-15)
    s = SymbolSequence([0.03 * np.exp(1j * 0.3), 0.04j])
    assert average_power(s) == pytest.approx((0.03**2 + 0.04**2) / 2, rel=1e-15)


@given(st.floats(1e-6, 1.0), st.integers(1, 50))
def test_average_power_phase_invariant(P, count):
    phases = np.linspace(0, 2 * np.pi, count, endpoint=False)
    s = SymbolSequence(math.sqrt(P) * np.exp(1j * phases))
    assert average_power(s) == pytest.approx(P, rel=1e-12)


def test_power_range_reference(channel):
    d = validate_power_range(1e-3, channel, 6.4e-9 / 16384)
    assert d.snr_low_ratio == pytest.approx(488.28125, rel=1e-12)
    # delta/(Q L^3 gamma^2 P); 488.28 here, the two ratios multiply to delta^2/(Q^2 L^4 gamma^2)
    assert d.snr_high_ratio == pytest.approx(488.28125, rel=1e-12)
    assert d.snr_low_ratio * d.snr_high_ratio == pytest.approx(
        (6.4e-9 / 16384) ** 2 / (1e-21**2 * 800.0**4 * 1.25**2), rel=1e-12
    )
    assert d.in_range


def test_power_range_rounded_grid(channel):
    # delta quoted to three digits; the high-power ratio carries gamma squared
    d = validate_power_range(1e-3, channel, 3.91e-13)
    assert d.snr_low_ratio == pytest.approx(488.75, rel=1e-12)
    assert d.snr_high_ratio == pytest.approx(488.75, rel=1e-12)


def test_power_range_high_power_fails(channel):
    d = validate_power_range(1.0, channel, 6.4e-9 / 16384)
    assert not d.in_range
    assert d.snr_high_ratio < 10


def test_power_range_boundary_inclusive():
    ch = ChannelParams(gamma=1.0, length_L=1.0, noise_Q=1.0, slot_T0=1.0)
    d = validate_power_range(1.0, ch, 1.0, threshold=1.0)
    assert d.snr_low_ratio == 1.0 and d.snr_high_ratio == 1.0
    assert d.in_range


def test_power_range_rejects_zero(channel):
    with pytest.raises(DomainError):
        validate_power_range(0.0, channel, 1e-12)
