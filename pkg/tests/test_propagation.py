import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kerrchannel import rng as rngmod
from kerrchannel.channel import ComplexSignal, SymbolSequence, TimeGrid
from kerrchannel.errors import ConfigError
from kerrchannel.propagation import (
    RungeKutta,
    SpectralNoise,
    SplitStep,
    TelegraphNoise,
    propagate_noiseless,
    propagate_rk4,
    propagate_rk4_sample,
    propagate_split_step,
    rk4_fields,
    roundtrip_error,
    spectral_noise_block,
    split_step_fields,
)
from kerrchannel.pulses import PulseEnvelope, synthesize_signal

T0 = 1e-10


def frame(channel, count=8, spp=64, power=3e-3, seed=1):
    grid = TimeGrid.for_slots(count, T0, spp)
    rng = np.random.default_rng(seed)
    c = math.sqrt(power) * np.exp(2j * np.pi * rng.random(count))
    return synthesize_signal(SymbolSequence(c), PulseEnvelope.cos_power(T0, 2), grid)


def test_noiseless_map_preserves_modulus(channel):
    x = frame(channel)
    y = propagate_noiseless(x, channel)
    np.testing.assert_allclose(np.abs(y.samples), np.abs(x.samples), rtol=1e-15)
    mu = channel.gamma_L * np.abs(x.samples) ** 2
    np.testing.assert_allclose(y.samples, x.samples * np.exp(1j * mu), rtol=1e-14, atol=0)


@pytest.mark.parametrize("scheme", ["strang", "lie"])
@pytest.mark.parametrize("steps", [1, 7, 100])
def test_split_step_exact_without_noise(channel, scheme, steps):
    x = frame(channel)
    y = split_step_fields(x.samples, channel.gamma, channel.length_L, 1.0, 0.0, steps, scheme)[0]
    np.testing.assert_allclose(y, propagate_noiseless(x, channel).samples, rtol=0, atol=1e-13 * np.abs(x.samples).max())


def test_rk4_matches_exact_map(channel):
    x = frame(channel)
    y = rk4_fields(x.samples, channel.gamma, channel.length_L, RungeKutta.for_line(channel.length_L, 400, 1))[0]
    exact = propagate_noiseless(x, channel).samples
    # peak phase 8 rad over 400 steps: global RK4 error ~1e-7
    assert np.max(np.abs(y - exact)) / np.max(np.abs(x.samples)) < 1e-6


def test_roundtrip_split_step(channel):
    assert roundtrip_error(frame(channel), channel, SplitStep(200)) <= 1e-12
    assert roundtrip_error(frame(channel), channel) <= 1e-12


def test_roundtrip_rk4_small(channel):
    err = roundtrip_error(frame(channel, count=2, spp=16), channel, RungeKutta.for_line(channel.length_L, 500, 5))
    assert err <= 1e-6


def test_roundtrip_zero_field(channel):
    grid = TimeGrid.for_slots(2, T0, 16)
    assert roundtrip_error(ComplexSignal(grid, np.zeros(32, complex)), channel, SplitStep(3)) == 0.0


def test_spectral_block_variance():
    rng = rngmod.stream(5)
    n, v = 4096, 2.5e-6
    samples = np.stack([spectral_noise_block(rng, n, v) for _ in range(64)])
    est = np.mean(np.abs(samples) ** 2)
    assert est == pytest.approx(v, rel=4 * math.sqrt(1.0 / samples.size))
    # white: neighbouring samples uncorrelated, pseudo-variance zero
    lag = np.mean(samples[:, 1:] * np.conj(samples[:, :-1]))
    assert abs(lag) < 4 * v / math.sqrt(samples.size)
    assert abs(np.mean(samples**2)) < 4 * v / math.sqrt(samples.size)


def test_linear_channel_noise_variance(channel):
    ch = channel.replace(gamma=0.0)
    grid = TimeGrid.for_slots(4, T0, 256)
    x = ComplexSignal(grid, np.zeros(grid.size, complex))
    y = np.concatenate([propagate_split_step(x, ch, SpectralNoise(ch.noise_Q, seed=s), SplitStep(5)).samples for s in range(8)])
    expected = ch.linear_noise_power(grid.spacing_delta)
    assert np.mean(np.abs(y) ** 2) == pytest.approx(expected, rel=4 / math.sqrt(y.size))


def test_telegraph_effective_q():
    tn = TelegraphNoise.for_q(5.94e-21, T0 / 64, 0.08)
    assert tn.effective_q(T0 / 64) == pytest.approx(5.94e-21, rel=1e-14)


def test_rk4_telegraph_variance_linear(channel):
    ch = channel.replace(gamma=0.0)
    delta = T0 / 64
    cfg = RungeKutta.for_line(ch.length_L, 40, 1)
    tn = TelegraphNoise.for_q(ch.noise_Q, delta, cfg.segment_dz, seed=3)
    grid = TimeGrid(T0, 32)
    y = propagate_rk4(ComplexSignal(grid, np.zeros(64, complex)), ch, tn, cfg)
    ys = np.concatenate([y.samples] + [
        propagate_rk4(ComplexSignal(grid, np.zeros(64, complex)), ch, tn, cfg, rngmod.stream(9, s)).samples for s in range(60)
    ])
    assert np.mean(np.abs(ys) ** 2) == pytest.approx(ch.noise_Q * ch.length_L / delta, rel=4 / math.sqrt(ys.size))


def test_rows_independent_of_batch(channel):
    x = frame(channel, count=2, spp=32).samples
    fields = np.stack([x, 2 * x, 3 * x])
    gens = lambda: [rngmod.stream(11, b) for b in range(3)]
    full = split_step_fields(fields, channel.gamma, channel.length_L, T0 / 32, channel.noise_Q, 10, "strang", gens())
    single = split_step_fields(fields[1:2], channel.gamma, channel.length_L, T0 / 32, channel.noise_Q, 10, "strang", [rngmod.stream(11, 1)])
    np.testing.assert_array_equal(full[1], single[0])
    again = split_step_fields(fields, channel.gamma, channel.length_L, T0 / 32, channel.noise_Q, 10, "strang", gens())
    np.testing.assert_array_equal(full, again)


def test_rk4_sample_deterministic(channel):
    cfg = RungeKutta.for_line(channel.length_L, 50, 2)
    tn = TelegraphNoise.for_q(channel.noise_Q, T0 / 64, cfg.segment_dz, seed=4)
    a = propagate_rk4_sample(0.03, channel, tn, cfg)
    b = propagate_rk4_sample(0.03, channel, tn, cfg)
    assert a == b
    assert abs(a) == pytest.approx(0.03, rel=0.2)


def test_config_validation(channel):
    with pytest.raises(ConfigError):
        SplitStep(0)
    with pytest.raises(ConfigError):
        SplitStep(10, scheme="midpoint")
    with pytest.raises(ConfigError):
        RungeKutta(0.0)
    with pytest.raises(ConfigError):
        RungeKutta(0.3).segments(channel.length_L)
    with pytest.raises(ConfigError):
        SpectralNoise(0.0)
    with pytest.raises(ConfigError):
        TelegraphNoise(1.0, 0.0)
    cfg = RungeKutta.for_line(channel.length_L, 40)
    wrong = TelegraphNoise(1.0, cfg.segment_dz * 2)
    with pytest.raises(ConfigError):
        propagate_rk4_sample(0.1, channel, wrong, cfg)
    x = frame(channel, count=2, spp=16)
    with pytest.raises(ConfigError):
        propagate_split_step(x, channel, wrong, SplitStep(3))
    with pytest.raises(ConfigError):
        split_step_fields(np.ones((2, 4)), 1.0, 1.0, 1.0, 1.0, 2, "strang", [rngmod.stream(0)])


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-5, 1e-2), st.integers(1, 40))
def test_split_step_noiseless_property(P, steps):
    from kerrchannel.channel import reference_channel

    ch = reference_channel()
    x = np.sqrt(P) * np.exp(1j * np.linspace(0, 6, 16))
    y = split_step_fields(x, ch.gamma, ch.length_L, 1.0, 0.0, steps, "strang")[0]
    np.testing.assert_allclose(np.abs(y), np.abs(x), rtol=1e-13)
    np.testing.assert_allclose(y, propagate_noiseless(x, ch), atol=1e-12 * math.sqrt(P))
