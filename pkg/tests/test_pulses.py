import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import COS2, COS2_XI, COS4, COS4_XI, gaussian_moments_closed_form
from kerrchannel.channel import SymbolSequence, TimeGrid
from kerrchannel.errors import ConfigError, DomainError, LayoutError
from kerrchannel.pulses import (
    EnvelopeMoments,
    PulseEnvelope,
    SlotLayout,
    basis_matrix,
    check_overlap,
    cos_power_amplitude,
    envelope_moment,
    envelope_moments,
    envelope_xi,
    synthesize_signal,
)

T0 = 1e-10


def test_gaussian_moments_published_values(gaussian_envelope):
    m = envelope_moments(gaussian_envelope)
    assert m.n4 == pytest.approx(3.989, rel=1e-3)
    assert m.n6 == pytest.approx(18.38, rel=1e-3)
    assert m.n8 == pytest.approx(89.79, rel=1e-3)
    assert m.xi == pytest.approx(5.08, rel=1e-3)


@pytest.mark.parametrize("r", [2.0, 5.0, 10.0, 20.0])
def test_gaussian_moments_closed_form(r):
    env = PulseEnvelope.gaussian(T0, T0 / r)
    n4, n6, n8 = gaussian_moments_closed_form(r)
    assert envelope_moment(env, 2) == pytest.approx(1.0, rel=1e-10)
    assert envelope_moment(env, 4) == pytest.approx(n4, rel=1e-9)
    assert envelope_moment(env, 6) == pytest.approx(n6, rel=1e-9)
    assert envelope_moment(env, 8) == pytest.approx(n8, rel=1e-9)


def test_cos2_moments():
    m = envelope_moments(PulseEnvelope.cos_power(T0, 2))
    assert m.n4 == pytest.approx(COS2.n4, rel=1e-12)
    assert m.n6 == pytest.approx(COS2.n6, rel=1e-12)
    assert m.n8 == pytest.approx(COS2.n8, rel=1e-12)
    assert m.xi == pytest.approx(COS2_XI, rel=1e-12)


def test_cos4_moments():
    m = envelope_moments(PulseEnvelope.cos_power(T0, 4))
    assert m.n4 == pytest.approx(COS4.n4, rel=1e-12)
    assert m.n6 == pytest.approx(COS4.n6, rel=1e-12)
    assert m.n8 == pytest.approx(COS4.n8, rel=1e-12)
    assert m.xi == pytest.approx(COS4_XI, rel=1e-12)


def test_cos_amplitudes():
    assert cos_power_amplitude(2) ** 2 == pytest.approx(8.0 / 3.0, rel=1e-15)
    assert cos_power_amplitude(4) ** 2 == pytest.approx(128.0 / 35.0, rel=1e-15)


def test_rectangular_moments():
    m = envelope_moments(PulseEnvelope.rectangular(T0))
    assert (m.n4, m.n6, m.n8) == pytest.approx((1.0, 1.0, 1.0), rel=1e-12)
    assert m.xi == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("s", [0, 3, -2, 2.5])
def test_bad_moment_order(gaussian_envelope, s):
    with pytest.raises(DomainError):
        envelope_moment(gaussian_envelope, s)


def test_odd_cos_power_rejected():
    with pytest.raises(ConfigError):
        PulseEnvelope.cos_power(T0, 3)


def test_xi_inconsistent_moments():
    with pytest.raises(DomainError):
        envelope_xi(1.0, 0.5)


def test_unit_moments_are_rectangular():
    assert EnvelopeMoments.unit().xi == 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(1.5, 30.0))
def test_moment_hierarchy(r):
    # Cauchy-Schwarz on f^2 with unit energy: n6 >= n4^2 and n8 n4 >= n6^2
    m = envelope_moments(PulseEnvelope.gaussian(T0, T0 / r))
    assert m.n6 >= m.n4**2 * (1 - 1e-9)
    assert m.n8 * m.n4 >= m.n6**2 * (1 - 1e-9)
    assert 4 * m.n6 - 3 * m.n4**2 > 0


def test_overlap():
    assert check_overlap(PulseEnvelope.cos_power(T0, 2)) == 0.0
    assert check_overlap(PulseEnvelope.rectangular(T0)) == 0.0
    g = PulseEnvelope.gaussian(T0, T0 / 10)
    assert check_overlap(g) == pytest.approx(math.exp(-25.0), rel=1e-8)


def test_tabulated_normalisation_and_moments():
    nodes = np.linspace(-0.5, 0.5, 2001)
    env = PulseEnvelope.tabulated(T0, nodes, 3.0 * np.cos(np.pi * nodes) ** 2)
    assert envelope_moment(env, 2) == pytest.approx(1.0, rel=1e-12)
    assert envelope_moment(env, 4) == pytest.approx(COS2.n4, rel=1e-5)


def test_tabulated_unnormalised_rejected():
    nodes = np.linspace(-0.5, 0.5, 11)
    env = PulseEnvelope.tabulated(T0, nodes, 2.0 * np.ones(11), normalize=False)
    with pytest.raises(ConfigError):
        envelope_moment(env, 4)


def test_tabulated_validation():
    with pytest.raises(ConfigError):
        PulseEnvelope.tabulated(T0, [0.1, 0.0], [1.0, 1.0])
    with pytest.raises(ConfigError):
        PulseEnvelope.tabulated(T0, [-0.7, 0.0], [1.0, 1.0])
    with pytest.raises(ConfigError):
        PulseEnvelope.tabulated(T0, [-0.5, 0.5], [0.0, 0.0])


def test_envelope_file(tmp_path):
    path = tmp_path / "shape.txt"
    nodes = np.linspace(-0.5, 0.5, 401)
    np.savetxt(path, np.column_stack([nodes, np.cos(np.pi * nodes) ** 2]), header="tau f")
    env = PulseEnvelope.from_file(path, T0)
    assert envelope_moment(env, 4) == pytest.approx(COS2.n4, rel=1e-4)
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n4 5 6\n")
    with pytest.raises(ConfigError):
        PulseEnvelope.from_file(bad, T0)
    with pytest.raises(ConfigError):
        PulseEnvelope.from_file(tmp_path / "missing.txt", T0)


@pytest.mark.parametrize(
    "env",
    [
        PulseEnvelope.gaussian(T0, T0 / 10),
        PulseEnvelope.cos_power(T0, 4),
        PulseEnvelope.rectangular(T0),
        PulseEnvelope.tabulated(T0, [-0.5, 0.0, 0.5], [0.0, 1.0, 0.0]),
    ],
)
def test_descriptor_roundtrip(env):
    back = PulseEnvelope.from_dict(env.to_dict(), T0)
    tau = np.linspace(-0.6, 0.6, 101)
    np.testing.assert_allclose(back.shape(tau), env.shape(tau), rtol=1e-14)


def test_rect_half_open():
    env = PulseEnvelope.rectangular(T0)
    assert env.shape(-0.5) == 1.0 and env.shape(0.5) == 0.0


def test_layout_labels_and_centres():
    odd = SlotLayout.centered(5, T0)
    np.testing.assert_array_equal(odd.labels, [-2, -1, 0, 1, 2])
    np.testing.assert_allclose(odd.centers, np.arange(-2, 3) * T0)
    even = SlotLayout.centered(4, T0)
    np.testing.assert_array_equal(even.labels, [0, 1, 2, 3])
    np.testing.assert_allclose(even.centers, (np.arange(4) - 1.5) * T0)
    with pytest.raises(LayoutError):
        SlotLayout.centered(0, T0)


def test_layout_must_fit_grid():
    grid = TimeGrid.for_slots(4, T0, 32)
    with pytest.raises(LayoutError):
        SlotLayout.centered(5, T0).check_fits(grid)


def test_resolution_guard():
    grid = TimeGrid.for_slots(4, T0, 8)
    with pytest.raises(ConfigError):
        basis_matrix(PulseEnvelope.cos_power(T0, 2), grid, SlotLayout.centered(4, T0))


@pytest.mark.parametrize("spp", [16, 64, 256])
def test_basis_orthonormal_compact(spp):
    grid = TimeGrid.for_slots(6, T0, spp)
    F = basis_matrix(PulseEnvelope.cos_power(T0, 2), grid, SlotLayout.centered(6, T0))
    gram = F @ F.T * grid.spacing_delta / T0
    np.testing.assert_allclose(gram, np.eye(6), atol=1e-14)


def test_basis_gaussian_nearly_orthonormal():
    grid = TimeGrid.for_slots(6, T0, 256)
    F = basis_matrix(PulseEnvelope.gaussian(T0, T0 / 10), grid, SlotLayout.centered(6, T0))
    gram = F @ F.T * grid.spacing_delta / T0
    np.testing.assert_allclose(np.diag(gram)[1:-1], 1.0, rtol=1e-12)
    assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-10


def test_synthesize_signal():
    grid = TimeGrid.for_slots(3, T0, 32)
    env = PulseEnvelope.rectangular(T0)
    sig = synthesize_signal(SymbolSequence([1.0, 2j, -1.0]), env, grid)
    x = sig.samples
    assert np.all(x[:32] == 1.0) and np.all(x[32:64] == 2j) and np.all(x[64:] == -1.0)
    with pytest.raises(LayoutError):
        synthesize_signal(SymbolSequence([1.0]), env, grid, SlotLayout.centered(3, T0))
