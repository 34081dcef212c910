"""Quadrature and histogram checks of the conditional densities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from kerrchannel import analytic
from kerrchannel.channel import ChannelParams
from kerrchannel.errors import DomainError
from kerrchannel.propagation import RungeKutta, rk4_fields
from kerrchannel.pulses import EnvelopeMoments
from kerrchannel.rng import stream

_NODES = 160


def _principal_box_integral(func, cov: np.ndarray, sigmas: float, nodes: int = _NODES) -> float:
    """Integral of func(x, y) over a +-sigmas box aligned with the principal axes of ``cov``.

    Tensor Gauss-Legendre in the rotated coordinates (unit Jacobian).
    """
    w, V = np.linalg.eigh(cov)
    if np.any(w <= 0):
        raise DomainError("covariance must be positive definite")
    z, wz = np.polynomial.legendre.leggauss(nodes)
    half = sigmas * np.sqrt(w)
    a = z[:, None] * half[0]
    b = z[None, :] * half[1]
    x = V[0, 0] * a + V[0, 1] * b
    y = V[1, 0] * a + V[1, 1] * b
    weights = np.outer(wz, wz) * half[0] * half[1]
    return float(np.sum(weights * func(x, y)))


def coefficient_pdf_residual(
    mu: float,
    channel: ChannelParams,
    moments: EnvelopeMoments,
    T0: float | None = None,
    sigmas: float = 12.0,
) -> float:
    """|integral of the coefficient density - 1| at nonlinear phase mu = gamma L |C|^2."""
    T0 = channel.slot_T0 if T0 is None else T0
    if mu > 0 and channel.gamma_L == 0:
        raise DomainError("mu > 0 needs gamma > 0")
    C = math.sqrt(mu / channel.gamma_L) if mu > 0 else 0.0
    cov = analytic.coefficient_covariance(C, channel, T0, moments)
    total = _principal_box_integral(
        lambda x, y: analytic.coefficient_pdf_xy(x, y, mu, channel, T0, moments), cov, sigmas
    )
    return abs(total - 1.0)


def per_sample_covariance(mu: float, channel: ChannelParams, delta: float) -> np.ndarray:
    """Covariance of (x, y) under the leading Gaussian factor of the per-sample density."""
    s = channel.linear_noise_power(delta)
    return 0.5 * s * np.array([[1.0, mu], [mu, 1.0 + 4.0 * mu * mu / 3.0]])


def per_sample_pdf_residual(mu: float, channel: ChannelParams, delta: float, sigmas: float = 6.0) -> float:
    """|integral of the per-sample density over the +-sigmas core - 1|."""
    if mu > 0 and channel.gamma_L == 0:
        raise DomainError("mu > 0 needs gamma > 0")
    rho = math.sqrt(mu / channel.gamma_L) if mu > 0 else 0.0
    cov = per_sample_covariance(mu, channel, delta)
    total = _principal_box_integral(
        lambda x, y: analytic.per_sample_pdf_xy(x, y, rho, channel, delta), cov, sigmas
    )
    return abs(total - 1.0)


@dataclass(frozen=True)
class HistogramCheck:
    chi2: float
    dof: int
    samples: int

    @property
    def reduced(self) -> float:
        return self.chi2 / self.dof

    @property
    def p_value(self) -> float:
        return float(stats.chi2.sf(self.chi2, self.dof))


def per_sample_outputs(
    mu: float,
    channel: ChannelParams,
    delta: float,
    samples: int,
    seed: int,
    segments: int = 200,
    batch: int = 8192,
) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) of RK4-propagated per-sample outputs in the rotated frame."""
    rho = math.sqrt(mu / channel.gamma_L)
    cfg = RungeKutta.for_line(channel.length_L, segments, 1)
    sigma2 = channel.noise_Q / (2.0 * delta * cfg.segment_dz)
    out = []
    for i, first in enumerate(range(0, samples, batch)):
        m = min(batch, samples - first)
        y = rk4_fields(np.full((1, m), rho, dtype=complex), channel.gamma, channel.length_L, cfg, sigma2, [stream(seed, i)])
        out.append(y[0])
    Y = np.concatenate(out)
    w = Y * np.exp(-1j * mu) - rho
    return w.real, w.imag


def histogram_chi2(
    mu: float,
    channel: ChannelParams,
    delta: float,
    samples: int = 100_000,
    bins: int = 32,
    seed: int = 0,
    half_width: float = 3.5,
    min_expected: float = 5.0,
) -> HistogramCheck:
    """Pearson chi-square of a bins x bins histogram of RK4 outputs against the per-sample density.

    The box spans +-half_width standard deviations per coordinate; expected
    counts integrate the density over each bin (4x4 Gauss-Legendre) and are
    scaled to the in-box sample count.
    """
    x, y = per_sample_outputs(mu, channel, delta, samples, seed)
    rho = math.sqrt(mu / channel.gamma_L)
    cov = per_sample_covariance(mu, channel, delta)
    ex = np.linspace(-1, 1, bins + 1) * half_width * math.sqrt(cov[0, 0])
    ey = np.linspace(-1, 1, bins + 1) * half_width * math.sqrt(cov[1, 1])
    observed, _, _ = np.histogram2d(x, y, bins=(ex, ey))
    z, wz = np.polynomial.legendre.leggauss(4)
    cx, hx = 0.5 * (ex[1:] + ex[:-1]), 0.5 * np.diff(ex)
    cy, hy = 0.5 * (ey[1:] + ey[:-1]), 0.5 * np.diff(ey)
    px = (cx[:, None] + hx[:, None] * z[None, :])[:, None, :, None]
    py = (cy[:, None] + hy[:, None] * z[None, :])[None, :, None, :]
    dens = analytic.per_sample_pdf_xy(px, py, rho, channel, delta)
    mass = np.einsum("ijkl,k,l->ij", dens, wz, wz) * hx[:, None] * hy[None, :]
    expected = mass / mass.sum() * observed.sum()
    keep = expected >= min_expected
    chi2 = float(np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep]))
    return HistogramCheck(chi2=chi2, dof=int(keep.sum()) - 1, samples=samples)
