"""Closed-form channel statistics and information-theoretic quantities.

Correlators of the detected coefficients, the per-sample and per-coefficient
conditional densities, entropies, the optimal input distribution and the
capacity with its small- and large-power asymptotics.  Everything is in nats.

Input densities are circularly symmetric and are described as functions of
u = |C|^2; the area element is d^2C = (1/2) du dphi, so a density p(u) is
normalised when pi * integral p(u) du = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from kerrchannel.channel import ChannelParams
from kerrchannel.errors import DomainError, SolverError
from kerrchannel.pulses import EnvelopeMoments

LO = "LO"
NLO = "NLO"

NORMALIZATION_TOL = 1e-6
_QUAD_RTOL = 1e-12


def _order(order: str) -> str:
    o = str(order).upper()
    if o not in (LO, NLO):
        raise DomainError(f"order must be 'LO' or 'NLO', got {order!r}")
    return o


def _t0(channel: ChannelParams, T0: Optional[float]) -> float:
    return channel.slot_T0 if T0 is None else T0


# correlators


def mean_correlator_lo(C, channel: ChannelParams, delta: float, n4: float):
    """<C~> = C - i C (Q L^2 gamma / delta) (1 - i gamma L |C|^2 n4 / 3)."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    C = np.asarray(C, dtype=complex)
    eps = channel.noise_Q * channel.length_L**2 * channel.gamma / delta
    mu = channel.gamma_L * np.abs(C) ** 2
    out = C - 1j * C * eps * (1.0 - 1j * mu * n4 / 3.0)
    return out[()] if out.ndim == 0 else out


def _kappa(channel: ChannelParams, T0: float) -> float:
    # Q L^2 gamma / T0, dimensionless
    return channel.noise_Q * channel.length_L**2 * channel.gamma / T0


def pseudo_variance(
    C,
    channel: ChannelParams,
    T0: Optional[float],
    delta: float,
    moments: EnvelopeMoments,
    order: str = LO,
):
    """<(C~ - <C~>)^2> for one slot, W.

    ``order="NLO"`` adds the correction carrying one factor T0/delta; it needs
    ``moments.n8``.
    """
    order = _order(order)
    T0 = _t0(channel, T0)
    C = np.asarray(C, dtype=complex)
    K = _kappa(channel, T0)
    mu = channel.gamma_L * np.abs(C) ** 2
    out = -1j * C**2 * K * (moments.n4 - 2j * moments.n6 * mu / 3.0)
    if order == NLO:
        if moments.n8 is None:
            raise DomainError("NLO correlators need n8")
        out = out + K**2 * (T0 / delta) * C**2 * (
            -4.5 * moments.n4 + 2.0 * moments.n8 * mu**2 / 3.0 + 1j * 58.0 * moments.n6 * mu / 15.0
        )
    return out[()] if out.ndim == 0 else out


def variance(
    C,
    channel: ChannelParams,
    T0: Optional[float],
    delta: float,
    moments: EnvelopeMoments,
    order: str = LO,
):
    """<|C~ - <C~>|^2> for one slot, W."""
    order = _order(order)
    T0 = _t0(channel, T0)
    p = np.abs(np.asarray(C, dtype=complex)) ** 2
    mu = channel.gamma_L * p
    out = channel.noise_Q * channel.length_L / T0 * (1.0 + 2.0 * moments.n6 * mu**2 / 3.0)
    if order == NLO:
        if moments.n8 is None:
            raise DomainError("NLO correlators need n8")
        K = _kappa(channel, T0)
        out = out + K**2 * (T0 / delta) * p * (moments.n4 - 2.0 * moments.n8 * mu**2 / 9.0)
    return out[()] if np.ndim(out) == 0 else out


def correlator_table(
    P: float, channel: ChannelParams, T0: Optional[float], delta: float, moments: EnvelopeMoments
) -> dict:
    """Predicted correlators at |C|^2 = P in the frame where C is real.

    Keys follow the Monte Carlo columns with ``lo_`` and ``nlo_`` prefixes;
    ``nlo_`` values are LO+NLO totals.  The mean shift is known only at LO.
    """
    c = math.sqrt(P)
    ms = complex(mean_correlator_lo(c, channel, delta, moments.n4)) - c
    row = {}
    for order in (LO, NLO):
        tag = order.lower()
        pv = complex(pseudo_variance(c, channel, T0, delta, moments, order))
        row.update({
            f"{tag}_re_mean_shift": ms.real,
            f"{tag}_im_mean_shift": ms.imag,
            f"{tag}_re_pv": pv.real,
            f"{tag}_im_pv": pv.imag,
            f"{tag}_var": float(variance(c, channel, T0, delta, moments, order)),
        })
    return row


def variance_nlo_sign_change(channel: ChannelParams, moments: EnvelopeMoments) -> float:
    """|C|^2 at which the NLO variance correction changes sign, W."""
    return math.sqrt(9.0 * moments.n4 / (2.0 * moments.n8)) / channel.gamma_L


# conditional densities


def per_sample_pdf_xy(x, y, rho, channel: ChannelParams, delta: float):
    """Per-sample density in the rotated frame of the noiseless output.

    ``x``, ``y`` are Re/Im of Y exp(-i phi - i mu) - rho.  Leading and
    next-to-leading order in sqrt(Q); may dip below zero in far tails.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gl = channel.gamma_L
    mu = gl * rho * rho
    s = channel.noise_Q * channel.length_L / delta  # per-sample noise power QL/delta
    a = 1.0 + mu * mu / 3.0
    quad = (1.0 + 4.0 * mu * mu / 3.0) * x * x - 2.0 * mu * x * y + y * y
    lead = np.exp(-quad / (s * a)) / (math.pi * s * math.sqrt(a))
    # mu/rho written as gamma*L*rho so rho = 0 is harmless
    m_over_rho = gl * rho
    mu2, mu4 = mu * mu, mu**4
    first = m_over_rho / (15.0 * a * a) * (mu * (15.0 + mu2) * x - 2.0 * (5.0 - mu2 / 3.0) * y)
    cubic = (
        mu * (4.0 * mu4 + 15.0 * mu2 + 225.0) * x**3
        + (23.0 * mu4 + 255.0 * mu2 - 90.0) * x * x * y
        + mu * (20.0 * mu4 + 117.0 * mu2 - 45.0) * x * y * y
        - 3.0 * (5.0 * mu4 + 33.0 * mu2 + 30.0) * y**3
    )
    second = m_over_rho / (135.0 * s * a**3) * cubic
    return lead * (1.0 - first - second)


def per_sample_pdf(Y, X, channel: ChannelParams, delta: float):
    """P[Y|X] for one time sample with noise parameter Q/delta, 1/W."""
    X = complex(X)
    rho = abs(X)
    phi = math.atan2(X.imag, X.real)
    mu = channel.gamma_L * rho * rho
    w = np.asarray(Y, dtype=complex) * np.exp(-1j * (phi + mu)) - rho
    return per_sample_pdf_xy(w.real, w.imag, rho, channel, delta)


def coefficient_drift(C, channel: ChannelParams, T0: float, n4: float, delta: Optional[float] = None):
    """Shift i C (Q L^2 gamma / tau)(1 - i gamma L |C|^2 n4 / 3) used to centre the density.

    ``tau`` is T0 unless ``delta`` is given.
    """
    tau = T0 if delta is None else delta
    C = np.asarray(C, dtype=complex)
    mu = channel.gamma_L * np.abs(C) ** 2
    return 1j * C * (channel.noise_Q * channel.length_L**2 * channel.gamma / tau) * (
        1.0 - 1j * mu * n4 / 3.0
    )


def coefficient_frame(C_tilde, C, channel: ChannelParams, T0: float, n4: float, delta=None):
    """Coordinates (x_m, y_m): rotated, drift-corrected deviation of C~ from C."""
    C = complex(C)
    phi = math.atan2(C.imag, C.real)
    w = np.exp(-1j * phi) * (
        np.asarray(C_tilde, dtype=complex) - C + coefficient_drift(C, channel, T0, n4, delta)
    )
    return w.real, w.imag


def coefficient_pdf_xy(x, y, mu: float, channel: ChannelParams, T0: float, moments: EnvelopeMoments):
    s = channel.noise_Q * channel.length_L / T0
    det = 1.0 + moments.xi**2 * mu * mu / 3.0
    quad = (1.0 + 4.0 * moments.n6 * mu * mu / 3.0) * x * x + 2.0 * x * y * mu * moments.n4 + y * y
    return np.exp(-quad / (s * det)) / (math.pi * s * math.sqrt(det))


def coefficient_pdf(
    C_tilde,
    C,
    channel: ChannelParams,
    T0: Optional[float],
    moments: EnvelopeMoments,
    delta: Optional[float] = None,
):
    """P_m[C~|C]: Gaussian density of one detected coefficient, leading order in Q."""
    T0 = _t0(channel, T0)
    x, y = coefficient_frame(C_tilde, C, channel, T0, moments.n4, delta)
    mu = channel.gamma_L * abs(complex(C)) ** 2
    return coefficient_pdf_xy(x, y, mu, channel, T0, moments)


def coefficient_covariance(C, channel: ChannelParams, T0: Optional[float], moments: EnvelopeMoments) -> np.ndarray:
    """2x2 covariance of (x_m, y_m) implied by the coefficient density."""
    T0 = _t0(channel, T0)
    mu = channel.gamma_L * abs(complex(C)) ** 2
    half = channel.noise_Q * channel.length_L / (2.0 * T0)
    b = mu * moments.n4
    a = 1.0 + 4.0 * moments.n6 * mu * mu / 3.0
    return half * np.array([[1.0, -b], [-b, a]])


# input densities


@dataclass(frozen=True)
class GaussianInput:
    """Circular Gaussian input of power P: p(u) = exp(-u/P)/(pi P)."""

    P: float

    def pdf(self, u):
        return np.exp(-np.asarray(u) / self.P) / (math.pi * self.P)

    def log_pdf(self, u):
        return -np.asarray(u) / self.P - math.log(math.pi * self.P)

    def quadrature_hint(self) -> tuple[list[float], float]:
        return [self.P], 60.0 * self.P


@dataclass(frozen=True)
class OptimalInputDistribution:
    """p(u) = N0 exp(-lambda0 u) / sqrt(1 + (xi gamma L)^2 u^2 / 3)."""

    N0: float
    lambda0: float
    P: float
    xi_gamma_L: float

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        return self.N0 * np.exp(-self.lambda0 * u) / np.hypot(1.0, self.xi_gamma_L * u / math.sqrt(3.0))

    def log_pdf(self, u):
        u = np.asarray(u, dtype=float)
        return math.log(self.N0) - self.lambda0 * u - np.log(np.hypot(1.0, self.xi_gamma_L * u / math.sqrt(3.0)))

    def quadrature_hint(self) -> tuple[list[float], float]:
        points = [self.P, 1.0 / self.lambda0]
        if self.xi_gamma_L > 0:
            points.append(math.sqrt(3.0) / self.xi_gamma_L)
        return points, 40.0 / self.lambda0

    def residuals(self) -> tuple[float, float]:
        """Relative residuals of the normalisation and power constraints."""
        norm = radial_integral(self.pdf, *self.quadrature_hint())
        power = radial_integral(lambda u: u * self.pdf(u), *self.quadrature_hint())
        return abs(norm - 1.0), abs(power / self.P - 1.0)


@dataclass(frozen=True)
class RadialDensity:
    """Wraps an arbitrary callable p(u); ``scale`` is its typical |C|^2."""

    func: Callable
    scale: float
    extra_points: Sequence[float] = ()

    def pdf(self, u):
        return self.func(np.asarray(u, dtype=float))

    def log_pdf(self, u):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(u))

    def quadrature_hint(self) -> tuple[list[float], float]:
        return [self.scale, *self.extra_points], 80.0 * self.scale


def radial_integral(g: Callable, points: Sequence[float], upper: float) -> float:
    """pi * integral of g(u) du over [0, upper], upper standing in for infinity.

    The integral is taken in log u above a small cutoff so that structure on
    scales from the nonlinear knee to the exponential tail is resolved.
    """
    pts = sorted(p for p in points if 0 < p < upper)
    lo = 1e-8 * (pts[0] if pts else upper)
    head, _ = integrate.quad(lambda u: float(g(u)), 0.0, lo, epsabs=0.0, epsrel=_QUAD_RTOL, limit=100)
    log_pts = [math.log(p) for p in pts]
    tail, _ = integrate.quad(
        lambda s: float(g(math.exp(s)) * math.exp(s)),
        math.log(lo),
        math.log(upper),
        points=log_pts or None,
        epsabs=0.0,
        epsrel=_QUAD_RTOL,
        limit=500,
    )
    return math.pi * (head + tail)


def _hint(dist, P: Optional[float] = None):
    if hasattr(dist, "quadrature_hint"):
        return dist.quadrature_hint()
    scale = P if P is not None else 1.0
    return [scale], 80.0 * scale


def _as_density(dist, P: Optional[float]):
    if hasattr(dist, "pdf"):
        return dist
    if callable(dist):
        if P is None:
            raise DomainError("a bare density callable needs the power scale P")
        return RadialDensity(dist, P)
    raise DomainError(f"not an input density: {dist!r}")


def _check_normalized(dist) -> None:
    total = radial_integral(dist.pdf, *_hint(dist))
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise DomainError(f"input density integrates to {total:.9g}, not 1")


def input_entropy(dist, P: Optional[float] = None) -> float:
    """H[C] = -integral p log p d^2C, nats."""
    dist = _as_density(dist, P)

    def g(u):
        p = float(dist.pdf(u))
        return -p * float(dist.log_pdf(u)) if p > 0 else 0.0

    return radial_integral(g, *_hint(dist))


def conditional_entropy(
    P: float,
    dist,
    channel: ChannelParams,
    T0: Optional[float],
    xi: float,
) -> float:
    """H[C~|C] = 1 + log(pi Q L/T0) + (1/2) <log(1 + xi^2 gamma^2 L^2 |C|^4 / 3)>.

    ``dist`` may be ``None`` (the optimal distribution at power P), an object
    with ``pdf(u)``, or a bare callable of u = |C|^2.
    """
    T0 = _t0(channel, T0)
    if dist is None:
        dist = solve_optimal_distribution(P, xi * channel.gamma_L)
    dist = _as_density(dist, P)
    _check_normalized(dist)
    base = 1.0 + math.log(math.pi * channel.noise_Q * channel.length_L / T0)
    a2 = (xi * channel.gamma_L) ** 2 / 3.0
    if a2 == 0.0:
        return base
    avg = radial_integral(lambda u: float(dist.pdf(u)) * math.log1p(a2 * u * u), *_hint(dist))
    return base + 0.5 * avg


def mutual_information(
    dist,
    channel: ChannelParams,
    T0: Optional[float],
    xi: float,
    P: Optional[float] = None,
) -> float:
    """I = H[C] - H[C~|C], using H[C~] = H[C] at leading order."""
    dist = _as_density(dist, P)
    scale = P if P is not None else getattr(dist, "P", None)
    return input_entropy(dist, scale) - conditional_entropy(scale, dist, channel, T0, xi)


# optimal input distribution and capacity


def _scaled_moments(t: float, kappa: float) -> tuple[float, float]:
    # J_k = integral v^k exp(-t v) / sqrt(1 + kappa^2 v^2) dv, v = u/P
    points = [1.0 / t]
    if kappa > 0:
        points.append(1.0 / kappa)
    upper = 40.0 / t
    j0 = radial_integral(lambda v: math.exp(-t * v) / math.hypot(1.0, kappa * v), points, upper)
    j1 = radial_integral(lambda v: v * math.exp(-t * v) / math.hypot(1.0, kappa * v), points, upper)
    return j0 / math.pi, j1 / math.pi


def solve_optimal_distribution(P: float, xi_gamma_L: float, max_expansions: int = 12) -> OptimalInputDistribution:
    """Solve the normalisation and power constraints for (N0, lambda0).

    In the scaled variable t = lambda0*P the power constraint reads
    J1(t)/J0(t) = 1, with J1/J0 strictly decreasing in t; it is bracketed on
    [1e-3, 1e3] (expanded geometrically if needed) and solved by Brent's
    method.  N0 then follows from the normalisation.
    """
    if not P > 0:
        raise DomainError(f"power must be positive, got {P!r}")
    if not xi_gamma_L >= 0:
        raise DomainError("xi*gamma*L must be non-negative")
    if xi_gamma_L == 0:
        return OptimalInputDistribution(N0=1.0 / (math.pi * P), lambda0=1.0 / P, P=P, xi_gamma_L=0.0)
    kappa = xi_gamma_L * P / math.sqrt(3.0)

    def f(t):
        j0, j1 = _scaled_moments(t, kappa)
        return j1 / j0 - 1.0

    lo, hi = 1e-3, 1e3
    flo, fhi = f(lo), f(hi)
    for _ in range(max_expansions):
        if flo > 0 and fhi < 0:
            break
        if flo <= 0:
            lo /= 10.0
            flo = f(lo)
        if fhi >= 0:
            hi *= 10.0
            fhi = f(hi)
    else:
        raise SolverError(
            f"cannot bracket lambda0*P for P={P!r}, xi*gamma*L={xi_gamma_L!r}: "
            f"f({lo:g})={flo:g}, f({hi:g})={fhi:g}"
        )
    try:
        t = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (RuntimeError, ValueError) as exc:
        raise SolverError(f"root finding for lambda0 failed: {exc}") from exc
    j0, _ = _scaled_moments(t, kappa)
    return OptimalInputDistribution(N0=1.0 / (math.pi * P * j0), lambda0=t / P, P=P, xi_gamma_L=xi_gamma_L)


def shannon_capacity(P: float, channel: ChannelParams, T0: Optional[float] = None) -> float:
    """log(P T0 / (Q L)), the linear-channel capacity at high SNR."""
    return math.log(P * _t0(channel, T0) / (channel.noise_Q * channel.length_L))


def capacity(P: float, channel: ChannelParams, T0: Optional[float], xi: float, dist=None) -> float:
    """C = log(P T0/(pi e Q L)) + P lambda0 - log(P N0), nats per symbol."""
    T0 = _t0(channel, T0)
    if dist is None:
        dist = solve_optimal_distribution(P, xi * channel.gamma_L)
    return (
        math.log(P * T0 / (math.pi * math.e * channel.noise_Q * channel.length_L))
        + P * dist.lambda0
        - math.log(P * dist.N0)
    )


@dataclass(frozen=True)
class AsymptoticConstants:
    gamma_E: float = float(np.euler_gamma)

    @property
    def B(self) -> float:
        return 2.0 * math.exp(-self.gamma_E)


SMALL = "small"
LARGE = "large"


def capacity_asymptotic(
    P: float,
    channel: ChannelParams,
    T0: Optional[float],
    xi: float,
    regime: str,
    constants: AsymptoticConstants = AsymptoticConstants(),
) -> float:
    """Closed-form capacity for xi*gamma*L*P << 1 (``small``) or log(xi*gamma*L*P) >> 1 (``large``).

    The large-power form is accurate to O(1/log^2(xi gamma L P)), see
    :func:`large_asymptote_accuracy`.
    """
    T0 = _t0(channel, T0)
    xgl = xi * channel.gamma_L
    if regime == SMALL:
        return shannon_capacity(P, channel, T0) - (xgl * P) ** 2 / 3.0
    if regime != LARGE:
        raise DomainError(f"regime must be 'small' or 'large', got {regime!r}")
    A = constants.B * xgl * P / math.sqrt(3.0)
    if not A > math.e:
        raise DomainError(f"B*xi*gamma*L*P/sqrt(3) = {A:.4g} <= e; large-power form undefined")
    ell = math.log(A)
    lnell = math.log(ell)
    # log(Q L^2 xi gamma e / (sqrt(3) T0))
    offset = math.log(channel.noise_Q * channel.length_L * xgl * math.e / (math.sqrt(3.0) * T0))
    return lnell - offset + (lnell + 1.0 - lnell / ell) / ell


def large_asymptote_accuracy(P: float, xi_gamma_L: float) -> float:
    """Nominal error scale 1/log^2(xi gamma L P) of the large-power form."""
    return 1.0 / math.log(xi_gamma_L * P) ** 2
