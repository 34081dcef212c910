"""Noise generation and integration of the zero-dispersion stochastic NLSE.

    d psi/dz = i gamma |psi|^2 psi + eta(z, t)

Without dispersion every grid sample evolves on its own, so two integrators are
offered:

* split-step: exact nonlinear phase rotation per z-step, with band-limited noise
  injected in the frequency domain (every bin of the 2M-point grid);
* RK4 + telegraph noise: classical fourth-order Runge-Kutta per sample, driven
  by noise that is piecewise constant over segments of length ``segment_dz``.

Noise contract for the split-step: each step of length h adds, per time sample,
independent complex Gaussian noise of variance Q*h/delta.  Bins are drawn with
complex variance h*Q/T and mapped to time with an unnormalised inverse DFT
(``norm="forward"``), which yields exactly that variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numba as nb
import numpy as np
import scipy.fft as sfft

from kerrchannel import rng as rngmod
from kerrchannel.channel import ChannelParams, ComplexSignal
from kerrchannel.errors import ConfigError

SPLIT_STEP_PRESETS = (100, 200, 400, 800)
SCHEMES = ("strang", "lie")


# noise and integrator descriptions


@dataclass(frozen=True)
class SpectralNoise:
    """Band-limited noise injected per z-step in the frequency domain."""

    Q: float
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not self.Q > 0:
            raise ConfigError("spectral noise needs Q > 0")

    def effective_q(self, delta: float) -> float:
        return self.Q

    def generator(self) -> np.random.Generator:
        return rngmod.stream(self.seed, self.stream_id, rngmod.NOISE)

    def to_dict(self) -> dict:
        return {"variant": "spectral", "Q": self.Q, "seed": self.seed, "stream_id": self.stream_id}


@dataclass(frozen=True)
class TelegraphNoise:
    """Piecewise-constant noise; each quadrature has variance ``sigma2`` (W/km^2)."""

    sigma2: float
    segment_dz: float
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not (self.sigma2 > 0 and self.segment_dz > 0):
            raise ConfigError("telegraph noise needs sigma2 > 0 and segment_dz > 0")

    @classmethod
    def for_q(cls, Q: float, delta: float, segment_dz: float, **kw) -> "TelegraphNoise":
        """Telegraph noise equivalent to band-limited noise of parameter Q."""
        return cls(sigma2=Q / (2.0 * delta * segment_dz), segment_dz=segment_dz, **kw)

    def effective_q(self, delta: float) -> float:
        """Q = 2 sigma2 delta dz, W/(km*Hz)."""
        return 2.0 * self.sigma2 * delta * self.segment_dz

    def generator(self) -> np.random.Generator:
        return rngmod.stream(self.seed, self.stream_id, rngmod.NOISE)

    def to_dict(self) -> dict:
        return {
            "variant": "telegraph",
            "sigma2": self.sigma2,
            "segment_dz": self.segment_dz,
            "seed": self.seed,
            "stream_id": self.stream_id,
        }


NoiseSpec = Union[SpectralNoise, TelegraphNoise]


@dataclass(frozen=True)
class SplitStep:
    """Split-step z-mesh.

    ``scheme="strang"`` brackets each noise injection by half-step rotations;
    ``scheme="lie"`` rotates a full step and then injects, exactly in the
    order rotation-then-noise.  Both are exact at zero noise.
    """

    z_steps: int
    scheme: str = "strang"

    def __post_init__(self) -> None:
        if int(self.z_steps) != self.z_steps or self.z_steps < 1:
            raise ConfigError("z_steps must be a positive integer")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")

    def to_dict(self) -> dict:
        return {"variant": "split-step", "z_steps": self.z_steps, "scheme": self.scheme}


@dataclass(frozen=True)
class RungeKutta:
    """RK4 over telegraph segments of length ``segment_dz`` with ``substeps`` steps each."""

    segment_dz: float
    substeps: int = 50

    def __post_init__(self) -> None:
        if not self.segment_dz > 0:
            raise ConfigError("segment_dz must be positive")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigError("substeps must be a positive integer")

    @classmethod
    def for_line(cls, length_L: float, segments: int = 10_000, substeps: int = 50) -> "RungeKutta":
        return cls(segment_dz=length_L / segments, substeps=substeps)

    def segments(self, length_L: float) -> int:
        n = round(length_L / self.segment_dz)
        if n < 1 or abs(n * self.segment_dz - length_L) > 1e-9 * length_L:
            raise ConfigError(
                f"segment_dz = {self.segment_dz} km does not divide L = {length_L} km"
            )
        return n

    def to_dict(self) -> dict:
        return {"variant": "rk4", "segment_dz": self.segment_dz, "substeps": self.substeps}


IntegratorConfig = Union[SplitStep, RungeKutta]


# kernels


@nb.njit(cache=True)
def _rotate(psi, gh):
    # psi *= exp(i*gh*|psi|^2) in place; psi is (batch, samples)
    for i in range(psi.shape[0]):
        for j in range(psi.shape[1]):
            p = psi[i, j]
            a = gh * (p.real * p.real + p.imag * p.imag)
            psi[i, j] = p * complex(math.cos(a), math.sin(a))


@nb.njit(cache=True)
def _rk4_segments(psi, eta, g, h, substeps):
    # eta[s, j]: telegraph height of segment s for sample j
    nseg, m = eta.shape
    for j in range(psi.shape[0]):
        p = psi[j]
        for s in range(nseg):
            e = eta[s, j]
            for _ in range(substeps):
                k1 = 1j * g * (p.real * p.real + p.imag * p.imag) * p + e
                q = p + 0.5 * h * k1
                k2 = 1j * g * (q.real * q.real + q.imag * q.imag) * q + e
                q = p + 0.5 * h * k2
                k3 = 1j * g * (q.real * q.real + q.imag * q.imag) * q + e
                q = p + h * k3
                k4 = 1j * g * (q.real * q.real + q.imag * q.imag) * q + e
                p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        psi[j] = p


@nb.njit(cache=True)
def _rk4_noiseless(psi, g, h, steps):
    for j in range(psi.shape[0]):
        p = psi[j]
        for _ in range(steps):
            k1 = 1j * g * (p.real * p.real + p.imag * p.imag) * p
            q = p + 0.5 * h * k1
            k2 = 1j * g * (q.real * q.real + q.imag * q.imag) * q
            q = p + 0.5 * h * k2
            k3 = 1j * g * (q.real * q.real + q.imag * q.imag) * q
            q = p + h * k3
            k4 = 1j * g * (q.real * q.real + q.imag * q.imag) * q
            p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        psi[j] = p


# deterministic map


def propagate_noiseless(input, params: ChannelParams, z: Optional[float] = None):
    """Exact zero-noise solution psi(z) = X exp(i gamma z |X|^2).

    Accepts a :class:`ComplexSignal` or a plain array and returns the same type.
    """
    z = params.length_L if z is None else z
    x = input.samples if isinstance(input, ComplexSignal) else np.asarray(input, dtype=complex)
    out = x * np.exp(1j * params.gamma * z * (x.real**2 + x.imag**2))
    return input.with_samples(out) if isinstance(input, ComplexSignal) else out


# split-step


def spectral_noise_block(rng: np.random.Generator, n: int, step_variance: float) -> np.ndarray:
    """Time-domain noise for one step: bins of variance v/n, unnormalised inverse DFT.

    ``step_variance`` is the per-sample complex variance Q*h/delta; the bin
    variance is therefore Q*h/T.
    """
    bins = rng.standard_normal(2 * n).view(np.complex128)
    bins *= math.sqrt(step_variance / n / 2.0)
    return sfft.ifft(bins, norm="forward")


def split_step_fields(
    fields: np.ndarray,
    gamma: float,
    length_L: float,
    delta: float,
    noise_q: float,
    z_steps: int,
    scheme: str = "strang",
    rngs: Optional[Sequence[np.random.Generator]] = None,
) -> np.ndarray:
    """Propagate a batch of fields (rows) through the line.

    Row ``b`` draws its noise from ``rngs[b]`` only, so results per row do not
    depend on the batch composition.  ``rngs=None`` propagates without noise.
    """
    psi = np.array(np.atleast_2d(fields), dtype=np.complex128, order="C")
    batch, n = psi.shape
    if rngs is not None and len(rngs) != batch:
        raise ConfigError(f"need one generator per row ({batch}), got {len(rngs)}")
    h = length_L / z_steps
    v = noise_q * h / delta
    noise = np.empty_like(psi)

    def inject():
        if rngs is None:
            return
        for b in range(batch):
            noise[b] = spectral_noise_block(rngs[b], n, v)
        np.add(psi, noise, out=psi)

    if scheme == "lie":
        for _ in range(z_steps):
            _rotate(psi, gamma * h)
            inject()
    elif scheme == "strang":
        _rotate(psi, 0.5 * gamma * h)
        for k in range(z_steps):
            inject()
            _rotate(psi, (0.5 if k == z_steps - 1 else 1.0) * gamma * h)
    else:
        raise ConfigError(f"unknown split-step scheme {scheme!r}")
    return psi


def propagate_split_step(
    input: ComplexSignal,
    params: ChannelParams,
    noise: SpectralNoise,
    config: SplitStep,
    rng: Optional[np.random.Generator] = None,
) -> ComplexSignal:
    if not isinstance(noise, SpectralNoise) or not isinstance(config, SplitStep):
        raise ConfigError("split-step propagation needs SpectralNoise and a SplitStep config")
    rng = noise.generator() if rng is None else rng
    out = split_step_fields(
        input.samples,
        params.gamma,
        params.length_L,
        input.grid.spacing_delta,
        noise.Q,
        config.z_steps,
        config.scheme,
        [rng],
    )
    return input.with_samples(out[0])


# RK4 with telegraph noise


def telegraph_noise_block(
    rng: np.random.Generator, segments: int, m: int, sigma2: float
) -> np.ndarray:
    """Segment-major telegraph heights, shape (segments, m)."""
    eta = rng.standard_normal(2 * segments * m).view(np.complex128).reshape(segments, m)
    eta *= math.sqrt(sigma2)
    return eta


def rk4_fields(
    fields: np.ndarray,
    gamma: float,
    length_L: float,
    config: RungeKutta,
    sigma2: float = 0.0,
    rngs: Optional[Sequence[np.random.Generator]] = None,
) -> np.ndarray:
    """RK4 propagation of a batch of sample vectors (rows), one generator per row."""
    psi = np.array(np.atleast_2d(fields), dtype=np.complex128, order="C")
    batch, m = psi.shape
    segments = config.segments(length_L)
    h = config.segment_dz / config.substeps
    if rngs is None or sigma2 == 0.0:
        for b in range(batch):
            _rk4_noiseless(psi[b], gamma, h, segments * config.substeps)
        return psi
    if len(rngs) != batch:
        raise ConfigError(f"need one generator per row ({batch}), got {len(rngs)}")
    for b in range(batch):
        eta = telegraph_noise_block(rngs[b], segments, m, sigma2)
        _rk4_segments(psi[b], eta, gamma, h, config.substeps)
    return psi


def propagate_rk4(
    input: ComplexSignal,
    params: ChannelParams,
    noise: Optional[TelegraphNoise],
    config: RungeKutta,
    rng: Optional[np.random.Generator] = None,
) -> ComplexSignal:
    """RK4 propagation of every sample of a signal (``noise=None`` for zero noise)."""
    if noise is not None:
        _check_segment(noise, config)
        rng = noise.generator() if rng is None else rng
    out = rk4_fields(
        input.samples,
        params.gamma,
        params.length_L,
        config,
        0.0 if noise is None else noise.sigma2,
        None if noise is None else [rng],
    )
    return input.with_samples(out[0])


def propagate_rk4_sample(
    x0: complex,
    params: ChannelParams,
    noise: Optional[TelegraphNoise],
    config: RungeKutta,
    rng: Optional[np.random.Generator] = None,
) -> complex:
    """Integrate d psi/dz = i gamma |psi|^2 psi + eta for a single sample."""
    if noise is not None:
        _check_segment(noise, config)
        rng = noise.generator() if rng is None else rng
    out = rk4_fields(
        np.array([x0], dtype=complex),
        params.gamma,
        params.length_L,
        config,
        0.0 if noise is None else noise.sigma2,
        None if noise is None else [rng],
    )
    return complex(out[0, 0])


def _check_segment(noise: TelegraphNoise, config: RungeKutta) -> None:
    if not isinstance(noise, TelegraphNoise):
        raise ConfigError("RK4 propagation needs TelegraphNoise")
    if abs(noise.segment_dz - config.segment_dz) > 1e-12 * config.segment_dz:
        raise ConfigError("noise segment length and integrator segment length differ")


# accuracy check


def _forward_noiseless(samples: np.ndarray, params: ChannelParams, config) -> np.ndarray:
    if isinstance(config, SplitStep):
        return split_step_fields(
            samples, params.gamma, params.length_L, 1.0, 0.0, config.z_steps, config.scheme
        )[0]
    if isinstance(config, RungeKutta):
        return rk4_fields(samples, params.gamma, params.length_L, config)[0]
    if config is None:
        return propagate_noiseless(samples, params)
    raise ConfigError(f"unsupported integrator config {config!r}")


def roundtrip_error(input: ComplexSignal, params: ChannelParams, config=None) -> float:
    """Zero-noise forward then backward propagation; max |error| / max |input|.

    Backward propagation runs the same forward integrator on the conjugated
    field: conj(psi(L - s)) obeys the original equation.  ``config=None``
    uses the exact map.
    """
    x = np.asarray(input.samples, dtype=complex)
    y = _forward_noiseless(x, params, config)
    back = np.conj(_forward_noiseless(np.conj(y), params, config))
    scale = np.max(np.abs(x))
    if scale == 0:
        return float(np.max(np.abs(back)))
    return float(np.max(np.abs(back - x)) / scale)
