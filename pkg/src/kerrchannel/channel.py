"""Physical constants, sampling grids and symbol containers.

Units are fixed throughout the package: seconds, kilometres, watts and hertz.
Field amplitudes are in sqrt(W).  The noise parameter ``noise_Q`` is the noise
power per unit length per unit frequency, W/(km*Hz).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kerrchannel.errors import ConfigError, DomainError

DEFAULT_RANGE_THRESHOLD = 10.0


def _positive_finite(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise ConfigError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ChannelParams:
    """Fiber line constants.

    Parameters
    ----------
    gamma : float
        Kerr coefficient, 1/(km*W); zero gives the linear channel.
    length_L : float
        Line length, km.
    noise_Q : float
        Noise power per unit length and unit frequency, W/(km*Hz).
    slot_T0 : float
        Symbol slot duration, s.
    """

    gamma: float
    length_L: float
    noise_Q: float
    slot_T0: float

    def __post_init__(self) -> None:
        for name in ("length_L", "noise_Q", "slot_T0"):
            object.__setattr__(self, name, _positive_finite(name, getattr(self, name)))
        # gamma = 0 is the linear (calibration) channel
        g = float(self.gamma)
        if not (math.isfinite(g) and g >= 0.0):
            raise ConfigError(f"gamma must be non-negative and finite, got {g!r}")
        object.__setattr__(self, "gamma", g)
        if not math.isfinite(self.gamma * self.length_L):
            raise ConfigError("gamma*length_L overflows")

    @property
    def gamma_L(self) -> float:
        """Nonlinear phase per unit power over the full line, 1/W."""
        return self.gamma * self.length_L

    def linear_noise_power(self, delta: float) -> float:
        """Per-sample complex noise variance QL/delta accumulated over the line, W."""
        return self.noise_Q * self.length_L / delta

    def replace(self, **changes) -> "ChannelParams":
        values = dict(
            gamma=self.gamma,
            length_L=self.length_L,
            noise_Q=self.noise_Q,
            slot_T0=self.slot_T0,
        )
        values.update(changes)
        return ChannelParams(**values)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "length_L": self.length_L,
            "noise_Q": self.noise_Q,
            "slot_T0": self.slot_T0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelParams":
        return cls(
            gamma=data["gamma"],
            length_L=data["length_L"],
            noise_Q=data["noise_Q"],
            slot_T0=data["slot_T0"],
        )


def reference_channel(noise_Q: float = 1e-21) -> ChannelParams:
    """Line used throughout the numerical study: 800 km, gamma=1.25, T0=100 ps."""
    return ChannelParams(gamma=1.25, length_L=800.0, noise_Q=noise_Q, slot_T0=1e-10)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j*delta, j = -M .. M-1, over a window of length T."""

    total_T: float
    half_count_M: int

    def __post_init__(self) -> None:
        _positive_finite("total_T", self.total_T)
        if int(self.half_count_M) != self.half_count_M or self.half_count_M < 1:
            raise ConfigError(f"half_count_M must be a positive integer, got {self.half_count_M!r}")
        object.__setattr__(self, "half_count_M", int(self.half_count_M))

    @classmethod
    def for_slots(cls, slot_count: int, slot_T0: float, samples_per_slot: int) -> "TimeGrid":
        """Window of ``slot_count`` slots sampled ``samples_per_slot`` times per slot."""
        n = slot_count * samples_per_slot
        if n % 2:
            raise ConfigError("slot_count*samples_per_slot must be even (2M samples)")
        return cls(total_T=slot_count * slot_T0, half_count_M=n // 2)

    @property
    def spacing_delta(self) -> float:
        return self.total_T / (2 * self.half_count_M)

    @property
    def size(self) -> int:
        return 2 * self.half_count_M

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.half_count_M, self.half_count_M)

    @property
    def times(self) -> np.ndarray:
        return self.indices * self.spacing_delta


@dataclass(frozen=True)
class SymbolSequence:
    """Ordered complex slot coefficients C_k, sqrt(W)."""

    coefficients: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        if c.size < 1:
            raise DomainError("symbol sequence is empty")
        if not np.all(np.isfinite(c)):
            raise DomainError("symbol coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def count(self) -> int:
        return self.coefficients.size

    def __len__(self) -> int:
        return self.count


@dataclass(frozen=True)
class ComplexSignal:
    """Complex field sampled on a :class:`TimeGrid`."""

    grid: TimeGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        s = np.array(self.samples, dtype=complex)
        if s.shape[-1] != self.grid.size:
            raise ConfigError(
                f"signal has {s.shape[-1]} samples, grid expects {self.grid.size}"
            )
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def with_samples(self, samples: np.ndarray) -> "ComplexSignal":
        return ComplexSignal(self.grid, samples)


@dataclass(frozen=True)
class PowerRangeDiagnostics:
    snr_low_ratio: float
    snr_high_ratio: float
    in_range: bool
    threshold: float

    def describe(self) -> str:
        status = "ok" if self.in_range else "OUT OF RANGE"
        return (
            f"P*delta/(QL) = {self.snr_low_ratio:.4g}, "
            f"delta/(Q L^3 gamma^2 P) = {self.snr_high_ratio:.4g} "
            f"[threshold {self.threshold:g}: {status}]"
        )


def average_power(symbols: SymbolSequence) -> float:
    """Mean of |C_k|^2 over all slots, W."""
    c = symbols.coefficients if isinstance(symbols, SymbolSequence) else np.asarray(symbols)
    if c.size == 0:
        raise DomainError("average power of an empty sequence")
    return float(np.mean(c.real**2 + c.imag**2))


def validate_power_range(
    P: float,
    params: ChannelParams,
    delta: float,
    threshold: float = DEFAULT_RANGE_THRESHOLD,
) -> PowerRangeDiagnostics:
    """Check that P sits well inside QL/delta << P << delta/(Q L^3 gamma^2).

    Both sides are reported as ratios that must each reach ``threshold``;
    the comparison is inclusive.
    """
    if not P > 0:
        raise DomainError(f"power must be positive, got {P!r}")
    if threshold < 1:
        raise DomainError("threshold must be >= 1")
    q, length, g = params.noise_Q, params.length_L, params.gamma
    low = P * delta / (q * length)
    high = delta / (q * length**3 * g**2 * P) if g > 0 else math.inf
    return PowerRangeDiagnostics(
        snr_low_ratio=low,
        snr_high_ratio=high,
        in_range=bool(low >= threshold and high >= threshold),
        threshold=float(threshold),
    )
