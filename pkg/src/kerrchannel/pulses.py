"""Pulse envelopes, their moments and the transmitted waveform.

An envelope f(t) is real and normalised so that the integral of f^2 dt/T0 is 1.
Its moments n_s (integral of f^s dt/T0) control how the pulse shape enters the
channel statistics; capacity only sees the combination xi = sqrt(4 n6 - 3 n4^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate

from kerrchannel.channel import ComplexSignal, SymbolSequence, TimeGrid
from kerrchannel.errors import ConfigError, DomainError, LayoutError

KINDS = ("gaussian", "cos", "rect", "tabulated")
MOMENT_RTOL = 1e-9
MIN_SAMPLES_PER_SLOT = 16
# half-width of the Gaussian integration window, in units of T1
_GAUSS_WINDOW = 40.0


def cos_power_amplitude(n: int) -> float:
    """A_n such that A_n cos^n(pi t/T0) has unit energy on one slot."""
    return math.sqrt(4.0**n / math.comb(2 * n, n))


@dataclass(frozen=True)
class PulseEnvelope:
    """Real pulse shape f(t) attached to a slot of duration ``slot_T0``.

    Use the constructors :meth:`gaussian`, :meth:`cos_power`,
    :meth:`rectangular` and :meth:`tabulated` rather than the raw fields.
    Tabulated shapes are stored as nodes in units of T0 on [-1/2, 1/2].
    """

    kind: str
    slot_T0: float
    T1: Optional[float] = None
    n: Optional[int] = None
    nodes: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown envelope kind {self.kind!r}")
        if not self.slot_T0 > 0:
            raise ConfigError("slot_T0 must be positive")
        if self.kind == "gaussian" and not (self.T1 and self.T1 > 0):
            raise ConfigError("gaussian envelope needs T1 > 0")
        if self.kind == "cos" and not (
            isinstance(self.n, (int, np.integer)) and self.n > 0 and self.n % 2 == 0
        ):
            raise ConfigError(f"cos-power envelope needs an even positive n, got {self.n!r}")
        if self.kind == "tabulated":
            nodes = np.asarray(self.nodes, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 2:
                raise ConfigError("tabulated envelope needs matching 1-D nodes and values")
            if np.any(np.diff(nodes) <= 0):
                raise ConfigError("tabulated nodes must be strictly increasing")
            if nodes[0] < -0.5 - 1e-12 or nodes[-1] > 0.5 + 1e-12:
                raise ConfigError("tabulated nodes must lie in [-1/2, 1/2] (units of T0)")
            if not np.all(np.isfinite(values)):
                raise ConfigError("tabulated values must be finite")
            nodes.setflags(write=False)
            values.setflags(write=False)
            object.__setattr__(self, "nodes", nodes)
            object.__setattr__(self, "values", values)

    # constructors

    @classmethod
    def gaussian(cls, slot_T0: float, T1: float) -> "PulseEnvelope":
        return cls("gaussian", slot_T0, T1=float(T1))

    @classmethod
    def cos_power(cls, slot_T0: float, n: int) -> "PulseEnvelope":
        return cls("cos", slot_T0, n=int(n))

    @classmethod
    def rectangular(cls, slot_T0: float) -> "PulseEnvelope":
        return cls("rect", slot_T0)

    @classmethod
    def tabulated(
        cls, slot_T0: float, nodes, values, normalize: bool = True
    ) -> "PulseEnvelope":
        """Linearly interpolated shape; rescaled to unit energy unless told otherwise."""
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        env = cls("tabulated", slot_T0, nodes=nodes, values=values)
        if normalize:
            energy = _piecewise_linear_energy(env.nodes, env.values)
            if not energy > 0:
                raise ConfigError("tabulated envelope is identically zero")
            env = cls("tabulated", slot_T0, nodes=nodes, values=values / math.sqrt(energy))
        return env

    @classmethod
    def from_file(cls, path, slot_T0: float) -> "PulseEnvelope":
        """Load a two-column text table (t in units of T0, f); '#' starts a comment."""
        try:
            data = np.loadtxt(Path(path), comments="#", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read envelope table {path}: {exc}") from exc
        if data.shape[1] != 2:
            raise ConfigError(f"envelope table {path} must have exactly two columns")
        return cls.tabulated(slot_T0, data[:, 0], data[:, 1])

    # evaluation

    @property
    def is_compact(self) -> bool:
        return self.kind != "gaussian"

    def __call__(self, t) -> np.ndarray:
        """f(t) for times in seconds, relative to the slot centre."""
        return self.shape(np.asarray(t, dtype=float) / self.slot_T0)

    def shape(self, tau) -> np.ndarray:
        """f as a function of tau = t/T0."""
        tau = np.asarray(tau, dtype=float)
        if self.kind == "gaussian":
            r = self.slot_T0 / self.T1
            return math.sqrt(r / math.sqrt(math.pi)) * np.exp(-0.5 * (tau * r) ** 2)
        if self.kind == "cos":
            inside = np.abs(tau) <= 0.5
            out = cos_power_amplitude(self.n) * np.cos(np.pi * tau) ** self.n
            return np.where(inside, out, 0.0)
        if self.kind == "rect":
            # half-open slot so adjacent slots never share a sample; the
            # edges are shifted by a few ulp so t_j - c_k rounding cannot flip them
            eps = 1e-9
            return np.where((tau >= -0.5 - eps) & (tau < 0.5 - eps), 1.0, 0.0)
        return np.interp(tau, self.nodes, self.values, left=0.0, right=0.0)

    def quadrature_ranges(self) -> list[tuple[float, float]]:
        """Integration panels in tau covering the support."""
        if self.kind == "gaussian":
            w = _GAUSS_WINDOW * self.T1 / self.slot_T0
            return [(-w, 0.0), (0.0, w)]
        if self.kind == "tabulated":
            return list(zip(self.nodes[:-1], self.nodes[1:]))
        return [(-0.5, 0.0), (0.0, 0.5)]

    # serialisation

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "t0_over_t1": self.slot_T0 / self.T1}
        if self.kind == "cos":
            return {"kind": "cos", "n": self.n}
        if self.kind == "rect":
            return {"kind": "rect"}
        return {"kind": "tabulated", "nodes": self.nodes.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict, slot_T0: float) -> "PulseEnvelope":
        kind = data.get("kind")
        if kind == "gaussian":
            return cls.gaussian(slot_T0, slot_T0 / float(data.get("t0_over_t1", 10.0)))
        if kind == "cos":
            return cls.cos_power(slot_T0, int(data.get("n", 2)))
        if kind == "rect":
            return cls.rectangular(slot_T0)
        if kind == "tabulated":
            if "path" in data:
                return cls.from_file(data["path"], slot_T0)
            return cls.tabulated(slot_T0, data["nodes"], data["values"])
        raise ConfigError(f"unknown envelope descriptor {data!r}")


def _piecewise_linear_energy(nodes: np.ndarray, values: np.ndarray) -> float:
    # exact integral of the squared linear interpolant
    a, b = values[:-1], values[1:]
    return float(np.sum(np.diff(nodes) * (a * a + a * b + b * b) / 3.0))


def envelope_moment(envelope: PulseEnvelope, s: int) -> float:
    """n_s = integral of f^s(t) dt/T0 by adaptive quadrature.

    The Gaussian is integrated over the whole line (its tails are treated as
    part of its own slot); compact shapes over their support.
    """
    if int(s) != s or s <= 0 or s % 2:
        raise DomainError(f"moment order must be an even positive integer, got {s!r}")
    s = int(s)
    if envelope.kind == "tabulated" and s != 2:
        n2 = envelope_moment(envelope, 2)
        if abs(n2 - 1.0) > 1e-6:
            raise ConfigError(f"tabulated envelope is not normalised (n2 = {n2:.9g})")
    total = 0.0
    for lo, hi in envelope.quadrature_ranges():
        val, _ = integrate.quad(
            lambda tau: float(envelope.shape(tau)) ** s,
            lo,
            hi,
            epsabs=0.0,
            epsrel=MOMENT_RTOL / 10,
            limit=200,
        )
        total += val
    return total


def envelope_xi(n4: float, n6: float) -> float:
    """Shape parameter xi = sqrt(4 n6 - 3 n4^2)."""
    radicand = 4.0 * n6 - 3.0 * n4 * n4
    if not radicand > 0:
        raise DomainError(f"4*n6 - 3*n4^2 = {radicand!r} is not positive; moments are inconsistent")
    return math.sqrt(radicand)


@dataclass(frozen=True)
class EnvelopeMoments:
    n4: float
    n6: float
    n8: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("n4", "n6", "n8"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be positive, got {v!r}")

    @property
    def xi(self) -> float:
        return envelope_xi(self.n4, self.n6)

    @classmethod
    def unit(cls) -> "EnvelopeMoments":
        """Moments of the rectangular pulse; reduces coefficient formulas to per-sample ones."""
        return cls(1.0, 1.0, 1.0)

    def to_dict(self) -> dict:
        return {"n4": self.n4, "n6": self.n6, "n8": self.n8, "xi": self.xi}


def envelope_moments(envelope: PulseEnvelope) -> EnvelopeMoments:
    return EnvelopeMoments(
        n4=envelope_moment(envelope, 4),
        n6=envelope_moment(envelope, 6),
        n8=envelope_moment(envelope, 8),
    )


def check_overlap(envelope: PulseEnvelope) -> float:
    """Overlap integral of f(t) f(t - T0) dt/T0 between adjacent slots."""
    if envelope.is_compact:
        # supports [-T0/2, T0/2] and [T0/2, 3T0/2] meet in a single point
        return 0.0
    w = _GAUSS_WINDOW * envelope.T1 / envelope.slot_T0
    val, _ = integrate.quad(
        lambda tau: float(envelope.shape(tau) * envelope.shape(tau - 1.0)),
        0.5 - w,
        0.5 + w,
        points=[0.5],
        epsabs=0.0,
        epsrel=1e-10,
        limit=200,
    )
    return max(val, 0.0)


@dataclass(frozen=True)
class SlotLayout:
    """Explicit map from slot label to slot centre time.

    ``labels`` are the symbol indices (-N..N for an odd count, 0..K-1 otherwise)
    and ``centers`` the corresponding times k*T0 + offset, in seconds.
    """

    labels: np.ndarray
    centers: np.ndarray
    slot_T0: float

    @classmethod
    def centered(cls, count: int, slot_T0: float) -> "SlotLayout":
        """``count`` adjacent slots placed symmetrically about t = 0."""
        if count < 1:
            raise LayoutError("layout needs at least one slot")
        k = np.arange(count)
        labels = k - count // 2 if count % 2 else k
        centers = (k - (count - 1) / 2.0) * slot_T0
        return cls(labels=labels, centers=centers, slot_T0=slot_T0)

    @property
    def count(self) -> int:
        return len(self.centers)

    def check_fits(self, grid: TimeGrid) -> None:
        half = grid.total_T / 2
        lo = self.centers.min() - self.slot_T0 / 2
        hi = self.centers.max() + self.slot_T0 / 2
        tol = 1e-9 * grid.total_T
        if lo < -half - tol or hi > half + tol:
            raise LayoutError(
                f"slots span [{lo:.4g}, {hi:.4g}] s, outside the window [{-half:.4g}, {half:.4g}] s"
            )


def _check_resolution(envelope: PulseEnvelope, grid: TimeGrid, min_samples: int) -> None:
    per_slot = envelope.slot_T0 / grid.spacing_delta
    if per_slot < min_samples - 1e-9:
        raise ConfigError(
            f"grid resolves only {per_slot:.3g} samples per slot; need at least {min_samples}"
        )


def basis_matrix(
    envelope: PulseEnvelope,
    grid: TimeGrid,
    layout: SlotLayout,
    min_samples_per_slot: int = MIN_SAMPLES_PER_SLOT,
) -> np.ndarray:
    """Matrix F[k, j] = f(t_j - c_k) of shifted envelopes on the grid."""
    _check_resolution(envelope, grid, min_samples_per_slot)
    layout.check_fits(grid)
    t = grid.times
    return envelope(t[None, :] - layout.centers[:, None])


def synthesize_signal(
    symbols: SymbolSequence,
    envelope: PulseEnvelope,
    grid: TimeGrid,
    layout: Optional[SlotLayout] = None,
    min_samples_per_slot: int = MIN_SAMPLES_PER_SLOT,
) -> ComplexSignal:
    """X(t_j) = sum_k C_k f(t_j - c_k) on the grid."""
    if layout is None:
        layout = SlotLayout.centered(symbols.count, envelope.slot_T0)
    if layout.count != symbols.count:
        raise LayoutError(f"layout has {layout.count} slots, sequence has {symbols.count}")
    F = basis_matrix(envelope, grid, layout, min_samples_per_slot)
    return ComplexSignal(grid, symbols.coefficients @ F)
