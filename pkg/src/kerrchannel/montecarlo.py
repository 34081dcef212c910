"""Noise-realization ensembles over transmit, propagate and detect.

Each realization is one frame of ``pulses_per_frame`` slots, all at power P
with independent uniform phases.  Every detected coefficient is rotated into
the frame where its transmitted value is real and positive,

    u = C~ exp(-i arg C),  dx = Re u - |C|,  dy = Im u,

and the estimator keeps the raw power sums sum dx^a dy^b for a + b <= 4.
Those sums are exactly additive, so partial results merge without loss;
means, pseudo-variance, variance and their standard errors all follow from
them.  Reported correlators are therefore in the C-real frame, where the
analytic formulas are evaluated with C = |C|.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence, Union

import numpy as np

from kerrchannel import __version__
from kerrchannel import rng as rngmod
from kerrchannel.channel import ChannelParams, TimeGrid, validate_power_range
from kerrchannel.detection import project_rows, remove_nonlinear_phase
from kerrchannel.errors import ConfigError
from kerrchannel.propagation import (
    RungeKutta,
    SpectralNoise,
    SplitStep,
    TelegraphNoise,
    rk4_fields,
    split_step_fields,
)
from kerrchannel.pulses import PulseEnvelope, SlotLayout, basis_matrix

log = logging.getLogger(__name__)

# (a, b) exponents of the accumulated sums, a + b <= 4
MOMENT_INDEX = tuple((a, k - a) for k in range(5) for a in range(k, -1, -1))
_POS = {ab: i for i, ab in enumerate(MOMENT_INDEX)}


@dataclass(frozen=True)
class EnsembleConfig:
    """Monte Carlo run description.

    ``noise=None`` derives the noise from the channel: spectral noise for the
    split-step, telegraph noise of the same effective Q for RK4.
    """

    realizations: int
    pulses_per_frame: int
    powers: tuple
    integrator: Union[SplitStep, RungeKutta]
    noise: Optional[Union[SpectralNoise, TelegraphNoise]] = None
    base_seed: int = 0
    samples_per_slot: int = 256
    batch_size: int = 32

    def __post_init__(self) -> None:
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if int(self.realizations) != self.realizations or self.realizations < 2:
            raise ConfigError("realizations must be an integer >= 2")
        if int(self.pulses_per_frame) != self.pulses_per_frame or self.pulses_per_frame < 1:
            raise ConfigError("pulses_per_frame must be a positive integer")
        if not self.powers or not all(math.isfinite(p) and p > 0 for p in self.powers):
            raise ConfigError("powers must be a non-empty list of positive values")
        if not isinstance(self.integrator, (SplitStep, RungeKutta)):
            raise ConfigError(f"unsupported integrator {self.integrator!r}")
        if self.noise is not None and not isinstance(self.noise, (SpectralNoise, TelegraphNoise)):
            raise ConfigError(f"unsupported noise {self.noise!r}")
        if not 0 <= int(self.base_seed) < 2**64:
            raise ConfigError("base_seed must fit in 64 bits")
        if self.samples_per_slot < 1 or self.batch_size < 1:
            raise ConfigError("samples_per_slot and batch_size must be positive")

    def grid(self, slot_T0: float) -> TimeGrid:
        return TimeGrid.for_slots(self.pulses_per_frame, slot_T0, self.samples_per_slot)

    def replace(self, **changes) -> "EnsembleConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return EnsembleConfig(**values)

    def to_dict(self) -> dict:
        return {
            "realizations": int(self.realizations),
            "pulses_per_frame": int(self.pulses_per_frame),
            "powers": list(self.powers),
            "integrator": self.integrator.to_dict(),
            "noise": None if self.noise is None else self.noise.to_dict(),
            "base_seed": int(self.base_seed),
            "samples_per_slot": int(self.samples_per_slot),
            "batch_size": int(self.batch_size),
            "phase_distribution": "uniform",
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleConfig":
        try:
            return cls(
                realizations=data["realizations"],
                pulses_per_frame=data["pulses_per_frame"],
                powers=tuple(data["powers"]),
                integrator=integrator_from_dict(data["integrator"]),
                noise=None if data.get("noise") is None else noise_from_dict(data["noise"]),
                base_seed=data.get("base_seed", 0),
                samples_per_slot=data.get("samples_per_slot", 256),
                batch_size=data.get("batch_size", 32),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad ensemble config: {exc}") from exc


def integrator_from_dict(data: dict) -> Union[SplitStep, RungeKutta]:
    kind = data.get("variant")
    if kind == "split-step":
        return SplitStep(z_steps=data["z_steps"], scheme=data.get("scheme", "strang"))
    if kind == "rk4":
        return RungeKutta(segment_dz=data["segment_dz"], substeps=data.get("substeps", 50))
    raise ConfigError(f"unknown integrator variant {kind!r}")


def noise_from_dict(data: dict) -> Union[SpectralNoise, TelegraphNoise]:
    kind = data.get("variant")
    extra = {k: data[k] for k in ("seed", "stream_id") if k in data}
    if kind == "spectral":
        return SpectralNoise(Q=data["Q"], **extra)
    if kind == "telegraph":
        return TelegraphNoise(sigma2=data["sigma2"], segment_dz=data["segment_dz"], **extra)
    raise ConfigError(f"unknown noise variant {kind!r}")


def resolve_noise(config: EnsembleConfig, channel: ChannelParams, delta: float):
    """Noise spec for the run, checked against the channel's Q."""
    noise = config.noise
    integ = config.integrator
    if noise is None:
        if isinstance(integ, SplitStep):
            return SpectralNoise(channel.noise_Q)
        return TelegraphNoise.for_q(channel.noise_Q, delta, integ.segment_dz)
    if isinstance(integ, SplitStep) and not isinstance(noise, SpectralNoise):
        raise ConfigError("the split-step integrator needs spectral noise")
    if isinstance(integ, RungeKutta):
        if not isinstance(noise, TelegraphNoise):
            raise ConfigError("the RK4 integrator needs telegraph noise")
        if abs(noise.segment_dz - integ.segment_dz) > 1e-12 * integ.segment_dz:
            raise ConfigError("noise and integrator segment lengths differ")
    q = noise.effective_q(delta)
    if abs(q - channel.noise_Q) > 1e-9 * channel.noise_Q:
        raise ConfigError(f"noise effective Q = {q:.6g} differs from channel Q = {channel.noise_Q:.6g}")
    return noise


# estimator


def _neumaier(hi: np.ndarray, lo: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = hi + x
    big = np.abs(hi) >= np.abs(x)
    err = np.where(big, (hi - s) + x, (x - s) + hi)
    return s, lo + err


def _sums(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    dx = dx.ravel()
    dy = dy.ravel()
    px = [np.ones_like(dx), dx]
    py = [np.ones_like(dy), dy]
    for _ in range(3):
        px.append(px[-1] * dx)
        py.append(py[-1] * dy)
    return np.array([np.sum(px[a] * py[b]) for a, b in MOMENT_INDEX])


@dataclass(frozen=True)
class CorrelatorEstimate:
    """Mergeable moment accumulator for one power.

    ``sums`` (high part) and ``compensation`` (low part) hold sum dx^a dy^b in
    :data:`MOMENT_INDEX` order; ``identity`` names the configuration the
    samples come from.
    """

    power: float
    sums: np.ndarray
    compensation: np.ndarray
    sample_count: int
    identity: str = ""

    @classmethod
    def empty(cls, power: float, identity: str = "") -> "CorrelatorEstimate":
        z = np.zeros(len(MOMENT_INDEX))
        return cls(power=float(power), sums=z, compensation=z.copy(), sample_count=0, identity=identity)

    @classmethod
    def from_samples(cls, C_tilde, C, identity: str = "", power: float | None = None) -> "CorrelatorEstimate":
        """Estimate from detected and transmitted coefficients of equal |C|."""
        C = np.asarray(C, dtype=complex)
        mod = np.abs(C)
        power = float(np.mean(mod**2)) if power is None else float(power)
        if C.size and np.max(np.abs(mod**2 - power)) > 1e-9 * power:
            raise ConfigError("all transmitted coefficients must share one power")
        u = np.asarray(C_tilde, dtype=complex) * np.exp(-1j * np.angle(C))
        s = _sums(u.real - math.sqrt(power), u.imag)
        return cls(power=power, sums=s, compensation=np.zeros_like(s), sample_count=int(u.size), identity=identity)

    @property
    def modulus(self) -> float:
        return math.sqrt(self.power)

    def _total(self) -> np.ndarray:
        return self.sums + self.compensation

    def _raw(self) -> dict:
        if self.sample_count < 2:
            raise ConfigError("at least two samples are needed")
        t = self._total() / self.sample_count
        return {ab: t[_POS[ab]] for ab in MOMENT_INDEX}

    def _central(self) -> tuple[float, float, dict]:
        r = self._raw()
        mx, my = r[(1, 0)], r[(0, 1)]
        c = {}
        for a, b in MOMENT_INDEX:
            acc = 0.0
            for i in range(a + 1):
                for j in range(b + 1):
                    acc += comb(a, i) * comb(b, j) * (-mx) ** (a - i) * (-my) ** (b - j) * r[(i, j)]
            c[(a, b)] = acc
        return mx, my, c

    @property
    def mean_shift(self) -> complex:
        """<u> - |C|, i.e. exp(-i arg C) <C~ - C>."""
        mx, my, _ = self._central()
        return complex(mx, my)

    @property
    def mean_shift_stderr(self) -> complex:
        n = self.sample_count
        _, _, c = self._central()
        f = n / (n - 1)
        return complex(math.sqrt(f * c[(2, 0)] / n), math.sqrt(f * c[(0, 2)] / n))

    @property
    def pseudo_variance(self) -> complex:
        n = self.sample_count
        _, _, c = self._central()
        f = n / (n - 1)
        return complex(f * (c[(2, 0)] - c[(0, 2)]), 2.0 * f * c[(1, 1)])

    @property
    def pseudo_variance_stderr(self) -> complex:
        n = self.sample_count
        _, _, c = self._central()
        v_re = c[(4, 0)] - 2.0 * c[(2, 2)] + c[(0, 4)] - (c[(2, 0)] - c[(0, 2)]) ** 2
        v_im = 4.0 * (c[(2, 2)] - c[(1, 1)] ** 2)
        return complex(math.sqrt(max(v_re, 0.0) / n), math.sqrt(max(v_im, 0.0) / n))

    @property
    def variance(self) -> float:
        n = self.sample_count
        _, _, c = self._central()
        return n / (n - 1) * (c[(2, 0)] + c[(0, 2)])

    @property
    def variance_stderr(self) -> float:
        n = self.sample_count
        _, _, c = self._central()
        v = c[(4, 0)] + 2.0 * c[(2, 2)] + c[(0, 4)] - (c[(2, 0)] + c[(0, 2)]) ** 2
        return math.sqrt(max(v, 0.0) / n)

    def _power_moments(self) -> tuple[float, float]:
        # E|u|^2 and E|u|^4 from the raw sums; |u|^2 = P + 2|C| dx + dx^2 + dy^2
        r = self._raw()
        m = self.modulus
        p2 = {(0, 0): self.power, (1, 0): 2.0 * m, (2, 0): 1.0, (0, 2): 1.0}
        p4: dict = {}
        for (a1, b1), c1 in p2.items():
            for (a2, b2), c2 in p2.items():
                key = (a1 + a2, b1 + b2)
                p4[key] = p4.get(key, 0.0) + c1 * c2
        e2 = sum(c * r[ab] for ab, c in p2.items())
        e4 = sum(c * r[ab] for ab, c in p4.items())
        return e2, e4

    @property
    def output_power(self) -> float:
        """E|C~|^2."""
        return self._power_moments()[0]

    @property
    def output_power_stderr(self) -> float:
        e2, e4 = self._power_moments()
        return math.sqrt(max(e4 - e2 * e2, 0.0) / self.sample_count)

    def to_dict(self) -> dict:
        ms, mse = self.mean_shift, self.mean_shift_stderr
        pv, pve = self.pseudo_variance, self.pseudo_variance_stderr
        return {
            "power_W": self.power,
            "re_mean_shift": ms.real,
            "im_mean_shift": ms.imag,
            "re_pv": pv.real,
            "im_pv": pv.imag,
            "var": self.variance,
            "re_mean_shift_stderr": mse.real,
            "im_mean_shift_stderr": mse.imag,
            "re_pv_stderr": pve.real,
            "im_pv_stderr": pve.imag,
            "var_stderr": self.variance_stderr,
            "sample_count": self.sample_count,
        }


def merge_estimates(a: CorrelatorEstimate, b: CorrelatorEstimate) -> CorrelatorEstimate:
    """Pool two accumulators of the same configuration and power."""
    if a.identity != b.identity or a.power != b.power:
        raise ConfigError("cannot merge estimates of different configurations")
    if b.sample_count == 0:
        return a
    if a.sample_count == 0:
        return b
    hi, lo = _neumaier(a.sums, a.compensation + b.compensation, b.sums)
    return CorrelatorEstimate(
        power=a.power, sums=hi, compensation=lo, sample_count=a.sample_count + b.sample_count, identity=a.identity
    )


# ensemble driver


@dataclass(frozen=True)
class _Job:
    power_index: int
    power: float
    first: int
    stop: int
    identity: str
    base_seed: int
    integrator: Union[SplitStep, RungeKutta]
    noise: Union[SpectralNoise, TelegraphNoise]
    channel: ChannelParams
    delta: float
    basis: np.ndarray = field(repr=False)


def _run_chunk(job: _Job) -> CorrelatorEstimate:
    K = job.basis.shape[0]
    reals = range(job.first, job.stop)
    phases = np.stack(
        [rngmod.stream(job.base_seed, job.power_index, r, rngmod.PHASES).uniform(0.0, 2.0 * math.pi, K) for r in reals]
    )
    C = math.sqrt(job.power) * np.exp(1j * phases)
    fields = C @ job.basis
    gens = [rngmod.stream(job.base_seed, job.power_index, r, rngmod.NOISE) for r in reals]
    ch = job.channel
    if isinstance(job.integrator, SplitStep):
        out = split_step_fields(
            fields, ch.gamma, ch.length_L, job.delta, job.noise.Q,
            job.integrator.z_steps, job.integrator.scheme, gens,
        )
    else:
        out = rk4_fields(fields, ch.gamma, ch.length_L, job.integrator, job.noise.sigma2, gens)
    recovered = remove_nonlinear_phase(out, ch)
    C_tilde = project_rows(recovered, job.basis, job.delta, ch.slot_T0)
    return CorrelatorEstimate.from_samples(C_tilde, C, job.identity, job.power)


def ensemble_identity(config: EnsembleConfig, channel: ChannelParams, envelope: PulseEnvelope, power_index: int) -> str:
    d = config.to_dict()
    d.pop("realizations")
    d.pop("batch_size")
    d["power"] = config.powers[power_index]
    d["power_index"] = power_index
    d["channel"] = channel.to_dict()
    d["envelope"] = envelope.to_dict()
    return json.dumps(d, sort_keys=True)


def run_correlator_ensemble(
    config: EnsembleConfig,
    channel: ChannelParams,
    envelope: PulseEnvelope,
    workers: int = 1,
) -> dict:
    """Run the ensemble; returns {power: CorrelatorEstimate} in config order.

    Realizations are cut into fixed chunks of ``batch_size``; workers only
    change who computes a chunk, chunks are merged in order, so the result
    is the same for any ``workers``.
    """
    if abs(envelope.slot_T0 - channel.slot_T0) > 1e-12 * channel.slot_T0:
        raise ConfigError("envelope and channel disagree on the slot duration")
    grid = config.grid(channel.slot_T0)
    delta = grid.spacing_delta
    noise = resolve_noise(config, channel, delta)
    for P in config.powers:
        diag = validate_power_range(P, channel, delta)
        if not diag.in_range:
            warnings.warn(f"P = {P:.4g} W outside the intermediate power range: {diag.describe()}", stacklevel=2)
    layout = SlotLayout.centered(config.pulses_per_frame, channel.slot_T0)
    basis = basis_matrix(envelope, grid, layout)

    jobs = []
    for pi, P in enumerate(config.powers):
        ident = ensemble_identity(config, channel, envelope, pi)
        for first in range(0, config.realizations, config.batch_size):
            stop = min(first + config.batch_size, config.realizations)
            jobs.append(_Job(pi, P, first, stop, ident, int(config.base_seed), config.integrator, noise, channel, delta, basis))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]

    results = {}
    for job, part in zip(jobs, parts):
        acc = results.get(job.power_index) or CorrelatorEstimate.empty(job.power, job.identity)
        results[job.power_index] = merge_estimates(acc, part)
    return {config.powers[pi]: results[pi] for pi in range(len(config.powers))}


# persistence


def config_echo(config: EnsembleConfig, channel: ChannelParams, envelope: PulseEnvelope) -> dict:
    return {"ensemble": config.to_dict(), "channel": channel.to_dict(), "envelope": envelope.to_dict()}


def run_record(
    results: dict,
    config: EnsembleConfig,
    channel: ChannelParams,
    envelope: PulseEnvelope,
    wall_time: Optional[float] = None,
) -> dict:
    rec = config_echo(config, channel, envelope)
    rec["per_power"] = [est.to_dict() for est in results.values()]
    rec["wall_time_s"] = wall_time
    rec["code_version"] = __version__
    return rec


CSV_COLUMNS = (
    "power_W", "re_mean_shift", "im_mean_shift", "re_pv", "im_pv", "var",
    "re_mean_shift_stderr", "im_mean_shift_stderr", "re_pv_stderr", "im_pv_stderr", "var_stderr",
    "sample_count",
)


def format_float(x: float) -> str:
    return repr(float(x)) if not math.isfinite(x) else f"{x:.17g}"


def write_csv(rows: Sequence[dict], columns: Sequence[str], echo: dict, stream=None) -> str:
    """CSV with a '#'-prefixed JSON echo of the configuration; floats at 17 digits."""
    buf = io.StringIO() if stream is None else stream
    buf.write("# " + json.dumps(echo, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([v if isinstance(v, (int, str)) and not isinstance(v, bool) else format_float(v) for v in (row[c] for c in columns)])
    return buf.getvalue() if stream is None else ""


def results_csv(results: dict, config: EnsembleConfig, channel: ChannelParams, envelope: PulseEnvelope) -> str:
    return write_csv([e.to_dict() for e in results.values()], CSV_COLUMNS, config_echo(config, channel, envelope))


def timed_run(config: EnsembleConfig, channel: ChannelParams, envelope: PulseEnvelope, workers: int = 1):
    """Run the ensemble and return (results, run record)."""
    t = time.perf_counter()
    results = run_correlator_ensemble(config, channel, envelope, workers)
    wall = time.perf_counter() - t
    log.info("ensemble finished in %.1f s", wall)
    return results, run_record(results, config, channel, envelope, wall)
